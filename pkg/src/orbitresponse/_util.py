"""Small shared numerics helpers: batch-means errors, seeds, subspace angles."""

import numpy as np


def wrap_coords(x, mask):
    """Reduce the masked coordinates of x into [0, 1)."""
    x = np.asarray(x, dtype=float)
    if mask is None:
        return x % 1.0
    out = x.copy()
    out[..., mask] %= 1.0
    return out


def batch_means(series):
    """Mean and standard error of a correlated scalar series.

    Uses non-overlapping batches of size ~sqrt(n); the batch-mean variance
    absorbs the autocorrelation of the series.
    """
    g = np.asarray(series, dtype=float)
    n = g.size
    if n < 2:
        return float(g.mean()) if n else 0.0, 0.0
    mean = float(g.mean())
    b = max(1, int(np.sqrt(n)))
    a = n // b
    if a < 2:
        return mean, float(g.std(ddof=1) / np.sqrt(n))
    bm = g[: a * b].reshape(a, b).mean(axis=1)
    se = float(bm.std(ddof=1) / np.sqrt(a))
    return mean, se


def combine_replicas(values, stderrs):
    """Aggregate independent replica estimates into (mean, stderr)."""
    v = np.asarray(values, dtype=float)
    if v.size == 1:
        return float(v[0]), float(stderrs[0])
    mean = float(v.mean())
    se = float(v.std(ddof=1) / np.sqrt(v.size))
    return mean, se


def spawn_seeds(seed, n):
    """Deterministic child seeds for replicas / sweep cells."""
    ss = np.random.SeedSequence(seed)
    return [int(s.generate_state(1)[0]) for s in ss.spawn(n)]


def subspace_distance(q1, q2):
    """sin of the largest principal angle between column spans (orthonormal inputs).

    Computed from the complement projection so that tiny angles are resolved
    to roundoff (the cosine route loses everything below sqrt(eps)).
    """
    resid = q1 - q2 @ (q2.T @ q1)
    s = np.linalg.svd(resid, compute_uv=False)
    return float(s.max()) if s.size else 0.0


def null_space(a, rtol=1e-10):
    """Orthonormal basis of the null space of a (rows annihilate the result)."""
    a = np.atleast_2d(a)
    u, s, vh = np.linalg.svd(a)
    rank = int((s > rtol * (s[0] if s.size else 1.0)).sum())
    return vh[rank:].T


def fit_loglog_slope(x, y):
    """Least-squares slope of log|y| against log x, ignoring zero entries."""
    x = np.asarray(x, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    keep = (y > 0) & (x > 0)
    if keep.sum() < 2:
        return 0.0
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])


def fit_semilog_slope(n, y, floor=1e-14):
    """Least-squares slope of log|y| against n, dropping entries below floor."""
    n = np.asarray(n, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    keep = y > floor
    if keep.sum() < 2:
        return 0.0
    return float(np.polyfit(n[keep], np.log(y[keep]), 1)[0])
