"""Independent ground-truth computations used to verify the fast pipeline.

Finite differences of long-run averages, the (exploding) ensemble series, a
1-d transfer-operator discretization on bins, a grid check of the smooth-
density mass-continuity identity, truncated two-sided sums for the density
perturbation, the relative decay of pushed cube derivatives, and the error
scaling of zeroth-order elements on a singular product measure.
"""

import numpy as np

from . import _kernels
from ._util import (batch_means, combine_replicas, spawn_seeds, null_space,
                    fit_loglog_slope, fit_semilog_slope)
from .orbit import generate_orbit
from .divergence import div_v_x_series, div_v_fstar_series, ScalarSeries


# ---------------------------------------------------------------------------
# finite-difference response


def fd_response(sys, dgamma=1e-3, n_steps=100_000, n_orbits=8, seed=0,
                spinup=1000, richardson=False):
    """Central finite difference of the long-run observable average.

    Each of the n_orbits pairs runs the +dgamma and -dgamma maps from a
    common initial point; the stderr is taken over the pair estimates.
    """
    seeds = spawn_seeds(seed, n_orbits)
    vals, vals2 = [], []
    for s in seeds:
        rng = np.random.default_rng(s)
        x0 = sys.sample_chart(rng)
        pair = {}
        gammas = (dgamma, -dgamma, 2 * dgamma, -2 * dgamma) if richardson \
            else (dgamma, -dgamma)
        for g in gammas:
            orb = generate_orbit(sys, x_init=x0, spinup=spinup,
                                 n_steps=n_steps, gamma=g)
            pair[g] = float(sys.eval_obs(orb.points).mean())
        vals.append((pair[dgamma] - pair[-dgamma]) / (2 * dgamma))
        if richardson:
            vals2.append((pair[2 * dgamma] - pair[-2 * dgamma]) / (4 * dgamma))
    if n_orbits == 1:
        val = vals[0]
        se = float("nan")
    else:
        val, se = combine_replicas(vals, [0.0] * len(vals))
    detail = {"pairs": vals, "dgamma": dgamma}
    if richardson:
        v2 = float(np.mean(vals2))
        detail["value_2h"] = v2
        detail["richardson_bias_estimate"] = abs(val - v2) / 3.0
    return val, se, detail


# ---------------------------------------------------------------------------
# ensemble (pushforward) series


def ensemble_response(sys, orbit, horizon):
    """Terms of the pushforward response series, up to the given horizon.

    term[m] averages <dPhi(x_n), Df^m X(x_{n-m})> along the orbit.  For
    chaotic maps the terms are eventually dominated by sampling noise that
    grows like the top expansion rate, which is the point of this oracle.
    """
    pts = orbit.points
    jacs = sys.eval_jac(pts[:-1])
    dphis = sys.eval_dobs(pts)
    w = sys.eval_pert(pts)
    n1 = pts.shape[0]
    terms = np.empty(horizon + 1)
    for m in range(horizon + 1):
        terms[m] = float(np.einsum("ni,ni->n", dphis[m:], w[m:]).mean())
        if m < horizon:
            w = np.concatenate(
                [np.zeros((m + 1, sys.dim)),
                 np.einsum("nij,nj->ni", jacs[m:], w[m:-1])], axis=0)
    return {"terms": terms, "partial_sums": np.cumsum(terms)}


# ---------------------------------------------------------------------------
# 1-d transfer operator on bins


def _distribute(lifted, n_bins, n_sub):
    """Row-stochastic bin-transition matrix from lifted edge images.

    lifted holds the increasing unwrapped images of the global sub-cell
    edges; each sub-cell's mass spreads linearly over the bins its image
    interval covers (mod 1).
    """
    nb = int(n_bins)
    p = np.zeros((nb, nb))
    u0 = lifted[:-1] * nb
    u1 = lifted[1:] * nb
    if np.any(u1 <= u0):
        raise ValueError("lift is not increasing; refine sub-cells or shrink gamma")
    rows = np.repeat(np.arange(nb), n_sub)
    j0 = np.floor(u0).astype(np.int64)
    j1 = np.floor(u1).astype(np.int64)
    span = int((j1 - j0).max())
    length = u1 - u0
    frac = 1.0 / n_sub
    for t in range(span + 1):
        lo = np.maximum(u0, j0 + t)
        hi = np.minimum(u1, j0 + t + 1.0)
        wgt = np.clip(hi - lo, 0.0, None) / length * frac
        np.add.at(p, (rows, (j0 + t) % nb), wgt)
    return p


def ulam_build_from_lift(lift, n_bins, n_sub=64):
    """Bin-transition matrix for a circle map given by an increasing lift."""
    edges = np.linspace(0.0, 1.0, n_bins * n_sub + 1)
    return _distribute(np.asarray(lift(edges), dtype=float), n_bins, n_sub)


def ulam_build(sys1d, n_bins, gamma=0.0, n_sub=64):
    """Bin-transition matrix of a 1-d expanding torus map.

    The wrapped map is evaluated on the global sub-cell edges and unwrapped
    by continuity (valid while increments per sub-cell stay below 1).
    """
    if sys1d.dim != 1:
        raise ValueError("transfer-operator oracle is 1-d only")
    edges = np.linspace(0.0, 1.0, n_bins * n_sub + 1)
    b = sys1d.eval_base(edges[:, None])[:, 0]
    if gamma != 0.0:
        b = b + gamma * sys1d.eval_pert(b[:, None])[:, 0]
        b %= 1.0
    dy = np.diff(b)
    offsets = np.concatenate([[0.0], np.cumsum(dy < -1e-9)])
    return _distribute(b + offsets, n_bins, n_sub)


def ulam_density(p, tol=1e-13, max_iter=200_000):
    """Stationary bin masses by power iteration (and the density values)."""
    nb = p.shape[0]
    pi = np.full(nb, 1.0 / nb)
    for _ in range(max_iter):
        nxt = pi @ p
        if np.abs(nxt - pi).max() < tol:
            pi = nxt
            break
        pi = nxt
    else:
        raise RuntimeError("power iteration did not converge")
    pi /= pi.sum()
    return pi, pi * nb


def ulam_response(sys1d, n_bins, n_terms=30, dgamma=1e-3, n_sub=64):
    """Operator-formula response on bins: sum_m <Phi o f^m, dL h>.

    dL is the central gamma-difference of the bin-transition matrix applied
    to the stationary masses; the Koopman powers push the observable.
    """
    p0 = ulam_build(sys1d, n_bins, 0.0, n_sub)
    pi, _ = ulam_density(p0)
    pp = ulam_build(sys1d, n_bins, dgamma, n_sub)
    pm = ulam_build(sys1d, n_bins, -dgamma, n_sub)
    dmass = pi @ (pp - pm) / (2 * dgamma)
    mids = (np.arange(n_bins) + 0.5) / n_bins
    vec = sys1d.eval_obs(mids[:, None])
    terms = np.empty(n_terms)
    for m in range(n_terms):
        terms[m] = float(dmass @ vec)
        vec = p0 @ vec
    tail = abs(terms[-1]) / max(1e-300, 1.0 - abs(terms[-1]) / max(1e-300, abs(terms[-2]))) \
        if n_terms >= 2 and abs(terms[-2]) > abs(terms[-1]) else abs(terms[-1])
    return float(terms.sum()), {"terms": terms, "tail_estimate": float(tail)}


def lemma1_check(h_fn, x_fn, neg_div_hx_fn, n_bins, dgamma=1e-6, n_sub=64):
    """Grid check of the mass-continuity identity for a fixed smooth density.

    Transports the density h by the near-identity maps x -> x + gamma X(x)
    on bins, differences in gamma, and compares against the analytic
    -(h X)' at bin midpoints.  Returns the sup-norm defect and the profiles.
    """
    edges = np.linspace(0.0, 1.0, n_bins * n_sub + 1)
    xs = x_fn(edges)
    pp = _distribute(edges + dgamma * xs, n_bins, n_sub)
    pm = _distribute(edges - dgamma * xs, n_bins, n_sub)
    sub_mids = 0.5 * (edges[:-1] + edges[1:])
    mass = h_fn(sub_mids).reshape(n_bins, n_sub).mean(axis=1) / n_bins
    dlh = (mass @ pp - mass @ pm) / (2 * dgamma) * n_bins
    mids = (np.arange(n_bins) + 0.5) / n_bins
    target = neg_div_hx_fn(mids)
    defect = float(np.max(np.abs(dlh - target)))
    return defect, {"mids": mids, "dlh": dlh, "target": target}


# ---------------------------------------------------------------------------
# truncated two-sided series for the density perturbation


def expanded_divergence(sys, orbit, frames, t_sum, lo=None, hi=None):
    """Truncated expansion of the relative density perturbation (positive sign).

    out[n] = div_v_x(n) - (pullback sum over the expanding part of X)
                        + (pushforward sum over the contracting part of X).
    Matches -(ratio) from the shadowing assembly up to the geometric tail.
    """
    omega = div_v_fstar_series(sys, orbit, frames)
    divx = div_v_x_series(sys, orbit, frames)
    xser = sys.eval_pert(orbit.points)
    lo = frames.lo + t_sum if lo is None else lo
    hi = min(frames.hi - 1 - t_sum, orbit.n_steps - 1 - t_sum) if hi is None else hi
    if hi <= lo:
        raise ValueError("window too short for the requested truncation length")
    om = np.nan_to_num(omega.values, nan=0.0)
    dx = np.nan_to_num(divx.values, nan=0.0)
    out = _kernels.expanded_divergence_scan(
        frames.jacs, frames.q, frames.r, frames.etil, om, dx, xser,
        int(t_sum), int(lo), int(hi))
    return ScalarSeries(values=out, lo=lo, hi=hi)


def expanded_vs_shadow_defect(sys, orbit, frames, t_sum, nu, ratio=None):
    """Pointwise defect |expanded + ratio| on the overlap window."""
    from .response import unstable_density_ratio_series

    if ratio is None:
        ratio = unstable_density_ratio_series(sys, orbit, frames, nu)
    exp_series = expanded_divergence(sys, orbit, frames, t_sum)
    lo = max(exp_series.lo, ratio.lo)
    hi = min(exp_series.hi, ratio.hi)
    d = np.abs(exp_series.values[lo:hi + 1] + ratio.values[lo:hi + 1])
    return d, (lo, hi)


# ---------------------------------------------------------------------------
# relative decay of pushed cube derivatives


def decay_check(sys, orbit, frames, n_probe=8, n_push=12, seed=0,
                stable_columns=True):
    """Fitted decay exponent of the gap between pushed cube pairings and
    the co-frame value.

    For replaced columns in the contracting subspace the co-frame value is
    zero and the gap contracts at (contraction * inverse expansion) per
    step.  Returns the fitted per-step log-slope and the gap table.
    """
    rng = np.random.default_rng(seed)
    lo = frames.lo + 5
    hi = frames.hi - n_push - 1
    if hi <= lo:
        raise ValueError("window too short for decay check")
    u = sys.udim
    gaps = np.zeros((n_probe, n_push + 1))
    for p in range(n_probe):
        n = int(rng.integers(lo, hi))
        if stable_columns:
            sb = null_space(frames.adjoint.a_t[n].T)
            coef = rng.standard_normal((sb.shape[1], u))
            cols = sb @ coef
        else:
            cols = frames.q[n] @ np.diag(rng.standard_normal(u))
        norms = np.linalg.norm(cols, axis=0)
        cols = cols / np.where(norms > 0, norms, 1.0)
        eps_r = float(np.trace(frames.etil[n] @ cols))
        w = cols.copy()
        rprod = np.eye(u)
        for k in range(n_push + 1):
            val = float(np.trace(np.linalg.solve(rprod, frames.q[n + k].T @ w)))
            gaps[p, k] = abs(val - eps_r)
            if k < n_push:
                w = frames.jacs[n + k] @ w
                rprod = frames.r[n + k] @ rprod
    med = np.exp(np.median(np.log(np.maximum(gaps, 1e-300)), axis=0))
    slope = fit_semilog_slope(np.arange(n_push + 1), med, floor=1e-13)
    return slope, {"gaps": gaps, "median": med}


# ---------------------------------------------------------------------------
# error scaling of zeroth-order elements on a singular product measure


def _gauss_legendre(n, a, b):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def ulam_error_scaling(a_dim, m_dim, b_values, phi=None, n_quad=4):
    """Integration error of a uniform-cell density against a measure
    concentrated on {0}^(M-a) x T^a, for a stack of cell widths.

    phi takes an (n, M) stack; the default is |x|^2.  Returns the fitted
    order in the cell width and the per-width error table.
    """
    if not (0 <= a_dim <= m_dim <= 3):
        raise ValueError("scaling study limited to dimensions <= 3")
    if phi is None:
        phi = lambda z: np.sum(z * z, axis=1)
    t_nodes, t_wgts = _gauss_legendre(n_quad, -0.5, 0.5)
    errs = []
    for b in b_values:
        c_nodes, c_wgts = _gauss_legendre(n_quad, -b / 2.0, b / 2.0)
        c_wgts = c_wgts / b  # normalized cell density
        axes_nodes = [c_nodes] * (m_dim - a_dim) + [t_nodes] * a_dim
        axes_wgts = [c_wgts] * (m_dim - a_dim) + [t_wgts] * a_dim
        grids = np.meshgrid(*axes_nodes, indexing="ij") if axes_nodes else []
        pts = np.stack([g.ravel() for g in grids], axis=1) if grids else \
            np.zeros((1, 0))
        wgt = np.ones(pts.shape[0])
        for ax, w in enumerate(axes_wgts):
            shape = [1] * m_dim
            shape[ax] = len(w)
            wgt = wgt * np.broadcast_to(
                np.asarray(w).reshape(shape),
                [len(a) for a in axes_nodes]).ravel()
        pts0 = pts.copy()
        pts0[:, : m_dim - a_dim] = 0.0
        errs.append(float(np.sum(wgt * (phi(pts) - phi(pts0)))))
    slope = fit_loglog_slope(np.asarray(b_values), np.asarray(errs))
    return slope, {"b": np.asarray(b_values), "error": np.asarray(errs)}
