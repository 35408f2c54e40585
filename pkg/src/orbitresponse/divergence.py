"""Equivariant divergences of the perturbation field and of the Jacobian.

The scalar divergence contracts the perturbation gradient between the
expanding frame and its dual co-basis: trace(etil dX q).  The Jacobian
divergence is the covector

    omega_n(Y) = trace( r_n^{-1} etil_{n+1} H(Y) ),   H(Y)[:, i] = hvp(x_n, q_i, Y),

where the r_n^{-1} and etil_{n+1} factors realize the normalized pulled-back
co-frame at the next step divided by the one-step cube expansion.  A brute
force oracle evaluates the same contractions as literal determinant
expansions over a randomly sheared (non-orthonormal) basis.
"""

from dataclasses import dataclass, field

import numpy as np

from ._util import null_space

_CHUNK = 32768


@dataclass
class ScalarSeries:
    """A scalar per orbit step, defined on [lo, hi] (inclusive)."""

    values: np.ndarray
    lo: int
    hi: int

    def window(self):
        return self.values[self.lo:self.hi + 1]


@dataclass
class CovectorSeries:
    """A covector per orbit step, defined on [lo, hi] (inclusive)."""

    values: np.ndarray  # (N+1, dim)
    lo: int
    hi: int
    label: str = "custom"
    diag: dict = field(default_factory=dict)

    def window(self):
        return self.values[self.lo:self.hi + 1]


@dataclass
class VectorSeries:
    """A tangent vector per orbit step, defined on [lo, hi] (inclusive)."""

    values: np.ndarray  # (N+1, dim)
    lo: int
    hi: int
    label: str = "custom"
    diag: dict = field(default_factory=dict)

    def window(self):
        return self.values[self.lo:self.hi + 1]


def div_v_x_series(sys, orbit, frames):
    """trace(etil dX q) at every converged step."""
    lo, hi = frames.lo, frames.hi
    n1 = orbit.points.shape[0]
    out = np.full(n1, np.nan)
    g = sys.eval_dpert(orbit.points[lo:hi + 1])
    out[lo:hi + 1] = np.einsum(
        "num,nmv,nvu->n", frames.etil[lo:hi + 1], g, frames.q[lo:hi + 1]
    )
    return ScalarSeries(values=out, lo=lo, hi=hi)


def div_v_x(sys, orbit, frames, n):
    """Pointwise scalar divergence of the perturbation field at step n."""
    if not (frames.lo <= n <= frames.hi):
        raise ValueError(f"step {n} outside converged window")
    g = sys.dpert_jac(orbit.points[n])
    return float(np.trace(frames.etil[n] @ g @ frames.q[n]))


def div_v_fstar_series(sys, orbit, frames):
    """Jacobian divergence covector at steps [lo, hi-1] (needs the next co-basis)."""
    lo, hi = frames.lo, frames.hi - 1
    n1 = orbit.points.shape[0]
    out = np.full((n1, sys.dim), np.nan)
    if sys.hess_zero:
        out[lo:hi + 1] = 0.0
        return CovectorSeries(values=out, lo=lo, hi=hi, label="div^v f_*")
    for s in range(lo, hi + 1, _CHUNK):
        e = min(s + _CHUNK, hi + 1)
        t = sys.eval_hess(orbit.points[s:e])
        k = np.linalg.solve(frames.r[s:e], frames.etil[s + 1:e + 1])
        p2 = np.matmul(frames.q[s:e], k)  # (n, dim, dim)
        out[s:e] = np.einsum("nabc,nba->nc", t, p2)
    return CovectorSeries(values=out, lo=lo, hi=hi, label="div^v f_*")


def div_v_fstar(sys, orbit, frames, n):
    """Pointwise Jacobian-divergence covector at step n."""
    if not (frames.lo <= n <= frames.hi - 1):
        raise ValueError(f"step {n} outside converged window")
    if sys.hess_zero:
        return np.zeros(sys.dim)
    t = sys.eval_hess(orbit.points[n:n + 1])[0]
    k = np.linalg.solve(frames.r[n], frames.etil[n + 1])
    return np.einsum("abc,ba->c", t, frames.q[n] @ k)


# ---------------------------------------------------------------------------
# brute-force wedge-algebra oracle


def _sheared_basis(frames, n, rng, max_cond=50.0):
    """Random well-conditioned re-mixing of the frame columns at step n."""
    u = frames.q.shape[2]
    while True:
        s = rng.standard_normal((u, u))
        if np.linalg.cond(s) < max_cond:
            return frames.q[n] @ s


def _dual_rows(basis_u, stable):
    """Dual covectors of basis_u that annihilate the stable columns."""
    full = np.concatenate([basis_u, stable], axis=1)
    return np.linalg.inv(full)[: basis_u.shape[1]]


def wedge_oracle(sys, orbit, frames, n, mode, seed=0, y=None, shear=None):
    """Literal determinant-expansion evaluation of the divergences.

    Builds a random sheared basis of the expanding span, completes the dual
    basis against the (numerical) contracting subspace, and evaluates each
    replaced-slot wedge as an explicit u x u determinant.  Cost grows
    combinatorially; capped at dim <= 6, udim <= 3.
    """
    if sys.dim > 6 or sys.udim > 3:
        raise ValueError("wedge oracle capped at dim <= 6, udim <= 3")
    rng = np.random.default_rng(seed)
    u = sys.udim
    b = frames.q[n] @ shear if shear is not None else _sheared_basis(frames, n, rng)
    x = orbit.points[n]

    if mode == "div_v_x":
        stable = null_space(frames.adjoint.a_t[n].T)
        duals = _dual_rows(b, stable)
        g = sys.dpert_jac(x)
        total = 0.0
        for i in range(u):
            slots = b.copy()
            slots[:, i] = g @ b[:, i]
            total += float(np.linalg.det(duals @ slots))
        return total

    if mode == "div_v_fstar":
        if y is None:
            raise ValueError("div_v_fstar mode needs the direction vector y")
        pushed = frames.jacs[n] @ b
        stable1 = null_space(frames.adjoint.a_t[n + 1].T)
        duals1 = _dual_rows(pushed, stable1)
        total = 0.0
        for i in range(u):
            slots = pushed.copy()
            slots[:, i] = sys.hvp(x, b[:, i], np.asarray(y, dtype=float))
            total += float(np.linalg.det(duals1 @ slots))
        return total

    raise ValueError(f"unknown mode {mode!r}")


def wedge_oracle_covector(sys, orbit, frames, n, seed=0, shear=None):
    """Jacobian-divergence covector assembled from the oracle, one basis direction at a time."""
    out = np.empty(sys.dim)
    for c in range(sys.dim):
        e_c = np.zeros(sys.dim)
        e_c[c] = 1.0
        out[c] = wedge_oracle(sys, orbit, frames, n, "div_v_fstar", seed=seed,
                              y=e_c, shear=shear)
    return out
