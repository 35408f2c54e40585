"""Expanding-subspace frames along an orbit and their dual co-frames.

A random orthonormal frame pushed through the Jacobians with a QR
renormalization at every step converges to the expanding subspace; the same
recursion run backward on transposed Jacobians yields the co-frame spanning
the annihilator of the contracting subspace.  Combining the two gives the
dual co-basis rows (the oblique projections onto the splitting).  QR factors
keep a positive diagonal so cube orientations stay consistent along the orbit.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from ._util import subspace_distance


class RankCollapseError(RuntimeError):
    """QR transfer factor lost rank: declared unstable dimension too large."""


class TangencyError(RuntimeError):
    """Near-tangency between the expanding and contracting subspaces."""


_DEFAULT_WARM = 100
_RANK_TOL = 1e-13
_COND_LIMIT = 1e8


@dataclass
class TangentFrame:
    """Per-step orthonormal basis of the expanding subspace.

    q[n] is (dim, udim); r[n] is the upper-triangular transfer factor with
    jac[n] q[n] = q[n+1] r[n]; logj[n] = log det r[n] is the one-step
    expansion of the unit cube.  Entries before `warmup` are unconverged.
    """

    q: np.ndarray
    r: np.ndarray
    logj: np.ndarray
    warmup: int
    seed: int

    @property
    def n_steps(self):
        return self.r.shape[0]

    @property
    def lo(self):
        return self.warmup

    @property
    def hi(self):
        return self.q.shape[0] - 1


@dataclass
class AdjointFrame:
    """Per-step orthonormal co-frame of the adjoint expanding subspace.

    Co-frame rows are stored as columns of a_t[n] (dim, udim); rt_t[n] is
    upper triangular with A[n+1] jac[n] = rt_t[n].T A[n].  etil[n] (udim, dim)
    is the dual co-basis with etil[n] q[n] = I on the joint converged window
    [lo, hi]; the last `warmdown` steps are unconverged.
    """

    a_t: np.ndarray
    rt_t: np.ndarray
    etil: np.ndarray
    warmdown: int
    seed: int
    lo: int = 0
    hi: int = 0


@dataclass
class FramePair:
    """Tangent and adjoint frames plus the cached Jacobian stack."""

    tangent: TangentFrame
    adjoint: AdjointFrame
    jacs: np.ndarray

    @property
    def lo(self):
        return self.adjoint.lo

    @property
    def hi(self):
        return self.adjoint.hi

    @property
    def q(self):
        return self.tangent.q

    @property
    def r(self):
        return self.tangent.r

    @property
    def etil(self):
        return self.adjoint.etil


def _random_frame(dim, udim, rng):
    q, r = np.linalg.qr(rng.standard_normal((dim, udim)))
    return q * np.sign(np.diag(r))


def _auto_warmup(r, n):
    """max(100, 20 / weakest expansion exponent), capped to a quarter window."""
    tail = r[n // 2:]
    lam = float(np.log(np.diagonal(tail, axis1=1, axis2=2)).mean(axis=0).min())
    w = _DEFAULT_WARM if lam <= 0 else max(_DEFAULT_WARM, int(np.ceil(20.0 / lam)))
    return min(w, max(1, n // 4))


def orbit_jacobians(sys, orbit):
    """Jacobian stack along the orbit: jacs[n] = Df(x_n), n = 0..N-1."""
    return sys.eval_jac(orbit.points[:-1])


def push_unstable(sys, orbit, seed=0, warmup=None, jacs=None):
    """Forward QR recursion seeded with a random orthonormal frame."""
    if jacs is None:
        jacs = orbit_jacobians(sys, orbit)
    rng = np.random.default_rng(seed)
    q0 = _random_frame(sys.dim, sys.udim, rng)
    qs, rs = _kernels.qr_forward(jacs, q0)
    diags = np.diagonal(rs, axis1=1, axis2=2)
    if diags.min() < _RANK_TOL:
        step = int(np.argwhere((diags < _RANK_TOL).any(axis=1))[0][0])
        raise RankCollapseError(
            f"transfer factor rank collapse at step {step}: "
            f"unstable dimension {sys.udim} too large or system degenerate"
        )
    w = _auto_warmup(rs, orbit.n_steps) if warmup is None else int(warmup)
    if 2 * w + 10 > orbit.n_steps:
        raise ValueError(f"orbit too short for warmup {w}")
    return TangentFrame(q=qs, r=rs, logj=np.log(diags).sum(axis=1),
                        warmup=w, seed=seed)


def pull_adjoint(sys, orbit, tangent, seed=0, warmdown=None, jacs=None):
    """Backward QR recursion on transposed Jacobians, plus dual co-basis rows.

    etil is defined on the joint window [tangent.warmup, N - warmdown]; a
    condition number above 1e8 in the frame overlap signals near-tangency of
    the expanding/contracting subspaces and aborts.
    """
    if jacs is None:
        jacs = orbit_jacobians(sys, orbit)
    rng = np.random.default_rng(seed)
    at_end = _random_frame(sys.dim, sys.udim, rng)
    ats, rts = _kernels.qr_backward(jacs, at_end)
    diags = np.diagonal(rts, axis1=1, axis2=2)
    if diags.min() < _RANK_TOL:
        step = int(np.argwhere((diags < _RANK_TOL).any(axis=1))[0][0])
        raise RankCollapseError(f"adjoint transfer rank collapse at step {step}")

    n = orbit.n_steps
    w = (_auto_warmup(rts[::-1], n) if warmdown is None else int(warmdown))
    lo, hi = tangent.warmup, n - w
    if lo >= hi:
        raise ValueError("no overlap between converged tangent and adjoint windows")

    aq = np.einsum("nmu,nmv->nuv", ats[lo:hi + 1], tangent.q[lo:hi + 1])
    dets = np.abs(np.linalg.det(aq))
    fro = np.linalg.norm(aq, axis=(1, 2))
    u = sys.udim
    rough = fro ** u / np.maximum(dets, 1e-300)
    worst = rough.argmax()
    if rough[worst] > _COND_LIMIT:
        cond = float(np.linalg.cond(aq[worst]))
        if cond > _COND_LIMIT:
            raise TangencyError(
                f"expanding/contracting subspaces nearly tangent at step "
                f"{lo + int(worst)} (cond {cond:.2e}); no uniform angle bound"
            )
    etil = np.full((n + 1, u, sys.dim), np.nan)
    etil[lo:hi + 1] = np.linalg.solve(aq, ats[lo:hi + 1].transpose(0, 2, 1))
    return AdjointFrame(a_t=ats, rt_t=rts, etil=etil, warmdown=w, seed=seed,
                        lo=lo, hi=hi)


def compute_frames(sys, orbit, seed=0, warmup=None, warmdown=None, jacs=None):
    """Tangent + adjoint frames with a shared Jacobian stack."""
    if jacs is None:
        jacs = orbit_jacobians(sys, orbit)
    tf = push_unstable(sys, orbit, seed=seed, warmup=warmup, jacs=jacs)
    af = pull_adjoint(sys, orbit, tf, seed=seed + 1, warmdown=warmdown, jacs=jacs)
    return FramePair(tangent=tf, adjoint=af, jacs=jacs)


def project(frames, n, v):
    """Oblique splitting v = v_expanding + v_contracting at step n."""
    if not (frames.lo <= n <= frames.hi):
        raise ValueError(f"step {n} outside converged window [{frames.lo}, {frames.hi}]")
    v = np.asarray(v, dtype=float)
    vu = frames.q[n] @ (frames.etil[n] @ v)
    return vu, v - vu


def lyapunov_exponents(tangent, lo=None, hi=None):
    """Time averages of the log QR diagonal, sorted descending."""
    lo = tangent.warmup if lo is None else lo
    hi = tangent.n_steps if hi is None else hi
    d = np.diagonal(tangent.r[lo:hi], axis1=1, axis2=2)
    return np.sort(np.log(d).mean(axis=0))[::-1]


def equivariance_defect(frames, n):
    """Grassmann distance between span q[n+1] and the pushed span of q[n]."""
    b = frames.jacs[n] @ frames.q[n]
    qb, _ = np.linalg.qr(b)
    return subspace_distance(qb, frames.q[n + 1])


def stable_test_vector(frames, n, k=40, rng=None):
    """A unit vector close to the contracting subspace at step n.

    Pulls a random vector at step n+k backward through inverse Jacobians:
    the contracting directions dominate under the inverse, so the result
    aligns with the contracting subspace at rate (contraction/expansion)^k.
    (Pushing it forward again would re-amplify rounding noise along the
    expanding directions, so the filter is one-sided.)
    """
    rng = np.random.default_rng(0) if rng is None else rng
    k = min(k, frames.hi - n)
    w = rng.standard_normal(frames.q.shape[1])
    for j in range(n + k - 1, n - 1, -1):
        w = np.linalg.solve(frames.jacs[j], w)
        w /= np.linalg.norm(w)
    return w


_MAGIC = b"FRM1"


def dump_frames(tangent, path):
    """Binary dump mirroring the orbit layout: header, then q and r stacks."""
    import struct

    q = np.ascontiguousarray(tangent.q, dtype="<f8")
    r = np.ascontiguousarray(tangent.r, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<QQQQ", q.shape[1], q.shape[2], q.shape[0],
                             tangent.warmup))
        fh.write(q.tobytes())
        fh.write(r.tobytes())


def load_frames(path):
    import struct

    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: not a frame dump")
        m, u, count, warmup = struct.unpack("<QQQQ", fh.read(32))
        q = np.frombuffer(fh.read(count * m * u * 8), dtype="<f8").reshape(count, m, u)
        r = np.frombuffer(fh.read((count - 1) * u * u * 8), dtype="<f8").reshape(
            count - 1, u, u)
    logj = np.log(np.diagonal(r, axis1=1, axis2=2)).sum(axis=1)
    return TangentFrame(q=q.astype(float), r=r.astype(float), logj=logj,
                        warmup=int(warmup), seed=-1)
