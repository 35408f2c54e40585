"""Shadowing operators: bounded solutions of the inhomogeneous linearized equations.

The adjoint operator maps a covector series omega to the unique bounded nu
with nu_m = Df(x_m)^T nu_{m+1} + omega_m; its forward counterpart maps a
vector series y to the bounded v with v_{m+1} = Df(x_m) v_m + y_{m+1}.  Both
are evaluated by a split-propagate scan: the contracting component is summed
in its stable direction with a re-projection every step, the expanding
component is carried as frame coefficients and propagated with the inverse
triangular transfer factor.  Values within t_trunc of the window ends are
discarded; the scans themselves satisfy the defining equations to roundoff,
truncation only affects closeness to the infinite-window solution.
"""

import numpy as np

from . import _kernels
from ._util import fit_semilog_slope
from .divergence import CovectorSeries, VectorSeries


def _windows(frames, series, t_trunc):
    lo = max(frames.lo, series.lo)
    hi = min(frames.hi, series.hi)
    if hi - lo < 2 * t_trunc:
        raise ValueError(
            f"window [{lo}, {hi}] shorter than 2 * t_trunc = {2 * t_trunc}"
        )
    return lo, hi


def _contraction_rates(frames, lo, hi, probes=3, span=200):
    """Measured decay rates of the two homogeneous recursions.

    Runs the truncation-error propagators from random data over a short span:
    backward stable pullback with re-projection, and forward coefficient
    transport with the inverse transfer factor.  Returns per-step contraction
    factors (< 1 for a hyperbolic splitting).
    """
    rng = np.random.default_rng(0)
    span = min(span, hi - lo - 1)
    rates_s, rates_u = [], []
    for _ in range(probes):
        s = rng.standard_normal(frames.q.shape[1])
        norms = []
        for k in range(hi, hi - span, -1):
            w = frames.jacs[k - 1].T @ s
            w = w - (w @ frames.q[k - 1]) @ frames.etil[k - 1]
            s = w
            norms.append(np.linalg.norm(s))
        rates_s.append(np.exp(fit_semilog_slope(np.arange(len(norms)), norms)))
        c = rng.standard_normal(frames.q.shape[2])
        norms = []
        for k in range(lo, lo + span):
            c = np.linalg.solve(frames.adjoint.rt_t[k], c)
            norms.append(np.linalg.norm(c))
        rates_u.append(np.exp(fit_semilog_slope(np.arange(len(norms)), norms)))
    return float(np.median(rates_s)), float(np.median(rates_u))


def adjoint_shadow(sys, orbit, frames, omega, t_trunc=200):
    """Adjoint shadowing covector of a covector series.

    Returns nu on [lo + t_trunc, hi - t_trunc]; diagnostics carry the
    measured contraction factors and the implied truncation tail bound.
    """
    lo, hi = _windows(frames, omega, t_trunc)
    om = np.nan_to_num(omega.values, nan=0.0)
    nu = _kernels.adjoint_shadow_scan(
        frames.jacs, frames.q, frames.adjoint.a_t, frames.adjoint.rt_t,
        frames.etil, om, lo, hi,
    )
    rate_s, rate_u = _contraction_rates(frames, lo, hi)
    scale = float(np.max(np.linalg.norm(omega.values[lo:hi + 1], axis=1)))
    diag = {
        "rate_stable": rate_s,
        "rate_unstable": rate_u,
        "tail_bound": scale * max(rate_s, rate_u) ** t_trunc,
        "t_trunc": t_trunc,
    }
    return CovectorSeries(values=nu, lo=lo + t_trunc, hi=hi - t_trunc,
                          label=f"shadow({omega.label})", diag=diag)


def forward_shadow(sys, orbit, frames, y, t_trunc=200):
    """Forward shadowing vector of a vector series (mirror of adjoint_shadow)."""
    lo, hi = _windows(frames, y, t_trunc)
    yv = np.nan_to_num(y.values, nan=0.0)
    v = _kernels.forward_shadow_scan(
        frames.jacs, frames.q, frames.r, frames.etil, yv, lo, hi,
    )
    return VectorSeries(values=v, lo=lo + t_trunc, hi=hi - t_trunc,
                        label=f"shadow({y.label})")


def adjoint_residual(frames, nu, omega):
    """max_m |nu_m - Df^T nu_{m+1} - omega_m| over the trusted window."""
    lo, hi = nu.lo, nu.hi
    pred = np.einsum("nji,nj->ni", frames.jacs[lo:hi], nu.values[lo + 1:hi + 1])
    res = nu.values[lo:hi] - pred - omega.values[lo:hi]
    return float(np.max(np.linalg.norm(res, axis=1)))


def forward_residual(frames, v, y):
    """max_m |v_{m+1} - Df v_m - y_{m+1}| over the trusted window."""
    lo, hi = v.lo, v.hi
    pred = np.einsum("nij,nj->ni", frames.jacs[lo:hi], v.values[lo:hi])
    res = v.values[lo + 1:hi + 1] - pred - y.values[lo + 1:hi + 1]
    return float(np.max(np.linalg.norm(res, axis=1)))
