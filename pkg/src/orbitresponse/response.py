"""Assembles the linear response from one orbit: shadowing + unstable parts.

The response of the long-time average of the observable to the map parameter
splits into a shadowing contribution SC = <shadow(dPhi), X> averaged along
the orbit, and an unstable contribution

    UC(W) = < phi_W * ratio >,
    ratio_n = -( div_v_x(n) + <nu_n, X(x_n)> ),

where nu is the adjoint shadow of the Jacobian-divergence covector series and
phi_W is the windowed (optionally mean-centered) sum of the observable.  The
ratio is the relative perturbation of the expanding-leaf conditional density;
its orbit average vanishes, which is reported as a diagnostic.  A tangent-mode
evaluation of UC via a second-order cube recursion provides an internal
cross-check (the two agree up to sampling and truncation error).
"""

from dataclasses import dataclass, field, asdict
from typing import Optional, Union
import json

import numpy as np

from . import _kernels
from ._util import batch_means, combine_replicas, spawn_seeds
from .orbit import generate_orbit
from .frames import compute_frames, lyapunov_exponents
from .divergence import (ScalarSeries, CovectorSeries, VectorSeries,
                         div_v_x_series, div_v_fstar_series)
from .shadowing import adjoint_shadow, forward_shadow, adjoint_residual

_CHUNK = 32768


# ---------------------------------------------------------------------------
# series helpers


def dphi_series(sys, orbit):
    vals = sys.eval_dobs(orbit.points)
    return CovectorSeries(values=vals, lo=0, hi=len(vals) - 1, label="dPhi")


def phi_w_series(phis, w, centered=True, phibar=None):
    """Windowed observable sum: phi_W[n] = sum_{|m|<=W} Phi(x_{n+m}) (- mean)."""
    n1 = phis.shape[0]
    pb = float(phis.mean()) if phibar is None else phibar
    base = phis - pb if centered else phis
    c = np.concatenate([[0.0], np.cumsum(base)])
    out = np.full(n1, np.nan)
    lo, hi = w, n1 - 1 - w
    idx = np.arange(lo, hi + 1)
    out[lo:hi + 1] = c[idx + w + 1] - c[idx - w]
    return ScalarSeries(values=out, lo=lo, hi=hi)


def unstable_density_ratio_series(sys, orbit, frames, nu, divx=None):
    """ratio_n = -(div_v_x(n) + <nu_n, X(x_n)>) on the joint window."""
    if divx is None:
        divx = div_v_x_series(sys, orbit, frames)
    lo = max(nu.lo, divx.lo)
    hi = min(nu.hi, divx.hi)
    x = sys.eval_pert(orbit.points[lo:hi + 1])
    vals = np.full(orbit.points.shape[0], np.nan)
    vals[lo:hi + 1] = -(divx.values[lo:hi + 1]
                        + np.einsum("ni,ni->n", nu.values[lo:hi + 1], x))
    return ScalarSeries(values=vals, lo=lo, hi=hi)


def unstable_density_ratio(sys, orbit, frames, nu, n):
    """Pointwise relative density perturbation at step n."""
    if not (nu.lo <= n <= nu.hi):
        raise ValueError(f"step {n} outside shadow window [{nu.lo}, {nu.hi}]")
    from .divergence import div_v_x

    x = sys.pert(orbit.points[n])
    return -(div_v_x(sys, orbit, frames, n) + float(nu.values[n] @ x))


# ---------------------------------------------------------------------------
# contributions


def shadowing_contribution(sys, orbit, frames, nu_phi=None, t_trunc=200):
    """SC = orbit average of <shadow(dPhi), X>, with batch-means stderr."""
    if nu_phi is None:
        nu_phi = adjoint_shadow(sys, orbit, frames, dphi_series(sys, orbit), t_trunc)
    lo, hi = nu_phi.lo, nu_phi.hi
    x = sys.eval_pert(orbit.points[lo:hi + 1])
    g = np.einsum("ni,ni->n", nu_phi.values[lo:hi + 1], x)
    return batch_means(g)


def uc_sweep(phis, ratio, w_max, centered=True, phibar=None):
    """UC(W) with batch-means stderr for every W in 0..w_max, shared interior."""
    n1 = phis.shape[0]
    pb = float(phis.mean()) if phibar is None else phibar
    base = phis - pb if centered else phis
    c = np.concatenate([[0.0], np.cumsum(base)])
    lo = max(ratio.lo, w_max)
    hi = min(ratio.hi, n1 - 1 - w_max)
    if hi <= lo:
        raise ValueError("window too short for the requested w_max")
    idx = np.arange(lo, hi + 1)
    r = ratio.values[lo:hi + 1]
    rows = []
    for w in range(w_max + 1):
        pw = c[idx + w + 1] - c[idx - w]
        uc, se = batch_means(pw * r)
        rows.append({"w": w, "uc": uc, "stderr": se})
    return rows


def unstable_contribution(sys, orbit, frames, nu, w, centered=True):
    """UC at a single window half-width w."""
    phis = sys.eval_obs(orbit.points)
    ratio = unstable_density_ratio_series(sys, orbit, frames, nu)
    row = uc_sweep(phis, ratio, w, centered=centered)[-1]
    return row["uc"], row["stderr"]


def detect_plateau(rows, run=3):
    """First W whose last `run` increments are below their stderr."""
    if len(rows) <= run:
        return rows[-1]["w"], False
    for i in range(run, len(rows)):
        flat = all(
            abs(rows[j]["uc"] - rows[j - 1]["uc"])
            <= max(rows[j]["stderr"], 1e-14)
            for j in range(i - run + 1, i + 1)
        )
        if flat:
            return rows[i]["w"], True
    return rows[-1]["w"], False


# ---------------------------------------------------------------------------
# pipeline and report


@dataclass
class RunConfig:
    n_steps: int = 100_000
    spinup: int = 1000
    seed: int = 0
    w_max: int = 32
    w_select: Union[str, int] = "plateau"  # "plateau" or a fixed integer
    t_trunc: int = 200
    n_replicas: int = 1
    centered: bool = True
    warmup: Optional[int] = None
    warmdown: Optional[int] = None


@dataclass
class ResponseReport:
    system: str
    params: dict
    config: dict
    sc: float
    sc_stderr: float
    uc: float
    uc_stderr: float
    total: float
    total_stderr: float
    w_used: int
    w_sweep: list
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)


class ResponsePipeline:
    """Orbit, frames, and the perturbation-independent shadowing covectors.

    The expensive passes (frames, Jacobian divergence, both adjoint shadows)
    do not depend on the perturbation field, so one pipeline serves any number
    of perturbations via response_for().
    """

    def __init__(self, sys, cfg, seed=None):
        self.sys = sys
        self.cfg = cfg
        self.orbit = generate_orbit(sys, seed=cfg.seed if seed is None else seed,
                                    spinup=cfg.spinup, n_steps=cfg.n_steps)
        self.frames = compute_frames(sys, self.orbit,
                                     seed=(cfg.seed if seed is None else seed),
                                     warmup=cfg.warmup, warmdown=cfg.warmdown)
        self.phis = sys.eval_obs(self.orbit.points)
        self.phibar = float(self.phis.mean())
        self.nu_phi = adjoint_shadow(sys, self.orbit, self.frames,
                                     dphi_series(sys, self.orbit), cfg.t_trunc)
        self.omega = div_v_fstar_series(sys, self.orbit, self.frames)
        self.nu_j = adjoint_shadow(sys, self.orbit, self.frames, self.omega,
                                   cfg.t_trunc)

    def response_for(self, variant=None):
        """Response parts for the pipeline's system or a perturbation variant.

        The variant must share the base dynamics (same orbit and frames);
        only its perturbation field (and gradient) is read.
        """
        sys = self.sys if variant is None else variant
        cfg = self.cfg
        divx = div_v_x_series(sys, self.orbit, self.frames)
        ratio = unstable_density_ratio_series(sys, self.orbit, self.frames,
                                              self.nu_j, divx=divx)
        lo, hi = self.nu_phi.lo, self.nu_phi.hi
        x = sys.eval_pert(self.orbit.points[lo:hi + 1])
        sc, sc_se = batch_means(
            np.einsum("ni,ni->n", self.nu_phi.values[lo:hi + 1], x))
        rows = uc_sweep(self.phis, ratio, cfg.w_max, centered=cfg.centered,
                        phibar=self.phibar)
        if cfg.w_select == "plateau":
            w_used, plateaued = detect_plateau(rows)
        else:
            w_used, plateaued = int(cfg.w_select), True
            if w_used > cfg.w_max:
                raise ValueError("w_select exceeds w_max")
        uc, uc_se = rows[w_used]["uc"], rows[w_used]["stderr"]
        zm, zm_se = batch_means(ratio.window())
        return {
            "sc": sc, "sc_stderr": sc_se, "uc": uc, "uc_stderr": uc_se,
            "total": sc + uc, "w_used": w_used, "plateaued": plateaued,
            "w_sweep": rows,
            "zero_mean": zm, "zero_mean_stderr": zm_se,
            "ratio": ratio,
        }


def _aggregate(sys, cfg, parts_list, seeds):
    sc, sc_se = combine_replicas([p["sc"] for p in parts_list],
                                 [p["sc_stderr"] for p in parts_list])
    uc, uc_se = combine_replicas([p["uc"] for p in parts_list],
                                 [p["uc_stderr"] for p in parts_list])
    totals = [p["sc"] + p["uc"] for p in parts_list]
    if len(totals) > 1:
        total, total_se = combine_replicas(
            totals, [0.0] * len(totals))
    else:
        total = totals[0]
        total_se = float(np.hypot(sc_se, uc_se))
    # average the sweep across replicas for the report
    w_max = cfg.w_max
    sweep = []
    for w in range(w_max + 1):
        vals = [p["w_sweep"][w]["uc"] for p in parts_list]
        ses = [p["w_sweep"][w]["stderr"] for p in parts_list]
        v, s = combine_replicas(vals, ses)
        sweep.append({"w": w, "uc": v, "stderr": s})
    zm, zm_se = combine_replicas([p["zero_mean"] for p in parts_list],
                                 [p["zero_mean_stderr"] for p in parts_list])
    w_used = int(round(np.median([p["w_used"] for p in parts_list])))
    diagnostics = {
        "zero_mean": zm,
        "zero_mean_stderr": zm_se,
        "plateaued": all(p["plateaued"] for p in parts_list),
        "per_replica": [
            {"seed": s, "sc": p["sc"], "uc": p["uc"], "total": p["sc"] + p["uc"]}
            for s, p in zip(seeds, parts_list)
        ],
    }
    return ResponseReport(
        system=sys.name, params=dict(sys.params),
        config={k: (v if not isinstance(v, np.integer) else int(v))
                for k, v in asdict(cfg).items()},
        sc=sc, sc_stderr=sc_se, uc=uc, uc_stderr=uc_se,
        total=total, total_stderr=total_se,
        w_used=w_used, w_sweep=sweep, diagnostics=diagnostics,
    )


def linear_response(sys, config=None, **overrides):
    """Full pipeline: orbit -> frames -> divergences -> shadows -> SC + UC.

    Accepts a RunConfig or keyword overrides of its fields.  With
    n_replicas > 1 independent orbits are run and aggregated; stderrs then
    come from the replica scatter.
    """
    cfg = config if config is not None else RunConfig()
    if overrides:
        cfg = RunConfig(**{**asdict(cfg), **overrides})
    seeds = spawn_seeds(cfg.seed, cfg.n_replicas)
    parts, lyap, resid = [], None, {}
    for s in seeds:
        pipe = ResponsePipeline(sys, cfg, seed=s)
        parts.append(pipe.response_for())
        if lyap is None:
            lyap = [float(v) for v in
                    lyapunov_exponents(pipe.frames.tangent)]
            resid = {
                "adjoint_residual_dphi": adjoint_residual(
                    pipe.frames, pipe.nu_phi, dphi_series(sys, pipe.orbit)),
                "adjoint_residual_divj": adjoint_residual(
                    pipe.frames, pipe.nu_j, pipe.omega),
                "shadow_tail_bound": pipe.nu_j.diag.get("tail_bound"),
                "warmup": pipe.frames.tangent.warmup,
                "warmdown": pipe.frames.adjoint.warmdown,
            }
    report = _aggregate(sys, cfg, parts, seeds)
    report.diagnostics.update({"lyapunov": lyap, **resid})
    return report


def linear_response_multi(sys, variants, config=None, **overrides):
    """Responses for several perturbation fields sharing one pipeline.

    `variants` are SystemDef copies (see with_perturbation) differing only in
    the perturbation field.  Returns one report per variant; the frames and
    shadowing covectors are computed once per replica.
    """
    cfg = config if config is not None else RunConfig()
    if overrides:
        cfg = RunConfig(**{**asdict(cfg), **overrides})
    seeds = spawn_seeds(cfg.seed, cfg.n_replicas)
    pipes = [ResponsePipeline(sys, cfg, seed=s) for s in seeds]
    reports = []
    for var in variants:
        parts = [p.response_for(var) for p in pipes]
        reports.append(_aggregate(var, cfg, parts, seeds))
    return reports


# ---------------------------------------------------------------------------
# tangent-mode unstable contribution and the equivalence check


@dataclass
class CubeDerivative:
    """State of the second-order cube recursion.

    a[n] is the pairing of the cube derivative with the unit expanding cube;
    columns[n] (dim, udim) are the perpendicular replaced columns against the
    frame at step n (Q^T columns = 0 in exact arithmetic).
    """

    a: ScalarSeries
    columns: np.ndarray
    lo: int
    hi: int


def tangent_unstable_contribution(sys, orbit, frames, w, t_trunc=200,
                                  centered=True, keep_state=False):
    """UC evaluated by the forward second-order cube recursion.

    Builds the shadow of the windowed perturbation field, drives the
    renormalized cube-derivative recursion with the Hessian-bilinear and
    perturbation-gradient sources, and averages the cube pairing.  Sign
    convention matches unstable_contribution.
    """
    phis = sys.eval_obs(orbit.points)
    pw = phi_w_series(phis, w, centered=centered)
    xser = sys.eval_pert(orbit.points)
    y = VectorSeries(values=pw.values[:, None] * xser, lo=pw.lo, hi=pw.hi,
                     label="phi_w X")
    vtil = forward_shadow(sys, orbit, frames, y, t_trunc)

    lo = vtil.lo
    hi = min(vtil.hi, frames.hi - 1, pw.hi - 1)
    n1 = orbit.points.shape[0]
    hseq = np.zeros((n1, sys.dim, sys.udim))
    if not sys.hess_zero:
        for s in range(lo, hi + 1, _CHUNK):
            e = min(s + _CHUNK, hi + 1)
            t = sys.eval_hess(orbit.points[s:e])
            hseq[s:e] = np.einsum("nabc,nbi,nc->nai", t, frames.q[s:e],
                                  vtil.values[s:e])
    g = sys.eval_dpert(orbit.points[lo:hi + 2])
    gq = np.zeros((n1, sys.dim, sys.udim))
    trgq = np.zeros(n1)
    gq[lo:hi + 2] = np.matmul(g, frames.q[lo:hi + 2])
    trgq[lo:hi + 2] = np.einsum("nmi,nmi->n", frames.q[lo:hi + 2], gq[lo:hi + 2])
    phiw_full = np.nan_to_num(pw.values, nan=0.0)

    aser, vser = _kernels.tangent_cube_scan(
        frames.jacs, frames.q, frames.r, hseq, gq, trgq, phiw_full, lo, hi + 1)
    use_lo = lo + t_trunc
    use_hi = hi + 1
    if use_hi - use_lo < 2:
        raise ValueError("window too short for the tangent recursion")
    uc, se = batch_means(-aser[use_lo:use_hi + 1])
    cube = None
    if keep_state:
        cube = CubeDerivative(
            a=ScalarSeries(values=aser, lo=lo, hi=use_hi),
            columns=vser, lo=lo, hi=use_hi)
    return uc, se, cube


@dataclass
class EquivalenceReport:
    defect: float
    tol: float
    uc_tangent: float
    uc_adjoint: float
    stderr_tangent: float
    stderr_adjoint: float

    @property
    def passed(self):
        return self.defect <= self.tol


def equivalence_check(sys, orbit=None, frames=None, w=8, t_trunc=200,
                      seed=0, n_steps=100_000, spinup=1000, centered=True):
    """Tangent vs adjoint unstable contribution on one shared orbit and W.

    The two evaluations agree in the exact limit; the reported tolerance is
    three combined standard errors (conservative: the estimators share the
    orbit, so their difference fluctuates less than independent runs would).
    """
    if orbit is None:
        orbit = generate_orbit(sys, seed=seed, spinup=spinup, n_steps=n_steps)
    if frames is None:
        frames = compute_frames(sys, orbit, seed=seed)
    omega = div_v_fstar_series(sys, orbit, frames)
    nu = adjoint_shadow(sys, orbit, frames, omega, t_trunc)
    uc_adj, se_adj = unstable_contribution(sys, orbit, frames, nu, w,
                                           centered=centered)
    uc_tan, se_tan, _ = tangent_unstable_contribution(
        sys, orbit, frames, w, t_trunc=t_trunc, centered=centered)
    comb = float(np.hypot(se_adj, se_tan))
    return EquivalenceReport(
        defect=abs(uc_tan - uc_adj), tol=3 * comb,
        uc_tangent=uc_tan, uc_adjoint=uc_adj,
        stderr_tangent=se_tan, stderr_adjoint=se_adj,
    )
