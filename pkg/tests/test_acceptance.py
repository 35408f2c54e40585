"""Acceptance suite: every shipped claim at its stated tolerance, desk scale.

Each test prints one PASS/FAIL line (also echoed in the terminal summary).
Several reference setups have exactly zero response through conjugacy or
parity; where a criterion benefits from a genuinely nonzero response, a
supplementary configuration (phase-shifted sawtooth, mixed catmap field) is
checked on top of the pinned one.
"""

import time

import numpy as np
import pytest

import orbitresponse as orp
from orbitresponse.systems import with_perturbation
from orbitresponse.response import (RunConfig, ResponsePipeline, linear_response,
                                    equivalence_check,
                                    unstable_density_ratio_series)
from orbitresponse.divergence import div_v_fstar_series, div_v_x_series
from orbitresponse.shadowing import (adjoint_shadow, forward_shadow,
                                     adjoint_residual, forward_residual)
from orbitresponse.oracles import (fd_response, decay_check, lemma1_check,
                                   ulam_error_scaling, expanded_vs_shadow_defect)
from orbitresponse._util import fit_loglog_slope, batch_means

from conftest import record_criterion

TP = 2 * np.pi
LAM_U = (3 + np.sqrt(5)) / 2
LAM_S = (3 - np.sqrt(5)) / 2


def _comb(*ses):
    return float(np.sqrt(sum(s * s for s in ses)))


def _mixed_cat_field(sys_def):
    return with_perturbation(
        sys_def,
        pert=lambda z: np.array([np.sin(TP * z[1]), np.cos(TP * (z[0] + z[1]))]),
        dpert_jac=lambda z: np.array([
            [0.0, TP * np.cos(TP * z[1])],
            [-TP * np.sin(TP * (z[0] + z[1])), -TP * np.sin(TP * (z[0] + z[1]))],
        ]),
        pert_batch=lambda p: np.stack(
            [np.sin(TP * p[:, 1]), np.cos(TP * (p[:, 0] + p[:, 1]))], axis=1),
        dpert_batch=lambda p: np.stack([
            np.stack([np.zeros(len(p)), TP * np.cos(TP * p[:, 1])], axis=1),
            np.stack([-TP * np.sin(TP * (p[:, 0] + p[:, 1])),
                      -TP * np.sin(TP * (p[:, 0] + p[:, 1]))], axis=1),
        ], axis=1),
    )


def test_criterion_01_sawtooth_oracle_agreement():
    sys_def = orp.make_builtin("sawtooth", a=0.1)
    t0 = time.perf_counter()
    rep = linear_response(sys_def, n_steps=1_000_000, n_replicas=8, seed=101,
                          w_select=16, w_max=20)
    fd, fd_se, _ = fd_response(sys_def, dgamma=0.04, n_steps=1_000_000,
                               n_orbits=8, seed=202)
    wall = time.perf_counter() - t0
    tol = 3 * _comb(rep.total_stderr, fd_se)
    ok = abs(rep.total - fd) <= tol and wall < 60.0
    rel_note = "response is zero by parity (relative clause not applicable)"
    if abs(fd) > 5 * fd_se:
        ok = ok and abs(rep.total - fd) <= 0.05 * abs(fd)
        rel_note = "relative clause applied"

    # supplementary nonzero-response variant: phase breaks the parity
    sp = orp.make_builtin("sawtooth", a=0.1, c=0.25)
    rep2 = linear_response(sp, n_steps=1_000_000, n_replicas=8, seed=103,
                           w_select=16, w_max=20)
    fd2, fd2_se, _ = fd_response(sp, dgamma=0.04, n_steps=1_000_000,
                                 n_orbits=16, seed=204)
    ok2 = (abs(rep2.total - fd2) <= 3 * _comb(rep2.total_stderr, fd2_se)
           and abs(rep2.total - fd2) <= 0.05 * abs(fd2))
    record_criterion(
        1, "sawtooth fast vs finite difference",
        ok and ok2,
        f"pinned: fast={rep.total:+.5f} fd={fd:+.5f} tol={tol:.5f} "
        f"wall={wall:.1f}s ({rel_note}); phase-shifted: fast={rep2.total:+.5f} "
        f"fd={fd2:+.5f} rel={abs(rep2.total - fd2) / abs(fd2):.3f}")
    assert ok and ok2


def test_criterion_02_exact_zero_control():
    # affine circle map: rigid rotation conjugacy gives exactly zero response
    sys_def = orp.make_builtin("sawtooth", a=0.0, c=1.0 / 3.0)
    rep = linear_response(sys_def, n_steps=1_000_000, n_replicas=24, seed=33,
                          w_select=16, w_max=16)
    ok = rep.total_stderr <= 1e-3 and abs(rep.total) <= 3 * rep.total_stderr
    record_criterion(
        2, "exact-zero control (conjugacy)", ok,
        f"total={rep.total:+.2e} sigma={rep.total_stderr:.2e}")
    assert ok


def test_criterion_03_catmap_oracle_agreement():
    sys_def = orp.make_builtin("catmap")
    cfg = RunConfig(n_steps=1_000_000, seed=55, w_select=10, w_max=14)
    pipe = ResponsePipeline(sys_def, cfg, seed=55)
    parts = pipe.response_for()
    # affine base map: the Jacobian-divergence shadow vanishes identically
    nu_ok = np.abs(pipe.nu_j.values[pipe.nu_j.lo:pipe.nu_j.hi + 1]).max() == 0.0
    # pointwise closed form from the eigen-decomposition
    w, v = np.linalg.eig(np.array([[2.0, 1.0], [1.0, 1.0]]))
    vu = v[:, np.argmax(w)]
    ratio = parts["ratio"]
    z2 = pipe.orbit.points[:, 1]
    coef = float(vu @ np.array([[0.0, 1.0], [0.0, 0.0]]) @ vu) * TP
    closed = -coef * np.cos(TP * z2)
    sl = slice(ratio.lo, ratio.hi + 1)
    point_ok = np.abs(ratio.values[sl] - closed[sl]).max() <= 1e-8

    rep = linear_response(sys_def, n_steps=1_000_000, n_replicas=4, seed=55,
                          w_select=10, w_max=14)
    fd, fd_se, _ = fd_response(sys_def, dgamma=0.05, n_steps=1_000_000,
                               n_orbits=16, seed=66)
    agree = abs(rep.total - fd) <= 3 * _comb(rep.total_stderr, fd_se)

    mixed = _mixed_cat_field(sys_def)
    rep2 = linear_response(mixed, n_steps=1_000_000, n_replicas=4, seed=57,
                           w_select=10, w_max=14)
    fd2, fd2_se, _ = fd_response(mixed, dgamma=0.05, n_steps=500_000,
                                 n_orbits=16, seed=68)
    agree2 = abs(rep2.total - fd2) <= 3 * _comb(rep2.total_stderr, fd2_se)

    ok = nu_ok and point_ok and agree and agree2
    record_criterion(
        3, "perturbed cat map fast vs finite difference", ok,
        f"fast={rep.total:+.5f} fd={fd:+.5f}; shadow covector exactly zero: "
        f"{nu_ok}; pointwise closed form <=1e-8: {point_ok}; "
        f"mixed field fast={rep2.total:+.5f} fd={fd2:+.5f}")
    assert ok


def test_criterion_04_solenoid_oracle_agreement():
    sys_def = orp.make_builtin("solenoid")
    rep = linear_response(sys_def, n_steps=1_000_000, n_replicas=4, seed=77,
                          w_select=10, w_max=14)
    fd, fd_se, _ = fd_response(sys_def, dgamma=0.02, n_steps=1_000_000,
                               n_orbits=8, seed=88)
    tol = 3 * _comb(rep.total_stderr, fd_se)
    ok = abs(rep.total - fd) <= tol
    record_criterion(
        4, "solenoid fast vs finite difference", ok,
        f"fast={rep.total:+.4f} fd={fd:+.4f} tol={tol:.4f}")
    assert ok


def test_criterion_05_tangent_adjoint_equivalence():
    oks, notes = [], []
    for name, params in (("sawtooth", {"a": 0.1}), ("catmap", {})):
        sys_def = orp.make_builtin(name, **params)
        rep = equivalence_check(sys_def, w=8, seed=7, n_steps=200_000)
        oks.append(rep.passed)
        notes.append(f"{name}: defect={rep.defect:.2e} tol={rep.tol:.2e}")
    ok = all(oks)
    record_criterion(5, "tangent vs adjoint unstable contribution", ok,
                     "; ".join(notes))
    assert ok


def test_criterion_06_expanded_formula_equivalence():
    oks, notes = [], []
    for name, params in (("sawtooth", {"a": 0.1}), ("catmap", {})):
        sys_def = orp.make_builtin(name, **params)
        orbit = orp.generate_orbit(sys_def, seed=11, spinup=1000, n_steps=50_000)
        frames = orp.compute_frames(sys_def, orbit, seed=3)
        omega = div_v_fstar_series(sys_def, orbit, frames)
        nu = adjoint_shadow(sys_def, orbit, frames, omega, t_trunc=200)
        d, _ = expanded_vs_shadow_defect(sys_def, orbit, frames, 30, nu)
        oks.append(d.max() <= 1e-7)
        notes.append(f"{name}: max defect={d.max():.2e}")
    ok = all(oks)
    record_criterion(6, "expanded series vs shadowing assembly (T=30)", ok,
                     "; ".join(notes))
    assert ok


def _zero_mean_cases():
    cat = orp.make_builtin("catmap")
    return [
        ("sawtooth", orp.make_builtin("sawtooth", a=0.1, c=0.25), 200_000),
        ("catmap", cat, 200_000),
        ("catmap mixed X", _mixed_cat_field(cat), 200_000),
        ("solenoid", orp.make_builtin("solenoid"), 200_000),
        ("coupledcat", orp.make_builtin("coupledcat", k=2, coupling=0.05), 50_000),
    ]


def test_criterion_07_zero_mean_invariant():
    oks, notes = [], []
    for label, sys_def, n in _zero_mean_cases():
        orbit = orp.generate_orbit(sys_def, seed=21, spinup=1000, n_steps=n)
        frames = orp.compute_frames(sys_def, orbit, seed=4)
        omega = div_v_fstar_series(sys_def, orbit, frames)
        nu = adjoint_shadow(sys_def, orbit, frames, omega, t_trunc=200)
        ratio = unstable_density_ratio_series(sys_def, orbit, frames, nu)
        m, se = batch_means(ratio.window())
        oks.append(abs(m) <= 3 * se)
        notes.append(f"{label}: {m:+.2e} ({abs(m) / max(se, 1e-300):.2f} sigma)")
    ok = all(oks)
    record_criterion(7, "zero mean of the density perturbation", ok,
                     "; ".join(notes))
    assert ok


def test_criterion_08_defining_equation_residuals():
    from orbitresponse.response import dphi_series, phi_w_series
    from orbitresponse.divergence import VectorSeries

    worst = 0.0
    for label, sys_def, _ in _zero_mean_cases()[:4]:
        orbit = orp.generate_orbit(sys_def, seed=31, spinup=1000, n_steps=100_000)
        frames = orp.compute_frames(sys_def, orbit, seed=5)
        omega = div_v_fstar_series(sys_def, orbit, frames)
        nu = adjoint_shadow(sys_def, orbit, frames, omega, t_trunc=200)
        worst = max(worst, adjoint_residual(frames, nu, omega))
        dphi = dphi_series(sys_def, orbit)
        nup = adjoint_shadow(sys_def, orbit, frames, dphi, t_trunc=200)
        worst = max(worst, adjoint_residual(frames, nup, dphi))
        phis = sys_def.eval_obs(orbit.points)
        pw = phi_w_series(phis, 8)
        y = VectorSeries(values=pw.values[:, None] * sys_def.eval_pert(orbit.points),
                         lo=pw.lo, hi=pw.hi)
        v = forward_shadow(sys_def, orbit, frames, y, t_trunc=200)
        worst = max(worst, forward_residual(frames, v, y))
    ok = worst < 1e-8
    record_criterion(8, "shadowing defining-equation residuals", ok,
                     f"worst residual={worst:.2e}")
    assert ok


def test_criterion_09_coordinate_independence():
    oks, notes = [], []
    for name in ("catmap", "solenoid"):
        sys_def = orp.make_builtin(name)
        orbit = orp.generate_orbit(sys_def, seed=41, spinup=1000, n_steps=100_000)
        f1 = orp.compute_frames(sys_def, orbit, seed=0)
        f2 = orp.compute_frames(sys_def, orbit, seed=12345)
        lo = max(f1.lo, f2.lo) + 50
        hi = min(f1.hi, f2.hi) - 50
        dx = np.abs(div_v_x_series(sys_def, orbit, f1).values[lo:hi]
                    - div_v_x_series(sys_def, orbit, f2).values[lo:hi]).max()
        dj = np.abs(div_v_fstar_series(sys_def, orbit, f1).values[lo:hi]
                    - div_v_fstar_series(sys_def, orbit, f2).values[lo:hi]).max()
        parts = []
        for fr in (f1, f2):
            omega = div_v_fstar_series(sys_def, orbit, fr)
            nu = adjoint_shadow(sys_def, orbit, fr, omega, t_trunc=200)
            from orbitresponse.response import shadowing_contribution, uc_sweep
            sc, sc_se = shadowing_contribution(sys_def, orbit, fr)
            ratio = unstable_density_ratio_series(sys_def, orbit, fr, nu)
            row = uc_sweep(sys_def.eval_obs(orbit.points), ratio, 8)[-1]
            parts.append((sc, sc_se, row["uc"], row["stderr"]))
        (sc1, s1, uc1, u1), (sc2, s2, uc2, u2) = parts
        ok = (dx < 1e-8 and dj < 1e-8
              and abs(sc1 - sc2) <= 3 * _comb(s1, s2)
              and abs(uc1 - uc2) <= 3 * _comb(u1, u2))
        oks.append(ok)
        notes.append(f"{name}: max d(divX)={dx:.1e} max d(divF)={dj:.1e} "
                     f"dSC={abs(sc1 - sc2):.1e} dUC={abs(uc1 - uc2):.1e}")
    ok = all(oks)
    record_criterion(9, "frame re-seeding leaves outputs invariant", ok,
                     "; ".join(notes))
    assert ok


def test_criterion_10_cube_derivative_decay():
    # evaluated on the sheared conjugate automorphism: identical spectrum,
    # non-orthogonal splitting (the symmetric representative pairs the pushed
    # contracting columns to exactly zero, leaving nothing to fit)
    sys_def = orp.make_builtin("catmap", shear=1)
    orbit = orp.generate_orbit(sys_def, seed=3, spinup=1000, n_steps=20_000)
    frames = orp.compute_frames(sys_def, orbit, seed=1)
    slope, _ = decay_check(sys_def, orbit, frames, n_probe=10, n_push=12, seed=5)
    expect = 2 * np.log(LAM_S)
    ok = abs(slope - expect) / abs(expect) <= 0.2
    record_criterion(10, "relative decay of pushed cube derivatives", ok,
                     f"fitted slope={slope:.4f} expect={expect:.4f}")
    assert ok


def test_criterion_11_mass_continuity_grid_check():
    cases = [
        ("h=1, X=sin", lambda x: np.ones_like(x), lambda x: np.sin(TP * x),
         lambda x: -TP * np.cos(TP * x)),
        ("h=1+sin/2, X=1", lambda x: 1 + 0.5 * np.sin(TP * x),
         lambda x: np.ones_like(x), lambda x: -0.5 * TP * np.cos(TP * x)),
    ]
    bins = [2 ** k for k in range(7, 13)]
    oks, notes = [], []
    for label, h, xf, target in cases:
        defs = np.array([lemma1_check(h, xf, target, nb)[0] for nb in bins])
        mono = bool(np.all(np.diff(defs) < 0))
        order = -fit_loglog_slope(np.array(bins, float), defs)
        oks.append(mono and order >= 0.9)
        notes.append(f"{label}: order={order:.2f} monotone={mono}")
    ok = all(oks)
    record_criterion(11, "mass-continuity grid check", ok, "; ".join(notes))
    assert ok


def test_criterion_12_element_error_scaling():
    bs = np.geomspace(0.02, 0.2, 6)
    slope, detail = ulam_error_scaling(1, 2, bs)
    ok = abs(slope - 2.0) <= 0.05
    ok = ok and np.allclose(detail["error"], bs ** 2 / 12, rtol=1e-9)
    record_criterion(12, "zeroth-order element error scaling", ok,
                     f"slope={slope:.3f} (b^2/12 per transverse dimension)")
    assert ok


def test_criterion_13_lyapunov_sanity():
    cat = orp.make_builtin("catmap")
    orbit = orp.generate_orbit(cat, seed=9, spinup=1000, n_steps=100_000)
    frames = orp.compute_frames(cat, orbit, seed=2)
    lam = orp.lyapunov_exponents(frames.tangent)[0]
    ok = abs(lam - np.log(LAM_U)) <= 1e-3

    saw = orp.make_builtin("sawtooth", a=0.0, c=1 / 3)
    orb2 = orp.generate_orbit(saw, seed=9, spinup=1000, n_steps=100_000)
    fr2 = orp.compute_frames(saw, orb2, seed=2)
    lam2 = orp.lyapunov_exponents(fr2.tangent)[0]
    ok = ok and abs(lam2 - np.log(2.0)) <= 1e-3
    record_criterion(13, "Lyapunov exponents", ok,
                     f"catmap={lam:.6f} (exact {np.log(LAM_U):.6f}); "
                     f"doubling={lam2:.6f} (exact {np.log(2.0):.6f})")
    assert ok


def test_criterion_14_multi_parameter_economy():
    sys_def = orp.make_builtin("catmap")
    variant = _mixed_cat_field(sys_def)
    cfg = RunConfig(n_steps=200_000, seed=63, w_select=10, w_max=14)
    # warm pass compiles everything before timing
    ResponsePipeline(sys_def, RunConfig(n_steps=5_000, seed=1, w_select=2,
                                        w_max=3, t_trunc=60)).response_for()
    t0 = time.perf_counter()
    pipe = ResponsePipeline(sys_def, cfg, seed=63)
    pipe.response_for()
    t_full = time.perf_counter() - t0
    t_marg = min(
        _timed(lambda: pipe.response_for(variant)),
        _timed(lambda: pipe.response_for(variant)),
    )
    ok = t_marg <= 0.10 * t_full
    record_criterion(14, "marginal cost of a second perturbation", ok,
                     f"full={t_full:.2f}s marginal={t_marg:.3f}s "
                     f"({100 * t_marg / t_full:.1f}%)")
    assert ok


def _timed(fn):
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0
