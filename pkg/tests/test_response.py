import json

import numpy as np
import pytest

import orbitresponse as orp
from orbitresponse.systems import with_perturbation, with_observable, zero_perturbation
from orbitresponse.response import (RunConfig, ResponsePipeline, linear_response,
                                    linear_response_multi, phi_w_series,
                                    unstable_density_ratio_series,
                                    unstable_density_ratio,
                                    tangent_unstable_contribution,
                                    equivalence_check, dphi_series, uc_sweep,
                                    detect_plateau)
from orbitresponse.divergence import div_v_fstar_series
from orbitresponse.shadowing import adjoint_shadow

TP = 2 * np.pi


def _doubling_response_oracle(c, x_amp=1.0, m_max=10, grid=1 << 16):
    """Transfer-operator series for the affine circle map 2x + c.

    The invariant density is Lebesgue, so the response of the average of
    cos(2 pi x) to the perturbation field X is -sum_m int Phi(f^m x) X'(x) dx,
    evaluated with a trapezoid rule (spectrally accurate for trig data).
    """
    x = np.arange(grid) / grid
    xp = 2 * x_amp * np.cos(2 * TP * x)  # X = x_amp sin(4 pi x)/(2 pi)
    total = 0.0
    y = x.copy()
    for m in range(m_max):
        total -= np.mean(np.cos(TP * y) * xp)
        y = (2 * y + c) % 1.0
    return total


def _doubling_variant(c, x_amp=1.0):
    s0 = orp.make_builtin("sawtooth", a=0.0, c=c)
    return with_perturbation(
        s0,
        pert=lambda x: np.array([x_amp * np.sin(2 * TP * x[0]) / TP]),
        dpert_jac=lambda x: np.array([[2 * x_amp * np.cos(2 * TP * x[0])]]),
        pert_batch=lambda p: x_amp * np.sin(2 * TP * p) / TP,
        dpert_batch=lambda p: (2 * x_amp * np.cos(2 * TP * p))[:, :, None],
    )


def test_zero_perturbation_gives_zero_everything(cat_bundle):
    sys_def, orbit, fr = cat_bundle
    var = zero_perturbation(sys_def)
    cfg = RunConfig(n_steps=orbit.n_steps, seed=1, w_select=4, w_max=8,
                    t_trunc=100)
    pipe = ResponsePipeline(var, cfg)
    parts = pipe.response_for()
    assert parts["sc"] == 0.0 and parts["uc"] == 0.0
    assert np.abs(parts["ratio"].window()).max() == 0.0


def test_constant_observable_gives_zero(cat_bundle):
    sys_def, orbit, fr = cat_bundle
    var = with_observable(sys_def, obs=lambda x: 1.0,
                          dobs=lambda x: np.zeros(2),
                          obs_batch=lambda p: np.ones(len(p)),
                          dobs_batch=lambda p: np.zeros((len(p), 2)))
    rep = linear_response(var, n_steps=10_000, seed=2, w_select=4, w_max=6,
                          t_trunc=100)
    assert rep.sc == 0.0
    assert abs(rep.uc) < 1e-14  # centering makes phi_W vanish identically


def test_phi_w_window_sum():
    phis = np.arange(20, dtype=float)
    ser = phi_w_series(phis, 2, centered=False)
    assert ser.lo == 2 and ser.hi == 17
    assert ser.values[5] == sum(range(3, 8))
    cs = phi_w_series(phis, 2, centered=True)
    assert abs(cs.values[5] - (sum(range(3, 8)) - 5 * phis.mean())) < 1e-12


def test_doubling_closed_form_response():
    c = 1.0 / 3.0
    var = _doubling_variant(c)
    expect = _doubling_response_oracle(c)
    assert abs(expect - (-np.cos(TP * c))) < 1e-12  # orthogonality leaves m = 1
    rep = linear_response(var, n_steps=200_000, seed=11, w_select=4, w_max=8)
    assert abs(rep.total - expect) <= 3 * rep.total_stderr
    assert abs(rep.sc) <= 4 * rep.sc_stderr  # shadowing part vanishes here


def test_zero_mean_of_density_ratio(saw_phase_bundle, sol_bundle):
    for sys_def, orbit, fr in (saw_phase_bundle, sol_bundle):
        omega = div_v_fstar_series(sys_def, orbit, fr)
        nu = adjoint_shadow(sys_def, orbit, fr, omega, t_trunc=200)
        ratio = unstable_density_ratio_series(sys_def, orbit, fr, nu)
        from orbitresponse._util import batch_means
        m, se = batch_means(ratio.window())
        assert abs(m) <= 3 * se


def test_pointwise_ratio_matches_series(saw_phase_bundle):
    sys_def, orbit, fr = saw_phase_bundle
    omega = div_v_fstar_series(sys_def, orbit, fr)
    nu = adjoint_shadow(sys_def, orbit, fr, omega, t_trunc=200)
    ratio = unstable_density_ratio_series(sys_def, orbit, fr, nu)
    for n in (ratio.lo + 3, ratio.lo + 1234):
        assert abs(unstable_density_ratio(sys_def, orbit, fr, nu, n)
                   - ratio.values[n]) < 1e-14


def test_linearity_in_perturbation(cat_bundle):
    sys_def, orbit, fr = cat_bundle
    cfg = RunConfig(n_steps=orbit.n_steps, seed=1, w_select=6, w_max=8,
                    t_trunc=100)
    pipe = ResponsePipeline(sys_def, cfg)

    x2 = with_perturbation(
        sys_def,
        pert=lambda x: np.array([0.0, np.cos(TP * x[0])]),
        dpert_jac=lambda x: np.array([[0.0, 0.0], [-TP * np.sin(TP * x[0]), 0.0]]),
    )
    a, b = 0.7, -1.9

    combo = with_perturbation(
        sys_def,
        pert=lambda x: a * sys_def.pert(x) + b * x2.pert(x),
        dpert_jac=lambda x: a * sys_def.dpert_jac(x) + b * x2.dpert_jac(x),
    )
    p1 = pipe.response_for()
    p2 = pipe.response_for(x2)
    pc = pipe.response_for(combo)
    assert abs(pc["sc"] - (a * p1["sc"] + b * p2["sc"])) < 1e-10
    assert abs(pc["uc"] - (a * p1["uc"] + b * p2["uc"])) < 1e-10


def test_centered_and_uncentered_agree():
    sys_def = orp.make_builtin("sawtooth", a=0.1, c=0.25)
    rep_c = linear_response(sys_def, n_steps=100_000, seed=5, w_select=10,
                            w_max=12, centered=True)
    rep_u = linear_response(sys_def, n_steps=100_000, seed=5, w_select=10,
                            w_max=12, centered=False)
    tol = 3 * np.hypot(rep_c.uc_stderr, rep_u.uc_stderr)
    assert abs(rep_c.uc - rep_u.uc) <= tol


def test_plateau_detection():
    rows = [{"w": w, "uc": 1.0 - 2.0 ** (-w), "stderr": 0.01} for w in range(12)]
    w, flag = detect_plateau(rows)
    assert flag and 4 <= w <= 9
    rows = [{"w": w, "uc": 0.1 * w, "stderr": 0.001} for w in range(6)]
    w, flag = detect_plateau(rows)
    assert not flag and w == 5


def test_tangent_recursion_scalar_collapse(saw_phase_bundle):
    # u = dim: the perpendicular projection vanishes and the recursion is
    # a running scalar source term
    sys_def, orbit, fr = saw_phase_bundle
    uc, se, cube = tangent_unstable_contribution(sys_def, orbit, fr, w=4,
                                                 t_trunc=150, keep_state=True)
    assert np.abs(cube.columns[cube.lo + 1:cube.hi]).max() < 1e-12
    # cube pairing series reproduces the explicit one-step formula
    from orbitresponse.response import phi_w_series
    from orbitresponse.shadowing import forward_shadow
    from orbitresponse.divergence import VectorSeries
    phis = sys_def.eval_obs(orbit.points)
    pw = phi_w_series(phis, 4)
    xser = sys_def.eval_pert(orbit.points)
    y = VectorSeries(values=pw.values[:, None] * xser, lo=pw.lo, hi=pw.hi)
    vtil = forward_shadow(sys_def, orbit, fr, y, t_trunc=150)
    x = orbit.points[:, 0]
    fpp = -(TP ** 2) * 0.1 * np.sin(TP * x)
    fp = 2.0 + TP * 0.1 * np.cos(TP * x)
    n = cube.lo + 500
    expect = fpp[n] * vtil.values[n, 0] / fp[n]  # X' = 0 for the default field
    assert abs(cube.a.values[n + 1] - expect) < 1e-10


def test_tangent_zero_perturbation(cat_bundle):
    sys_def, orbit, fr = cat_bundle
    var = zero_perturbation(sys_def)
    uc, se, _ = tangent_unstable_contribution(var, orbit, fr, w=4, t_trunc=100)
    assert uc == 0.0


def test_cube_columns_perpendicular(sol_bundle):
    sys_def, orbit, fr = sol_bundle
    uc, se, cube = tangent_unstable_contribution(sys_def, orbit, fr, w=6,
                                                 t_trunc=150, keep_state=True)
    lo, hi = cube.lo + 1, cube.hi
    defect = np.einsum("nmu,nmv->nuv", fr.q[lo:hi], cube.columns[lo:hi])
    assert np.abs(defect).max() < 1e-10


@pytest.mark.parametrize("name,params", [("sawtooth", {"a": 0.1}),
                                         ("catmap", {}),
                                         ("solenoid", {})])
def test_equivalence_tangent_adjoint(name, params):
    sys_def = orp.make_builtin(name, **params)
    rep = equivalence_check(sys_def, w=6, seed=7, n_steps=50_000)
    assert rep.passed, (rep.defect, rep.tol)


def test_multi_perturbation_reuse(cat_bundle):
    sys_def, _, _ = cat_bundle
    x2 = with_perturbation(
        sys_def,
        pert=lambda x: np.array([0.0, np.sin(TP * x[0])]),
        dpert_jac=lambda x: np.array([[0.0, 0.0], [TP * np.cos(TP * x[0]), 0.0]]),
    )
    reports = linear_response_multi(sys_def, [sys_def, x2], n_steps=20_000,
                                    seed=3, w_select=6, w_max=8, t_trunc=100)
    assert len(reports) == 2
    solo = linear_response(sys_def, n_steps=20_000, seed=3, w_select=6,
                           w_max=8, t_trunc=100)
    assert abs(reports[0].total - solo.total) < 1e-12


def test_report_json_deterministic():
    sys_def = orp.make_builtin("catmap")
    r1 = linear_response(sys_def, n_steps=5_000, seed=4, w_select=3, w_max=4,
                         t_trunc=50)
    r2 = linear_response(sys_def, n_steps=5_000, seed=4, w_select=3, w_max=4,
                         t_trunc=50)
    assert r1.to_json() == r2.to_json()
    payload = json.loads(r1.to_json())
    for key in ("sc", "uc", "total", "total_stderr", "w_sweep", "diagnostics"):
        assert key in payload


def test_replicas_aggregate():
    sys_def = orp.make_builtin("catmap")
    rep = linear_response(sys_def, n_steps=10_000, seed=4, w_select=4, w_max=6,
                          t_trunc=100, n_replicas=3)
    assert len(rep.diagnostics["per_replica"]) == 3
    assert rep.total_stderr > 0
