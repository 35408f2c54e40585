"""Parameterized map definitions and the registry of built-in test systems.

A system bundles the base map f (the dynamics at parameter value 0), its
first and second derivatives, a perturbation vector field X with gradient,
and a scalar observable.  The parameterized family is always the composition
"base map, then flow along X for time gamma", i.e.

    map(x, gamma) = wrap( f(x) + gamma * X(f(x)) )

so the gamma-derivative of the map at x equals X evaluated at f(x).  All
built-ins live on flat charts: torus coordinates are reduced mod 1 (the
wrap mask says which), remaining coordinates are plain Euclidean.
"""

from dataclasses import dataclass, field, replace
from typing import Callable, Optional
import json
import importlib.resources

import numpy as np

from . import _kernels
from ._util import wrap_coords

TWO_PI = 2.0 * np.pi


class UnknownSystemError(ValueError):
    """Requested registry name does not exist."""


class ParameterRangeError(ValueError):
    """Parameter outside the documented admissible (hyperbolic) range."""


@dataclass(frozen=True)
class SystemDef:
    """A map with derivatives, perturbation field, and observable.

    Pointwise callables take and return 1-d arrays of length dim; the
    optional *_batch hooks take (n, dim) stacks and are used by the long-orbit
    pipeline.  hess returns T with T[a, b, c] = d^2 f_a / dx_b dx_c.
    All evaluations are pure; instances are safe to share across workers.
    """

    name: str
    dim: int
    udim: int
    wrap_mask: np.ndarray
    base: Callable
    jac: Callable
    pert: Callable
    dpert_jac: Callable
    obs: Callable
    dobs: Callable
    hess: Optional[Callable] = None
    hess_zero: bool = False
    params: dict = field(default_factory=dict)
    base_batch: Optional[Callable] = None
    jac_batch: Optional[Callable] = None
    pert_batch: Optional[Callable] = None
    dpert_batch: Optional[Callable] = None
    obs_batch: Optional[Callable] = None
    dobs_batch: Optional[Callable] = None
    hess_batch: Optional[Callable] = None
    orbit_fast: Optional[Callable] = None
    orbit_fast_any_gamma: bool = True
    chart_sampler: Optional[Callable] = None

    # -- parameterized map ---------------------------------------------------

    def map(self, x, gamma=0.0):
        y = np.asarray(self.base(np.asarray(x, dtype=float)), dtype=float)
        if gamma != 0.0:
            y = y + gamma * np.asarray(self.pert(y), dtype=float)
        return wrap_coords(y, self.wrap_mask)

    def jvp(self, x, v):
        return self.jac(np.asarray(x, dtype=float)) @ np.asarray(v, dtype=float)

    def vjp(self, x, w):
        return self.jac(np.asarray(x, dtype=float)).T @ np.asarray(w, dtype=float)

    def hvp(self, x, y, z):
        """Hessian-bilinear product: the derivative of the Jacobian along y, applied to z."""
        if self.hess_zero:
            return np.zeros(self.dim)
        if self.hess is None:
            raise ValueError(
                f"system {self.name!r} has no Hessian; wrap it with fd_hessian() to opt in"
            )
        t = self.hess(np.asarray(x, dtype=float))
        return np.einsum("abc,b,c->a", t, np.asarray(y, float), np.asarray(z, float))

    def dpert(self, x, y):
        return self.dpert_jac(np.asarray(x, dtype=float)) @ np.asarray(y, dtype=float)

    def sample_chart(self, rng):
        if self.chart_sampler is not None:
            return self.chart_sampler(rng)
        return rng.random(self.dim)

    # -- batched evaluation with pointwise fallback --------------------------

    def _fallback(self, fn, pts, shape):
        out = np.empty((len(pts),) + shape)
        for i, p in enumerate(pts):
            out[i] = fn(p)
        return out

    def eval_base(self, pts):
        if self.base_batch is not None:
            return self.base_batch(pts)
        return self._fallback(self.base, pts, (self.dim,))

    def eval_jac(self, pts):
        if self.jac_batch is not None:
            return self.jac_batch(pts)
        return self._fallback(self.jac, pts, (self.dim, self.dim))

    def eval_pert(self, pts):
        if self.pert_batch is not None:
            return self.pert_batch(pts)
        return self._fallback(self.pert, pts, (self.dim,))

    def eval_dpert(self, pts):
        if self.dpert_batch is not None:
            return self.dpert_batch(pts)
        return self._fallback(self.dpert_jac, pts, (self.dim, self.dim))

    def eval_obs(self, pts):
        if self.obs_batch is not None:
            return self.obs_batch(pts)
        out = np.empty(len(pts))
        for i, p in enumerate(pts):
            out[i] = self.obs(p)
        return out

    def eval_dobs(self, pts):
        if self.dobs_batch is not None:
            return self.dobs_batch(pts)
        return self._fallback(self.dobs, pts, (self.dim,))

    def eval_hess(self, pts):
        if self.hess_zero:
            return np.zeros((len(pts), self.dim, self.dim, self.dim))
        if self.hess_batch is not None:
            return self.hess_batch(pts)
        if self.hess is None:
            raise ValueError(f"system {self.name!r} has no Hessian")
        return self._fallback(self.hess, pts, (self.dim,) * 3)


def with_perturbation(sys, pert, dpert_jac, pert_batch=None, dpert_batch=None,
                      hess_of_pert_zero=None):
    """Same base dynamics, different perturbation field.

    The parameterized map changes consistently (the field is composed with the
    base map), so finite-difference oracles stay valid.  The fast orbit kernel
    is kept for gamma = 0 only.
    """
    return replace(
        sys,
        pert=pert,
        dpert_jac=dpert_jac,
        pert_batch=pert_batch,
        dpert_batch=dpert_batch,
        orbit_fast_any_gamma=False,
    )


def with_observable(sys, obs, dobs, obs_batch=None, dobs_batch=None):
    return replace(sys, obs=obs, dobs=dobs, obs_batch=obs_batch, dobs_batch=dobs_batch)


def zero_perturbation(sys):
    m = sys.dim
    return with_perturbation(
        sys,
        pert=lambda x: np.zeros(m),
        dpert_jac=lambda x: np.zeros((m, m)),
        pert_batch=lambda pts: np.zeros((len(pts), m)),
        dpert_batch=lambda pts: np.zeros((len(pts), m, m)),
    )


def linear_combination_perturbation(sys, fields, coeffs):
    """Perturbation a1*X1 + a2*X2 + ... from (pert, dpert_jac) pairs."""
    coeffs = [float(c) for c in coeffs]

    def pert(x):
        return sum(c * np.asarray(p(x), float) for c, (p, _) in zip(coeffs, fields))

    def dpert(x):
        return sum(c * np.asarray(d(x), float) for c, (_, d) in zip(coeffs, fields))

    return with_perturbation(sys, pert, dpert)


def fd_hessian(sys, rel_step=None):
    """Opt-in finite-difference Hessian for user systems without one.

    Central differences of the Jacobian; step = cbrt(eps) scaled per
    coordinate.  Never used silently for built-ins.
    """
    h0 = rel_step if rel_step is not None else float(np.cbrt(np.finfo(float).eps))

    def hess(x):
        x = np.asarray(x, dtype=float)
        m = sys.dim
        t = np.empty((m, m, m))
        for c in range(m):
            h = h0 * max(1.0, abs(x[c]))
            xp = x.copy()
            xm = x.copy()
            xp[c] += h
            xm[c] -= h
            t[:, :, c] = (sys.jac(xp) - sys.jac(xm)) / (2 * h)
        # symmetrize the mixed derivatives
        return 0.5 * (t + t.transpose(0, 2, 1))

    return replace(sys, hess=hess, hess_zero=False, hess_batch=None)


# ---------------------------------------------------------------------------
# built-ins


def _make_sawtooth(a=0.1, c=0.0):
    """Expanding circle map 2x + c + a sin(2 pi x) mod 1.

    The phase c does not change any of the statistics of interest (it is a
    smooth conjugacy away from the a = 0 doubling map) but breaks the exact
    binary shift structure of 2x mod 1, which collapses to the fixed point
    in floating-point arithmetic after ~53 steps.  Long-orbit studies of the
    a = 0 map should set c nonzero.
    """
    a, c = float(a), float(c)
    if abs(a) >= 1.0 / TWO_PI:
        raise ParameterRangeError(
            f"sawtooth requires |a| < 1/(2*pi) ~ 0.159 to stay expanding, got a={a}"
        )

    def base(x):
        return np.array([(2.0 * x[0] + c + a * np.sin(TWO_PI * x[0])) % 1.0])

    def jac(x):
        return np.array([[2.0 + TWO_PI * a * np.cos(TWO_PI * x[0])]])

    def hess(x):
        return np.array([[[-(TWO_PI ** 2) * a * np.sin(TWO_PI * x[0])]]])

    return SystemDef(
        name="sawtooth",
        dim=1,
        udim=1,
        wrap_mask=np.array([True]),
        base=base,
        jac=jac,
        hess=hess,
        hess_zero=(a == 0.0),
        pert=lambda x: np.ones(1),
        dpert_jac=lambda x: np.zeros((1, 1)),
        obs=lambda x: float(np.cos(TWO_PI * x[0])),
        dobs=lambda x: np.array([-TWO_PI * np.sin(TWO_PI * x[0])]),
        params={"a": a, "c": c},
        base_batch=lambda p: ((2.0 * p + c + a * np.sin(TWO_PI * p)) % 1.0),
        jac_batch=lambda p: (2.0 + TWO_PI * a * np.cos(TWO_PI * p))[:, :, None],
        pert_batch=lambda p: np.ones_like(p),
        dpert_batch=lambda p: np.zeros((len(p), 1, 1)),
        obs_batch=lambda p: np.cos(TWO_PI * p[:, 0]),
        dobs_batch=lambda p: -TWO_PI * np.sin(TWO_PI * p),
        hess_batch=lambda p: (-(TWO_PI ** 2) * a * np.sin(TWO_PI * p))[:, :, None, None],
        orbit_fast=_sawtooth_orbit_fast(a, c),
    )


def _sawtooth_orbit_fast(a, c):
    def run(x0, gamma, n):
        if a == 0.0:
            # exact integer dynamics; float iteration of an affine circle map
            # collapses onto a short rounding cycle (2x is an exact bit shift)
            p = _kernels.SAW_LATTICE_P
            k0 = int(round((float(x0[0]) % 1.0) * p)) % p
            m = int(round(((c + float(gamma)) % 1.0) * p)) % p
            return _kernels.sawtooth_orbit_lattice(k0, m, int(n))[:, None]
        return _kernels.sawtooth_orbit(
            float(x0[0]), float(gamma), a, c, int(n))[:, None]

    return run


_CAT_A = np.array([[2.0, 1.0], [1.0, 1.0]])


def _make_catmap(ax=1.0, ay=0.0, shear=0):
    """Hyperbolic torus automorphism with a smooth perturbation field.

    shear conjugates the matrix by [[1,1],[0,1]]^shear: the spectrum (and all
    Lyapunov exponents) stay fixed while the expanding/contracting splitting
    becomes non-orthogonal, which some decay diagnostics need (the symmetric
    representative has an exactly orthogonal splitting).
    """
    ax, ay = float(ax), float(ay)
    shear = int(shear)
    if abs(ax) > 2.0 or abs(ay) > 2.0:
        raise ParameterRangeError("catmap perturbation amplitudes limited to |.| <= 2")
    if abs(shear) > 3:
        raise ParameterRangeError("catmap shear limited to |shear| <= 3")
    s = np.array([[1.0, 1.0], [0.0, 1.0]])
    a_mat = np.linalg.matrix_power(s, shear) @ _CAT_A @ np.linalg.matrix_power(
        np.linalg.inv(s), shear)
    a_mat = np.round(a_mat)

    def base(x):
        return (a_mat @ x) % 1.0

    def pert(x):
        return np.array([ax * np.sin(TWO_PI * x[1]), ay * np.sin(TWO_PI * x[0])])

    def dpert_jac(x):
        return np.array([
            [0.0, ax * TWO_PI * np.cos(TWO_PI * x[1])],
            [ay * TWO_PI * np.cos(TWO_PI * x[0]), 0.0],
        ])

    def dpert_batch(p):
        out = np.zeros((len(p), 2, 2))
        out[:, 0, 1] = ax * TWO_PI * np.cos(TWO_PI * p[:, 1])
        out[:, 1, 0] = ay * TWO_PI * np.cos(TWO_PI * p[:, 0])
        return out

    return SystemDef(
        name="catmap",
        dim=2,
        udim=1,
        wrap_mask=np.array([True, True]),
        base=base,
        jac=lambda x: a_mat.copy(),
        hess=lambda x: np.zeros((2, 2, 2)),
        hess_zero=True,
        pert=pert,
        dpert_jac=dpert_jac,
        obs=lambda x: float(np.cos(TWO_PI * x[0])),
        dobs=lambda x: np.array([-TWO_PI * np.sin(TWO_PI * x[0]), 0.0]),
        params={"ax": ax, "ay": ay, "shear": shear},
        base_batch=lambda p: (p @ a_mat.T) % 1.0,
        jac_batch=lambda p: np.broadcast_to(a_mat, (len(p), 2, 2)).copy(),
        pert_batch=lambda p: np.stack(
            [ax * np.sin(TWO_PI * p[:, 1]), ay * np.sin(TWO_PI * p[:, 0])], axis=1
        ),
        dpert_batch=dpert_batch,
        obs_batch=lambda p: np.cos(TWO_PI * p[:, 0]),
        dobs_batch=lambda p: np.stack(
            [-TWO_PI * np.sin(TWO_PI * p[:, 0]), np.zeros(len(p))], axis=1
        ),
        hess_batch=lambda p: np.zeros((len(p), 2, 2, 2)),
        orbit_fast=lambda x0, gamma, n: _kernels.catmap_orbit(
            float(x0[0]), float(x0[1]), float(gamma), ax, ay,
            a_mat[0, 0], a_mat[0, 1], a_mat[1, 0], a_mat[1, 1], int(n)
        ),
    )


def _make_solenoid(lam=0.35, beta=0.2, a=0.0, cx=(1.0, 1.0, 1.0)):
    lam, beta, a = float(lam), float(beta), float(a)
    c1, c2, c3 = (float(c) for c in cx)
    if not (0.0 < lam < 0.5):
        raise ParameterRangeError("solenoid requires contraction 0 < lam < 1/2")
    if beta <= 0.0:
        raise ParameterRangeError("solenoid requires beta > 0")
    if abs(a) >= 1.0 / TWO_PI:
        raise ParameterRangeError("solenoid requires |a| < 1/(2*pi) in the angle map")
    r_attr = beta / (1.0 - lam)

    def base(x):
        th = x[0]
        return np.array([
            (2.0 * th + a * np.sin(TWO_PI * th)) % 1.0,
            lam * x[1] + beta * np.cos(TWO_PI * th),
            lam * x[2] + beta * np.sin(TWO_PI * th),
        ])

    def jac(x):
        th = x[0]
        return np.array([
            [2.0 + TWO_PI * a * np.cos(TWO_PI * th), 0.0, 0.0],
            [-TWO_PI * beta * np.sin(TWO_PI * th), lam, 0.0],
            [TWO_PI * beta * np.cos(TWO_PI * th), 0.0, lam],
        ])

    def hess(x):
        th = x[0]
        t = np.zeros((3, 3, 3))
        t[0, 0, 0] = -(TWO_PI ** 2) * a * np.sin(TWO_PI * th)
        t[1, 0, 0] = -(TWO_PI ** 2) * beta * np.cos(TWO_PI * th)
        t[2, 0, 0] = -(TWO_PI ** 2) * beta * np.sin(TWO_PI * th)
        return t

    def pert(x):
        th = x[0]
        return np.array([
            c1 * np.sin(TWO_PI * th),
            c2 * np.cos(TWO_PI * th),
            c3 * np.sin(2.0 * TWO_PI * th),
        ])

    def dpert_jac(x):
        th = x[0]
        out = np.zeros((3, 3))
        out[0, 0] = c1 * TWO_PI * np.cos(TWO_PI * th)
        out[1, 0] = -c2 * TWO_PI * np.sin(TWO_PI * th)
        out[2, 0] = c3 * 2.0 * TWO_PI * np.cos(2.0 * TWO_PI * th)
        return out

    def jac_batch(p):
        th = p[:, 0]
        out = np.zeros((len(p), 3, 3))
        out[:, 0, 0] = 2.0 + TWO_PI * a * np.cos(TWO_PI * th)
        out[:, 1, 0] = -TWO_PI * beta * np.sin(TWO_PI * th)
        out[:, 2, 0] = TWO_PI * beta * np.cos(TWO_PI * th)
        out[:, 1, 1] = lam
        out[:, 2, 2] = lam
        return out

    def hess_batch(p):
        th = p[:, 0]
        out = np.zeros((len(p), 3, 3, 3))
        out[:, 0, 0, 0] = -(TWO_PI ** 2) * a * np.sin(TWO_PI * th)
        out[:, 1, 0, 0] = -(TWO_PI ** 2) * beta * np.cos(TWO_PI * th)
        out[:, 2, 0, 0] = -(TWO_PI ** 2) * beta * np.sin(TWO_PI * th)
        return out

    def pert_batch(p):
        th = p[:, 0]
        return np.stack([
            c1 * np.sin(TWO_PI * th),
            c2 * np.cos(TWO_PI * th),
            c3 * np.sin(2.0 * TWO_PI * th),
        ], axis=1)

    def dpert_batch(p):
        th = p[:, 0]
        out = np.zeros((len(p), 3, 3))
        out[:, 0, 0] = c1 * TWO_PI * np.cos(TWO_PI * th)
        out[:, 1, 0] = -c2 * TWO_PI * np.sin(TWO_PI * th)
        out[:, 2, 0] = c3 * 2.0 * TWO_PI * np.cos(2.0 * TWO_PI * th)
        return out

    def chart_sampler(rng):
        return np.array([
            rng.random(),
            rng.uniform(-r_attr, r_attr),
            rng.uniform(-r_attr, r_attr),
        ])

    return SystemDef(
        name="solenoid",
        dim=3,
        udim=1,
        wrap_mask=np.array([True, False, False]),
        base=base,
        jac=jac,
        hess=hess,
        pert=pert,
        dpert_jac=dpert_jac,
        obs=lambda x: float(x[1] + np.cos(TWO_PI * x[0])),
        dobs=lambda x: np.array([-TWO_PI * np.sin(TWO_PI * x[0]), 1.0, 0.0]),
        params={"lam": lam, "beta": beta, "a": a, "cx": [c1, c2, c3]},
        jac_batch=jac_batch,
        hess_batch=hess_batch,
        pert_batch=pert_batch,
        dpert_batch=dpert_batch,
        obs_batch=lambda p: p[:, 1] + np.cos(TWO_PI * p[:, 0]),
        dobs_batch=lambda p: np.stack(
            [-TWO_PI * np.sin(TWO_PI * p[:, 0]), np.ones(len(p)), np.zeros(len(p))],
            axis=1,
        ),
        orbit_fast=_solenoid_orbit_fast(lam, beta, a, c1, c2, c3),
        chart_sampler=chart_sampler,
    )


def _solenoid_orbit_fast(lam, beta, a, c1, c2, c3):
    def run(x0, gamma, n):
        if a == 0.0 and float(gamma) * c1 == 0.0:
            # affine angle map: use the exact lattice (see sawtooth_orbit_lattice)
            p = _kernels.SAW_LATTICE_P
            k0 = int(round((float(x0[0]) % 1.0) * p)) % p
            return _kernels.solenoid_orbit_lattice(
                k0, float(x0[1]), float(x0[2]), float(gamma), lam, beta,
                c2, c3, int(n))
        return _kernels.solenoid_orbit(
            float(x0[0]), float(x0[1]), float(x0[2]), float(gamma),
            lam, beta, a, c1, c2, c3, int(n))

    return run


def _make_coupledcat(k=2, coupling=0.05, ax=1.0):
    k = int(k)
    coupling, ax = float(coupling), float(ax)
    if not (1 <= k <= 16):
        raise ParameterRangeError("coupledcat requires 1 <= k <= 16 blocks")
    if abs(coupling) > 0.1:
        raise ParameterRangeError(
            "coupledcat coupling limited to |c| <= 0.1 to keep the cone condition"
        )
    m = 2 * k

    def base(x):
        out = np.empty(m)
        for i in range(k):
            ip, im = (i + 1) % k, (i - 1) % k
            out[2 * i] = 2.0 * x[2 * i] + x[2 * i + 1] + coupling * np.sin(TWO_PI * x[2 * ip])
            out[2 * i + 1] = x[2 * i] + x[2 * i + 1] + coupling * np.sin(TWO_PI * x[2 * im + 1])
        return out % 1.0

    def jac(x):
        out = np.zeros((m, m))
        for i in range(k):
            ip, im = (i + 1) % k, (i - 1) % k
            out[2 * i, 2 * i] = 2.0
            out[2 * i, 2 * i + 1] = 1.0
            out[2 * i + 1, 2 * i] = 1.0
            out[2 * i + 1, 2 * i + 1] = 1.0
            out[2 * i, 2 * ip] += coupling * TWO_PI * np.cos(TWO_PI * x[2 * ip])
            out[2 * i + 1, 2 * im + 1] += coupling * TWO_PI * np.cos(TWO_PI * x[2 * im + 1])
        return out

    def hess(x):
        t = np.zeros((m, m, m))
        w2 = TWO_PI ** 2
        for i in range(k):
            ip, im = (i + 1) % k, (i - 1) % k
            t[2 * i, 2 * ip, 2 * ip] += -coupling * w2 * np.sin(TWO_PI * x[2 * ip])
            t[2 * i + 1, 2 * im + 1, 2 * im + 1] += -coupling * w2 * np.sin(TWO_PI * x[2 * im + 1])
        return t

    def pert(x):
        out = np.zeros(m)
        for i in range(k):
            out[2 * i] = ax * np.sin(TWO_PI * x[2 * i + 1])
        return out

    def dpert_jac(x):
        out = np.zeros((m, m))
        for i in range(k):
            out[2 * i, 2 * i + 1] = ax * TWO_PI * np.cos(TWO_PI * x[2 * i + 1])
        return out

    def obs(x):
        return float(np.mean(np.cos(TWO_PI * x[0::2])))

    def dobs(x):
        out = np.zeros(m)
        out[0::2] = -TWO_PI * np.sin(TWO_PI * x[0::2]) / k
        return out

    def jac_batch(p):
        out = np.zeros((len(p), m, m))
        for i in range(k):
            ip, im = (i + 1) % k, (i - 1) % k
            out[:, 2 * i, 2 * i] = 2.0
            out[:, 2 * i, 2 * i + 1] = 1.0
            out[:, 2 * i + 1, 2 * i] = 1.0
            out[:, 2 * i + 1, 2 * i + 1] = 1.0
            out[:, 2 * i, 2 * ip] += coupling * TWO_PI * np.cos(TWO_PI * p[:, 2 * ip])
            out[:, 2 * i + 1, 2 * im + 1] += coupling * TWO_PI * np.cos(TWO_PI * p[:, 2 * im + 1])
        return out

    def hess_batch(p):
        out = np.zeros((len(p), m, m, m))
        w2 = TWO_PI ** 2
        for i in range(k):
            ip, im = (i + 1) % k, (i - 1) % k
            out[:, 2 * i, 2 * ip, 2 * ip] += -coupling * w2 * np.sin(TWO_PI * p[:, 2 * ip])
            out[:, 2 * i + 1, 2 * im + 1, 2 * im + 1] += (
                -coupling * w2 * np.sin(TWO_PI * p[:, 2 * im + 1])
            )
        return out

    def pert_batch(p):
        out = np.zeros((len(p), m))
        out[:, 0::2] = ax * np.sin(TWO_PI * p[:, 1::2])
        return out

    def dpert_batch(p):
        out = np.zeros((len(p), m, m))
        for i in range(k):
            out[:, 2 * i, 2 * i + 1] = ax * TWO_PI * np.cos(TWO_PI * p[:, 2 * i + 1])
        return out

    return SystemDef(
        name="coupledcat",
        dim=m,
        udim=k,
        wrap_mask=np.ones(m, dtype=bool),
        base=base,
        jac=jac,
        hess=hess,
        hess_zero=(coupling == 0.0),
        pert=pert,
        dpert_jac=dpert_jac,
        obs=obs,
        dobs=dobs,
        params={"k": k, "coupling": coupling, "ax": ax},
        jac_batch=jac_batch,
        hess_batch=hess_batch,
        pert_batch=pert_batch,
        dpert_batch=dpert_batch,
        obs_batch=lambda p: np.cos(TWO_PI * p[:, 0::2]).mean(axis=1),
        orbit_fast=lambda x0, gamma, n: _kernels.coupledcat_orbit(
            np.asarray(x0, dtype=float), float(gamma), coupling, ax, int(n)
        ),
    )


REGISTRY = {
    "sawtooth": _make_sawtooth,
    "catmap": _make_catmap,
    "solenoid": _make_solenoid,
    "coupledcat": _make_coupledcat,
}


def make_builtin(name, params=None, **kwargs):
    """Instantiate a registered system; params from a dict and/or keywords."""
    if name not in REGISTRY:
        raise UnknownSystemError(
            f"unknown system {name!r}; available: {sorted(REGISTRY)}"
        )
    merged = dict(params or {})
    merged.update(kwargs)
    try:
        return REGISTRY[name](**merged)
    except TypeError as exc:
        raise ParameterRangeError(f"bad parameters for {name!r}: {exc}") from exc


def registry_manifest():
    """Machine-readable registry description shipped with the package."""
    with importlib.resources.files("orbitresponse.data").joinpath(
        "registry.json"
    ).open("r") as fh:
        return json.load(fh)


def _torus_delta(a, b, mask):
    """Difference a - b with masked coordinates unwrapped to (-1/2, 1/2]."""
    d = np.asarray(a, float) - np.asarray(b, float)
    if mask is not None:
        d[..., mask] = (d[..., mask] + 0.5) % 1.0 - 0.5
    return d


def validate_system(sys, n_probe=100, seed=0):
    """Probe derivative consistency at random points.

    Returns max mismatches over the probes: jvp against a one-sided finite
    difference of the map at steps h and h/2, the jvp/vjp duality defect,
    the Hessian symmetry defect, the dpert/pert finite-difference defect,
    and the map/pert consistency defect (gamma-derivative of the map equals
    the perturbation field at the image point).
    """
    rng = np.random.default_rng(seed)
    h = 1e-5
    gam = 1e-6
    rep = {
        "jvp_fd_h": 0.0,
        "jvp_fd_h2": 0.0,
        "duality": 0.0,
        "hess_symmetry": 0.0,
        "dpert_fd": 0.0,
        "pert_map_fd": 0.0,
    }
    for _ in range(int(n_probe)):
        x = sys.sample_chart(rng)
        v = rng.standard_normal(sys.dim)
        v /= np.linalg.norm(v)
        w = rng.standard_normal(sys.dim)
        w /= np.linalg.norm(w)

        jv = sys.jvp(x, v)
        for key, step in (("jvp_fd_h", h), ("jvp_fd_h2", h / 2)):
            fd = _torus_delta(sys.map(x + step * v), sys.map(x), sys.wrap_mask) / step
            rep[key] = max(rep[key], float(np.max(np.abs(fd - jv))))

        rep["duality"] = max(
            rep["duality"], abs(float(w @ jv) - float(sys.vjp(x, w) @ v))
        )

        if sys.hess is not None or sys.hess_zero:
            d = sys.hvp(x, v, w) - sys.hvp(x, w, v)
            rep["hess_symmetry"] = max(rep["hess_symmetry"], float(np.max(np.abs(d))))

        dp = sys.dpert(x, v)
        fd = (sys.pert(x + h * v) - sys.pert(x - h * v)) / (2 * h)
        rep["dpert_fd"] = max(rep["dpert_fd"], float(np.max(np.abs(fd - dp))))

        y0 = sys.map(x)
        fdg = _torus_delta(sys.map(x, gam), y0, sys.wrap_mask) / gam
        rep["pert_map_fd"] = max(
            rep["pert_map_fd"], float(np.max(np.abs(fdg - sys.pert(y0))))
        )
    return rep
