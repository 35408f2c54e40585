"""Orbit generation, empirical averages, and binary orbit storage.

Long-time statistics are sampled along a single trajectory after a spin-up
that is discarded.  Orbits are stored in full so backward passes can replay
covectors without recomputing points; desk-scale lengths (up to ~1e7 points)
fit in memory.
"""

from dataclasses import dataclass
from typing import Optional
import struct

import numpy as np

from ._util import batch_means
from .systems import SystemDef


class OrbitDivergedError(RuntimeError):
    """A non-finite coordinate appeared while iterating the map."""

    def __init__(self, step):
        super().__init__(f"non-finite coordinate at step {step}")
        self.step = step


@dataclass
class OrbitData:
    """Stored trajectory x_0..x_N (after spin-up) with its provenance."""

    points: np.ndarray  # (N+1, dim)
    spinup: int
    seed: Optional[int]
    gamma: float = 0.0
    system: Optional[SystemDef] = None

    @property
    def n_steps(self):
        return self.points.shape[0] - 1

    @property
    def dim(self):
        return self.points.shape[1]


def generate_orbit(sys, x_init=None, seed=None, spinup=1000, n_steps=10000,
                   gamma=0.0):
    """Iterate the map for spinup + n_steps steps, keep the last n_steps + 1 points.

    Deterministic replay: a given (seed, spinup, n_steps, gamma) always produces
    the same orbit.  Raises OrbitDivergedError with the offending absolute step
    index if a coordinate leaves the chart.
    """
    if spinup < 0 or n_steps < 1:
        raise ValueError("need spinup >= 0 and n_steps >= 1")
    if x_init is None:
        rng = np.random.default_rng(0 if seed is None else seed)
        x0 = sys.sample_chart(rng)
    else:
        x0 = np.asarray(x_init, dtype=float)
    total = spinup + n_steps

    if sys.orbit_fast is not None and (gamma == 0.0 or sys.orbit_fast_any_gamma):
        pts = np.asarray(sys.orbit_fast(x0, gamma, total), dtype=float)
    else:
        pts = np.empty((total + 1, sys.dim))
        pts[0] = x0
        x = x0
        for k in range(total):
            x = sys.map(x, gamma)
            pts[k + 1] = x

    if not np.all(np.isfinite(pts)):
        bad = int(np.argwhere(~np.isfinite(pts).all(axis=1))[0][0])
        raise OrbitDivergedError(bad)
    return OrbitData(points=pts[spinup:].copy(), spinup=spinup,
                     seed=(None if x_init is not None else (0 if seed is None else seed)),
                     gamma=gamma, system=sys)


def empirical_average(orbit, g=None, g_batch=None):
    """Orbit average of a scalar function with a batch-means standard error.

    g takes a single point; g_batch, if given, takes the (N+1, dim) stack.
    With neither argument the system observable is used.
    """
    if g_batch is not None:
        vals = np.asarray(g_batch(orbit.points), dtype=float)
    elif g is None:
        vals = orbit.system.eval_obs(orbit.points)
    else:
        try:
            vals = np.asarray(g(orbit.points), dtype=float)
            if vals.shape != (orbit.points.shape[0],):
                raise ValueError
        except Exception:
            vals = np.array([g(p) for p in orbit.points], dtype=float)
    return batch_means(vals)


_MAGIC = b"ORB1"
_NOSEED = 2 ** 64 - 1


def dump_orbit(orbit, path):
    """Little-endian binary dump: magic, header {M, count, spinup, seed}, gamma, points.

    Header fields are uint64; a missing seed is stored as 2^64 - 1.  Points
    follow as row-major float64.
    """
    pts = np.ascontiguousarray(orbit.points, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack(
            "<QQQQ", orbit.dim, pts.shape[0], orbit.spinup,
            _NOSEED if orbit.seed is None else orbit.seed,
        ))
        fh.write(struct.pack("<d", orbit.gamma))
        fh.write(pts.tobytes())


def load_orbit(path, system=None):
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: not an orbit dump")
        m, count, spinup, seed = struct.unpack("<QQQQ", fh.read(32))
        (gamma,) = struct.unpack("<d", fh.read(8))
        pts = np.frombuffer(fh.read(count * m * 8), dtype="<f8").reshape(count, m)
    return OrbitData(points=pts.astype(float), spinup=int(spinup),
                     seed=None if seed == _NOSEED else int(seed),
                     gamma=float(gamma), system=system)
