import numpy as np
import pytest

import orbitresponse as orp
from orbitresponse import _kernels


ACCEPTANCE_LINES = []


def record_criterion(num, label, passed, detail=""):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {num:2d}: {label}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    _kernels.warmup_kernels()


def _bundle(name, n_steps, seed=1, **params):
    sys_def = orp.make_builtin(name, **params)
    orbit = orp.generate_orbit(sys_def, seed=seed, spinup=1000, n_steps=n_steps)
    frames = orp.compute_frames(sys_def, orbit, seed=seed + 1)
    return sys_def, orbit, frames


@pytest.fixture(scope="session")
def saw_bundle():
    return _bundle("sawtooth", 20_000, a=0.1)


@pytest.fixture(scope="session")
def saw_phase_bundle():
    return _bundle("sawtooth", 20_000, a=0.1, c=0.25)


@pytest.fixture(scope="session")
def cat_bundle():
    return _bundle("catmap", 20_000)


@pytest.fixture(scope="session")
def sol_bundle():
    return _bundle("solenoid", 20_000)


@pytest.fixture(scope="session")
def ccat_bundle():
    return _bundle("coupledcat", 8_000, k=2, coupling=0.05)
