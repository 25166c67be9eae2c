import numpy as np
import pytest

from tpdl.closure import RawParams, build_equilibrium
from tpdl.fields import Grid


@pytest.fixture(scope="session")
def eq():
    return build_equilibrium()


@pytest.fixture(scope="session")
def small_grid():
    return Grid(2 * np.pi * 4, 16)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def admissible_params(rng):
    """Random RawParams satisfying the structural band on f'(1)."""
    from tpdl.closure import f_slope_band
    while True:
        base = RawParams(gamma_plus=rng.uniform(1.0, 3.0), gamma_minus=rng.uniform(1.0, 3.0),
                         mu_plus=rng.uniform(0.2, 2.0), mu_minus=rng.uniform(0.2, 2.0),
                         lambda_plus=rng.uniform(-0.1, 1.0), lambda_minus=rng.uniform(-0.1, 1.0),
                         eta_small=rng.uniform(0.01, 0.5), f_slope=-1.0)
        lo, hi = f_slope_band(base)
        if hi < 0 and hi > lo:
            fs = lo + rng.uniform(0.05, 0.95) * (hi - lo)
            from dataclasses import replace
            return replace(base, f_slope=fs)


# acceptance verdict lines, printed together after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
