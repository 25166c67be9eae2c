"""The numba and numpy paths of every hot kernel agree."""
import numpy as np
import pytest

from tpdl import _accel, kernels
from tpdl.fields import Grid
from tpdl.linear import LinearPropagator
from tpdl.nonlinear import RHS


@pytest.fixture
def both_paths():
    saved = _accel.USE_NUMBA
    results = {}

    def run(fn):
        for flag in (True, False):
            _accel.USE_NUMBA = flag
            results[flag] = fn()
        _accel.USE_NUMBA = saved
        return results[True], results[False]

    yield run
    _accel.USE_NUMBA = saved


def test_backend_name():
    assert _accel.backend_name() in ("numba", "numpy")


def test_rho_batch_twins(eq, rng, both_paths):
    p = eq.params
    rp = rng.uniform(0.2, 3.0, 500)
    rm = rng.uniform(0.2, 3.0, 500)
    guess = np.where(rng.random(500) < 0.5, 0.0, rp + rng.uniform(0.01, 5.0, 500))
    a, b = both_paths(lambda: kernels.rho_plus_batch(rp, rm, p.gamma_plus, p.gamma_minus,
                                                     p.f_slope, guess))
    assert np.all(a[1] == kernels.CONVERGED) and np.all(b[1] == kernels.CONVERGED)
    np.testing.assert_allclose(a[0], b[0], rtol=1e-13)


def test_rho_batch_flags_bad_input(eq):
    p = eq.params
    rho, status = kernels.rho_plus_batch_numpy(np.array([1.0, -1.0]), np.array([1.0, 1.0]),
                                               p.gamma_plus, p.gamma_minus, p.f_slope,
                                               np.zeros(2))
    assert status[0] == kernels.CONVERGED and status[1] == kernels.BAD_INPUT


def test_rho_batch_non_integer_exponents(rng, both_paths):
    rp = rng.uniform(0.5, 1.5, 100)
    rm = rng.uniform(0.5, 1.5, 100)
    a, b = both_paths(lambda: kernels.rho_plus_batch(rp, rm, 1.4, 2.7, -3.0))
    np.testing.assert_allclose(a[0], b[0], rtol=1e-13)


def test_propagator_twins(eq, rng, both_paths):
    grid = Grid(8 * np.pi, 12)
    prop = LinearPropagator(eq, grid)
    shape = grid.spectral_shape
    base = [rng.standard_normal((c,) + shape) + 1j * rng.standard_normal((c,) + shape)
            for c in (1, 1, 3, 3)]
    G, hp, hm = prop.factors(0.8)
    kf, kh = prop._k

    def run():
        n_p, n_m, u_p, u_m = (b.copy() for b in base)
        kernels.apply_propagator(kf, kf, kh, prop.shell_index, G, hp, hm, n_p[0], n_m[0], u_p, u_m)
        return np.concatenate([n_p, u_p, n_m, u_m])

    a, b = both_paths(run)
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-14)


def test_pointwise_twins(eq, rng, both_paths):
    grid = Grid(8 * np.pi, 8)
    rhs = RHS(eq, grid)
    phys = 1e-2 * rng.standard_normal((RHS._NCH,) + grid.physical_shape)

    def run():
        rhs.warm = None
        return rhs._pointwise(phys)

    a, b = both_paths(run)
    np.testing.assert_allclose(a, b, rtol=1e-11, atol=1e-15)
