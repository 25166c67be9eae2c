"""Compare the numba and numpy paths of the hot kernels.

    python benchmarks/bench_kernels.py [--points 64] [--repeat 5]

Each kernel is run once to warm up (numba compiles on first call), then
timed ``repeat`` times; the best time is reported together with the
largest difference between the two paths.
"""
import argparse
import time

import numpy as np

from tpdl import _accel, kernels
from tpdl.closure import build_equilibrium
from tpdl.fields import Grid
from tpdl.linear import LinearPropagator
from tpdl.nonlinear import RHS


def best_of(fn, repeat):
    fn()
    ts = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t0)
    return min(ts)


def bench_rho(eq, n, repeat, rng):
    p = eq.params
    rp = 1.0 + 0.05 * rng.standard_normal(n)
    rm = 1.0 + 0.05 * rng.standard_normal(n)
    guess = np.full(n, eq.rho_plus_eq)
    out = {}

    def run(flag):
        _accel.USE_NUMBA = flag
        out[flag] = kernels.rho_plus_batch(rp, rm, p.gamma_plus, p.gamma_minus, p.f_slope, guess)[0]

    t_nb = best_of(lambda: run(True), repeat)
    t_np = best_of(lambda: run(False), repeat)
    return t_nb, t_np, np.abs(out[True] - out[False]).max()


def bench_propagator(eq, grid, repeat, rng):
    prop = LinearPropagator(eq, grid)
    shape = grid.spectral_shape
    base = [rng.standard_normal((c,) + shape) + 1j * rng.standard_normal((c,) + shape)
            for c in (1, 1, 3, 3)]
    out = {}

    def run(flag):
        _accel.USE_NUMBA = flag
        n_p, n_m, u_p, u_m = (b.copy() for b in base)
        G, hp, hm = prop.factors(1.0)
        kf, kh = prop._k
        kernels.apply_propagator(kf, kf, kh, prop.shell_index, G, hp, hm, n_p[0], n_m[0], u_p, u_m)
        out[flag] = np.concatenate([n_p, u_p, n_m, u_m])

    t_nb = best_of(lambda: run(True), repeat)
    t_np = best_of(lambda: run(False), repeat)
    return t_nb, t_np, np.abs(out[True] - out[False]).max()


def bench_pointwise(eq, grid, repeat, rng):
    rhs = RHS(eq, grid)
    phys = 1e-3 * rng.standard_normal((RHS._NCH,) + grid.physical_shape)
    out = {}

    def run(flag):
        _accel.USE_NUMBA = flag
        rhs.warm = None
        out[flag] = rhs._pointwise(phys)

    t_nb = best_of(lambda: run(True), repeat)
    t_np = best_of(lambda: run(False), repeat)
    return t_nb, t_np, np.abs(out[True] - out[False]).max()


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=64, help="grid points per axis")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _accel.USE_NUMBA:
        raise SystemExit("numba path disabled (TPDL_NUMBA=0); nothing to compare")
    rng = np.random.default_rng(0)
    eq = build_equilibrium()
    grid = Grid(32 * np.pi, args.points)
    n = grid.M ** 3
    rows = [("rho_plus_batch", *bench_rho(eq, n, args.repeat, rng)),
            ("apply_propagator", *bench_propagator(eq, grid, args.repeat, rng)),
            ("nonlinear_pointwise", *bench_pointwise(eq, grid, args.repeat, rng))]
    _accel.USE_NUMBA = True
    print(f"M={grid.M} ({n} points), best of {args.repeat}")
    print(f"{'kernel':22s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s} {'max diff':>10s}")
    for name, t_nb, t_np, diff in rows:
        print(f"{name:22s} {t_nb:10.4f} {t_np:10.4f} {t_np / t_nb:8.1f} {diff:10.2e}")


if __name__ == "__main__":
    main()
