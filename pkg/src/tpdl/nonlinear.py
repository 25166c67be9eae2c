"""Pseudo-spectral solver for the full nonlinear system in scaled variables.

The state is advanced with an integrating-factor (Lawson) RK4 scheme: the
constant-coefficient linear part is applied exactly per mode through
``LinearPropagator`` and classical RK4 stages act on the transformed
variables. Products are formed on the physical grid, the ten coefficient
functions are evaluated pointwise with warm-started density solves, and
every right-hand side is truncated by the 2/3 rule.
"""
from dataclasses import dataclass, field
import math
import time as _time

import numpy as np
import scipy.fft as sfft

from . import _accel, kernels
from .closure import ClosureError, ConvergenceError, coefficient_fields
from .fields import FIELD_GROUPS, FieldState, dealias_mask, lp_norm, transform_inverse
from .linear import GROUPS, LinearPropagator, NormTable


class VacuumError(ClosureError):
    """A phase mass came too close to vacuum."""


class BlowUpError(FloatingPointError):
    def __init__(self, message, time=None, partial=None):
        super().__init__(message)
        self.time = time
        self.partial = partial


@dataclass
class SolverConfig:
    dt: float = 0.25
    t_end: float = 50.0
    dealias_fraction: float = 2.0 / 3.0
    integrator: str = "ifrk4"
    sample_times: tuple = ()
    ells: tuple = (0, 1, 2)
    ps: tuple = ()
    energy_order: int = 2  # N in the time-weighted functional
    nonlinear: bool = True
    vacuum_floor: float = 0.1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not 0 < self.dealias_fraction <= 1:
            raise ValueError("dealias_fraction must lie in (0, 1]")
        if self.integrator != "ifrk4":
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if not self.t_end >= 0:
            raise ValueError("t_end must be non-negative")


# --------------------------------------------------------------------------
# right-hand side
# --------------------------------------------------------------------------

def _irfft(c, grid):
    return sfft.irfftn(c, s=grid.physical_shape, axes=(-3, -2, -1), norm="forward", workers=-1)


def _rfft(f, grid):
    return sfft.rfftn(f, axes=(-3, -2, -1), norm="forward", workers=-1)


class RHS:
    """Nonlinear terms of the scaled system; keeps the density warm start."""

    def __init__(self, eq, grid, dealias_fraction=2.0 / 3.0, vacuum_floor=0.1):
        self.eq = eq
        self.grid = grid
        self.mask = dealias_mask(grid, dealias_fraction)
        self.vacuum_floor = vacuum_floor
        self.warm = None
        self.evaluations = 0
        kx, ky, kz = grid.kvec()
        self._ik = (1j * kx, 1j * ky, 1j * kz)
        self._k2 = kx * kx + ky * ky + kz * kz
        self._spec = None
        named = {**vars(eq.params), **{k: getattr(eq, k) for k in kernels.POINTWISE_CONSTANTS
                                     if not hasattr(eq.params, k)}}
        self._consts = np.array([float(named[k]) for k in kernels.POINTWISE_CONSTANTS])

    # channel layout of the single inverse transform per evaluation
    _NP, _NM, _GNP, _GNM, _UP, _UM, _DUP, _DUM, _VP, _VM, _NCH = 0, 1, 2, 5, 8, 11, 14, 23, 32, 35, 38

    def __call__(self, Y):
        """Y: stacked (8, ...) half-spectrum scaled state -> stacked RHS."""
        eq, grid = self.eq, self.grid
        p = eq.params
        s1, s4 = math.sqrt(eq.alpha1), math.sqrt(eq.alpha4)
        ik = self._ik
        if self._spec is None or self._spec.dtype != np.result_type(Y.dtype, np.complex64):
            self._spec = np.empty((self._NCH,) + Y.shape[1:], dtype=np.result_type(Y.dtype, np.complex64))
        spec = self._spec

        # unscaled spectral fields
        np.multiply(Y[0], 1.0 / eq.alpha1, out=spec[self._NP])
        np.multiply(Y[4], 1.0 / eq.alpha4, out=spec[self._NM])
        np.multiply(Y[1:4], 1.0 / s1, out=spec[self._UP:self._UP + 3])
        np.multiply(Y[5:8], 1.0 / s4, out=spec[self._UM:self._UM + 3])
        for j in range(3):
            np.multiply(ik[j], spec[self._NP], out=spec[self._GNP + j])
            np.multiply(ik[j], spec[self._NM], out=spec[self._GNM + j])
        for u0, du0, v0, mu, lam in ((self._UP, self._DUP, self._VP, p.mu_plus, p.lambda_plus),
                                     (self._UM, self._DUM, self._VM, p.mu_minus, p.lambda_minus)):
            U = spec[u0:u0 + 3]
            # d_j u_i stored at du0 + 3 i + j
            for i in range(3):
                for j in range(3):
                    np.multiply(ik[j], U[i], out=spec[du0 + 3 * i + j])
            div = ik[0] * U[0] + ik[1] * U[1] + ik[2] * U[2]
            # mu lap u + (mu + lam) grad div u, both multiplied by l afterwards
            for i in range(3):
                np.multiply(U[i], -mu * self._k2, out=spec[v0 + i])
                spec[v0 + i] += (mu + lam) * ik[i] * div
        phys = _irfft(spec, grid)
        if not np.isfinite(phys).all():
            raise BlowUpError("non-finite values in the state")
        n_p, n_m = phys[self._NP], phys[self._NM]
        lo = min(n_p.min(), n_m.min()) + 1.0
        if lo <= self.vacuum_floor:
            raise VacuumError(f"n +/- 1 reached {lo:.3g} <= {self.vacuum_floor}")
        flux = self._pointwise(phys)
        fs = _rfft(flux, grid)
        out = np.empty_like(Y)
        out[0] = -eq.alpha1 * (ik[0] * fs[0] + ik[1] * fs[1] + ik[2] * fs[2])
        out[4] = -eq.alpha4 * (ik[0] * fs[3] + ik[1] * fs[4] + ik[2] * fs[5])
        out[1:4] = s1 * fs[6:9]
        out[5:8] = s4 * fs[9:12]
        out *= self.mask
        self.evaluations += 1
        return out

    def _pointwise(self, phys):
        """Mass fluxes and momentum terms (12 physical channels)."""
        eq, p = self.eq, self.eq.params
        if _accel.USE_NUMBA:
            shape = phys.shape[1:]
            flat = phys.reshape(self._NCH, -1)
            warm = self.warm if self.warm is not None else np.full(flat.shape[1], eq.rho_plus_eq)
            out = np.empty((12, flat.shape[1]))
            rho = np.empty(flat.shape[1])
            status = np.empty(flat.shape[1], dtype=np.int64)
            kernels._nonlinear_pointwise_numba(flat, warm.ravel(), self._consts, 1e-13, 100,
                                               out, rho, status)
            if np.any(status != kernels.CONVERGED):
                idx = int(np.flatnonzero(status != kernels.CONVERGED)[0])
                raise ConvergenceError(f"density solve failed at flat index {idx}")
            self.warm = rho
            return out.reshape((12,) + shape)
        n_p, n_m = phys[self._NP], phys[self._NM]
        gn_p, gn_m = phys[self._GNP:self._GNP + 3], phys[self._GNM:self._GNM + 3]
        u_p, u_m = phys[self._UP:self._UP + 3], phys[self._UM:self._UM + 3]
        du_p = phys[self._DUP:self._DUP + 9].reshape(3, 3, *n_p.shape)
        du_m = phys[self._DUM:self._DUM + 9].reshape(3, 3, *n_p.shape)
        visc_p, visc_m = phys[self._VP:self._VP + 3], phys[self._VM:self._VM + 3]
        warm = None if self.warm is None else self.warm.reshape(n_p.shape)
        coef, rho = coefficient_fields(n_p, n_m, eq, warm_start=warm)
        self.warm = rho.ravel()
        F2 = self._momentum(coef, "plus", gn_p, gn_m, u_p, du_p, visc_p, p.mu_plus, p.lambda_plus)
        F4 = self._momentum(coef, "minus", gn_p, gn_m, u_m, du_m, visc_m, p.mu_minus, p.lambda_minus)
        return np.concatenate([n_p * u_p, n_m * u_m, F2, F4])

    @staticmethod
    def _momentum(coef, side, gn_p, gn_m, u, du, visc, mu, lam):
        if side == "plus":
            g, gbar = coef["g_plus"], coef["gbar_plus"]
            own, other = gn_p, gn_m
        else:
            g, gbar = coef["g_minus"], coef["gbar_minus"]
            own, other = gn_m, gn_p
        h, k, l = coef[f"h_{side}"], coef[f"k_{side}"], coef[f"l_{side}"]
        # F^i = -g d_i n_own - gbar d_i n_other - (u.grad) u_i + ...
        div = du[0, 0] + du[1, 1] + du[2, 2]
        muh, muk = mu * h, mu * k
        out = np.empty_like(u)
        for i in range(3):
            adv = u[0] * du[i, 0] + u[1] * du[i, 1] + u[2] * du[i, 2]
            sym_p = sum(gn_p[j] * (du[i, j] + du[j, i]) for j in range(3))
            sym_m = sum(gn_m[j] * (du[i, j] + du[j, i]) for j in range(3))
            out[i] = (-g * own[i] - gbar * other[i] - adv
                      + muh * sym_p + muk * sym_m
                      + lam * div * (h * gn_p[i] + k * gn_m[i])
                      + l * visc[i])
        return out


def nonlinear_rhs(state, eq, dealias_fraction=2.0 / 3.0, rhs=None):
    """``(F1, F2, F3, F4)`` of the scaled system at ``state`` (half spectra)."""
    rhs = rhs or RHS(eq, state.grid, dealias_fraction)
    out = rhs(state.stacked())
    return out[0], out[1:4], out[4], out[5:8]


# --------------------------------------------------------------------------
# time stepping
# --------------------------------------------------------------------------

class Stepper:
    """Lawson integrating-factor RK4 on stacked states."""

    def __init__(self, eq, grid, config):
        self.eq = eq
        self.grid = grid
        self.config = config
        self.prop = LinearPropagator(eq, grid)
        self.rhs = RHS(eq, grid, config.dealias_fraction, config.vacuum_floor)
        self.mask = self.rhs.mask
        self._factors = {}

    def _half(self, Y, dt):
        """exp(L dt/2) Y in place."""
        key = 0.5 * dt
        if key not in self._factors:
            self._factors[key] = self.prop.factors(key)
        G, hp, hm = self._factors[key]
        kf, kh = self.prop._k
        kernels.apply_propagator(kf, kf, kh, self.prop.shell_index, G, hp, hm,
                                 Y[0], Y[4], Y[1:4], Y[5:8])
        return Y

    def _N(self, Y):
        if not self.config.nonlinear:
            return np.zeros_like(Y)
        return self.rhs(Y)

    def step(self, Y, dt):
        """Advance stacked state ``Y`` by ``dt``; returns a new array."""
        k1 = self._N(Y)
        a = self._half(Y.copy(), dt)
        c1 = self._half(k1.copy(), dt)
        k2 = self._N(a + 0.5 * dt * c1)
        k3 = self._N(a + 0.5 * dt * k2)
        d3 = self._half(k3.copy(), dt)
        ea = self._half(a.copy(), dt)
        k4 = self._N(ea + dt * d3)
        acc = a + (dt / 6.0) * (c1 + 2.0 * (k2 + k3))
        out = self._half(acc, dt)
        out += (dt / 6.0) * k4
        if not np.all(np.isfinite(out)):
            raise BlowUpError("non-finite values after step")
        return out


def step(state, eq, config, stepper=None):
    """One integrating-factor RK4 step of size ``config.dt``."""
    stepper = stepper or Stepper(eq, state.grid, config)
    Y = stepper.step(state.stacked(), config.dt)
    return FieldState.from_stacked(Y, state.grid, state.time + config.dt)


def dealias(state, fraction=2.0 / 3.0):
    mask = dealias_mask(state.grid, fraction)
    return FieldState.from_stacked(state.stacked() * mask, state.grid, state.time)


def energy_functional(norm_series, times, ell, N):
    """Discrete sup over samples of ``(1+t)^{3/4+l/2} ||nabla^l U||_{H^{N-l}}``.

    ``norm_series[j]`` is the series of ``||nabla^j U||_{L^2}`` (summed over
    groups) for ``j = 0..N``.
    """
    h = np.sqrt(np.sum([np.asarray(norm_series[j]) ** 2 for j in range(ell, N + 1)], axis=0))
    w = (1.0 + np.asarray(times)) ** (0.75 + 0.5 * ell) * h
    return np.maximum.accumulate(w)


@dataclass
class Trajectory:
    table: NormTable
    state: FieldState
    h2: np.ndarray
    means: np.ndarray  # (n_samples, 2): zero modes of n+ and n-
    energy: dict = field(default_factory=dict)
    steps: int = 0
    runtime: float = 0.0
    error: str = ""


def _sample_norms(state, ells, ps):
    from .linear import _grid_norms
    return _grid_norms(state, ells, ps)


def evolve_nonlinear(state0, eq, config, on_sample=None):
    """Run to ``config.t_end`` recording norms at ``config.sample_times``.

    Sample times are rounded to the step grid. On blow-up or vacuum the
    partial trajectory is attached to the raised error as ``.partial``.
    """
    grid = state0.grid
    dt = config.dt
    n_steps = int(round(config.t_end / dt))
    samples = sorted({int(round(t / dt)) for t in (config.sample_times or [config.t_end])
                      if 0 <= t <= config.t_end + 1e-12})
    ells = sorted(set(int(l) for l in config.ells) | set(range(config.energy_order + 1)))
    stepper = Stepper(eq, grid, config)
    Y = state0.stacked() * stepper.mask
    acc, times, h2, means = {}, [], [], []
    t_start = _time.perf_counter()

    def record(Y, t):
        st = FieldState.from_stacked(Y, grid, t)
        for key, v in _sample_norms(st, ells, config.ps).items():
            acc.setdefault(key, []).append(v)
        times.append(t)
        h2.append(st.hs_norm(2))
        means.append((Y[0, 0, 0, 0].real, Y[4, 0, 0, 0].real))
        if on_sample:
            on_sample(st)

    def result(Y, step_count, err=""):
        table = NormTable(np.array(times), "nonlinear")
        for (g, kind, order), vals in acc.items():
            if kind == "H" and int(order) not in config.ells:
                continue
            table.add(g, kind, order, vals)
        energy = {}
        if times:
            series = [acc[("total", "H", float(j))] for j in range(config.energy_order + 1)]
            for l in range(config.energy_order + 1):
                energy[l] = energy_functional(series, times, l, config.energy_order)
        return Trajectory(table, FieldState.from_stacked(Y, grid, step_count * dt), np.array(h2),
                          np.array(means), energy, step_count,
                          _time.perf_counter() - t_start, err)

    k = 0
    if 0 in samples:
        record(Y, 0.0)
    try:
        for k in range(1, n_steps + 1):
            try:
                Y = stepper.step(Y, dt)
            except BlowUpError as exc:
                exc.time = k * dt
                raise
            if k in samples:
                record(Y, k * dt)
    except (BlowUpError, VacuumError, KeyboardInterrupt) as exc:
        exc.partial = result(Y, k - 1, str(exc) or type(exc).__name__)
        raise
    return result(Y, n_steps)
