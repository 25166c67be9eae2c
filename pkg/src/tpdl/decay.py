"""Initial data, decay experiments and power-law fits.

Experiments run on one of three backends (``linear-radial``,
``linear-grid``, ``nonlinear``), record norm series of the scaled state and
fit exponents on ``log(1 + t)`` against the theoretical rates

    ||nabla^l U(t)||_{L^2} ~ (1+t)^(-3/4 - l/2),   ||U(t)||_{L^p} ~ (1+t)^(-3/2 (1 - 1/p)).
"""
from dataclasses import dataclass, field, asdict
import math
import time as _time

import numpy as np
from scipy import stats

from .closure import RawParams, build_equilibrium
from .fields import (FIELD_GROUPS, FieldState, Grid, _smooth_step, dealias_mask,
                     scale_state, transform_inverse, unscale_state)
from .linear import GROUPS, NormTable, RadialProfile, linear_decay_series
from .nonlinear import SolverConfig, evolve_nonlinear
from .spectral import taylor_constants
from . import io

BACKENDS = ("linear-radial", "linear-grid", "nonlinear")
GENERATORS = ("generic", "gaussian", "lower-bound")
REPORT_COLUMNS = ("experiment_id", "backend", "field_group", "norm_kind", "ell_or_p",
                  "exponent", "stderr", "target", "verdict")
SERIES_COLUMNS = ("experiment_id", "backend", "time", "field_group", "norm_kind", "ell_or_p",
                  "value")
SENSITIVITY_T1 = (50.0, 100.0, 200.0)


class ConfigError(ValueError):
    pass


class FitError(ValueError):
    pass


# --------------------------------------------------------------------------
# initial data
# --------------------------------------------------------------------------

def _bump_field(X, L, rng, n_bumps, widths):
    f = np.zeros(X[0].shape)
    for _ in range(n_bumps):
        c = rng.uniform(0.0, L, 3)
        w = rng.uniform(*widths)
        a = rng.uniform(-1.0, 1.0)
        # periodic distance to the centre
        d2 = sum(((X[i] - c[i] + 0.5 * L) % L - 0.5 * L) ** 2 for i in range(3))
        f += a * np.exp(-0.5 * d2 / (w * w))
    return f


def l1_norm(state):
    """``N0``: sum over the eight components of their L^1 norms."""
    g = state.grid
    vol = g.dx ** 3
    tot = 0.0
    for k in FIELD_GROUPS:
        f = transform_inverse(getattr(state, k), g)
        tot += float(np.abs(f).sum()) * vol
    return tot


def gen_generic_data(grid, delta0, seed, n_bumps=3, widths=(1.5, 2.5), dealias_fraction=2.0 / 3.0):
    """Unscaled perturbation ``(R+ - 1, u+, R- - 1, u-)`` from random Gaussian bumps.

    Every component gets zero mean (on the torus the velocity means do not
    decay), the 2/3-rule band limit is applied and the result is rescaled so
    that its H^2 norm equals ``delta0``.
    """
    if not delta0 > 0:
        raise ConfigError("delta0 must be positive")
    rng = np.random.default_rng(seed)
    X = grid.mesh()
    comps = [_bump_field(X, grid.L, rng, n_bumps, widths) for _ in range(8)]
    st = FieldState.from_physical(comps[0], np.stack(comps[1:4]), comps[4], np.stack(comps[5:8]), grid)
    mask = dealias_mask(grid, dealias_fraction) if dealias_fraction < 1 else True
    for k in FIELD_GROUPS:
        arr = getattr(st, k)
        arr *= mask
        arr[..., 0, 0, 0] = 0.0
    h = st.hs_norm(2)
    for k in FIELD_GROUPS:
        getattr(st, k)[...] *= delta0 / h
    return st


def lower_bound_cut(eta1):
    """1 on ``r <= eta1``, smoothly down to 0 at ``r = 2 eta1``."""
    return lambda r: 1.0 - _smooth_step((np.asarray(r, dtype=float) - eta1) / eta1)


def lower_bound_profile(eta1, N0, delta0, margin=1.5):
    """Radial (scaled) data: only ``n+``, flat at ``margin N0 sqrt(delta0)`` near 0."""
    if not (eta1 > 0 and N0 > 0 and delta0 > 0):
        raise ConfigError("eta1, N0 and delta0 must be positive")
    amp = margin * N0 * math.sqrt(delta0)
    cut = lower_bound_cut(eta1)
    return RadialProfile({"n_plus": lambda r: amp * cut(r)}, breakpoints=(eta1, 2 * eta1),
                         label=f"lower-bound(eta1={eta1})", r_support=2 * eta1,
                         x_width=1.0 / eta1)


def gen_lower_bound_data(grid, eta1, N0, delta0, eq=None, margin=1.5):
    """Well-chosen data on the grid, returned in unscaled variables.

    In scaled variables ``n-``, ``u+`` and ``u-`` vanish and ``n+`` has the
    flat low-frequency profile of ``lower_bound_profile``.
    """
    if eta1 >= grid.k_nyquist:
        raise ConfigError(f"eta1={eta1} is beyond the Nyquist wavenumber {grid.k_nyquist}")
    if eta1 < grid.dk:
        raise ConfigError(f"eta1={eta1} is below the lattice spacing {grid.dk}; no mode is covered")
    eq = eq or build_equilibrium()
    prof = lower_bound_profile(eta1, N0, delta0, margin)
    scaled = prof.sample_on_grid(grid)
    return unscale_state(scaled, eq)


# --------------------------------------------------------------------------
# fits
# --------------------------------------------------------------------------

def fit_power_law(times, values, window=None):
    """Least-squares slope of ``log(value)`` against ``log(1+t)``.

    Returns ``(exponent, stderr)``.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if window is not None:
        sel = (t >= window[0]) & (t <= window[1])
        t, v = t[sel], v[sel]
    if t.size < 8:
        raise FitError(f"need at least 8 samples in the window, got {t.size}")
    if np.any(~(v > 0)):
        raise FitError("values must be positive inside the fit window")
    x = np.log1p(t)
    y = np.log(v)
    if np.ptp(y) == 0.0:
        return 0.0, 0.0
    res = stats.linregress(x, y)
    return float(res.slope), float(res.stderr)


def target_exponent(kind, order):
    if kind == "H":
        return -(0.75 + 0.5 * order)
    if kind == "L":
        p = float(order)
        return -1.5 * (1.0 - 1.0 / p) if np.isfinite(p) else -1.5
    raise ValueError(f"unknown norm kind {kind!r}")


# --------------------------------------------------------------------------
# experiments
# --------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    experiment_id: str = "experiment"
    generator: str = "gaussian"
    backend: str = "linear-radial"
    delta0: float = 1e-3
    N0: float = 1.0
    eta1: float = 0.1
    seed: int = 0
    width: float = 1.0  # gaussian profile width in Fourier space
    n_bumps: int = 3
    bump_widths: tuple = (1.5, 2.5)
    ells: tuple = (0,)
    ps: tuple = ()
    groups: tuple = ("total",)
    times: tuple = ()
    window: tuple = (100.0, 1e4)
    tolerance: float = 0.05
    points_per_axis: int = 64
    box_length: float = 32 * math.pi
    dtype: str = "complex128"
    dt: float = 0.5
    params: RawParams = field(default_factory=RawParams)

    def validate(self):
        if self.generator not in GENERATORS:
            raise ConfigError(f"unknown generator {self.generator!r}; choose from {GENERATORS}")
        if self.backend not in BACKENDS:
            raise ConfigError(f"unknown backend {self.backend!r}; choose from {BACKENDS}")
        if self.backend == "linear-radial" and self.generator == "generic":
            raise ConfigError("generic bump data live on the grid; use a grid backend")
        t1, t2 = (float(x) for x in self.window)
        if not (t2 > t1 >= 1.0):
            raise ConfigError(f"fit window must satisfy t2 > t1 >= 1, got {self.window}")
        if len(self.times) == 0:
            raise ConfigError("times must not be empty")
        if self.backend != "linear-radial":
            eq = build_equilibrium(self.params)
            t_sat = (self.box_length / (2 * math.pi)) ** 2 / taylor_constants(eq).nu_bar1
            if t2 > t_sat:
                raise ConfigError(f"window end {t2} exceeds the box saturation time {t_sat:.4g}")
        if not self.tolerance > 0:
            raise ConfigError("tolerance must be positive")
        bad = set(self.groups) - set(GROUPS) - {"min"}
        if bad:
            raise ConfigError(f"unknown field groups {sorted(bad)}")
        return self

    def as_flat(self):
        d = asdict(self)
        d.pop("params")
        d.update({f"params.{k}": v for k, v in asdict(self.params).items()})
        return d

    def hash(self):
        return io.config_hash(self.as_flat())

    @property
    def lower_bound(self):
        return self.generator == "lower-bound"


@dataclass
class DecayReport:
    config: ExperimentConfig
    table: NormTable
    rows: list
    metadata: dict
    error: str = ""

    @property
    def passed(self):
        return not self.error and bool(self.rows) and all(r["verdict"] == "pass" for r in self.rows)

    def failures(self):
        return [r for r in self.rows if r["verdict"] != "pass"]

    def report_csv(self):
        return io.csv_text(REPORT_COLUMNS, self.rows, self.config.hash())

    def series_csv(self):
        cid, backend = self.config.experiment_id, self.config.backend
        rows = [(cid, backend, t, g, kind, order, v) for t, g, kind, order, v in self.table.rows()]
        return io.csv_text(SERIES_COLUMNS, rows, self.config.hash())

    def summary(self):
        """Plain text, failures first."""
        lines = [f"experiment {self.config.experiment_id} ({self.config.backend}, "
                 f"{self.config.generator}): {'PASS' if self.passed else 'FAIL'}"]
        if self.error:
            lines.append(f"  error: {self.error}")
        for r in self.failures() + [r for r in self.rows if r["verdict"] == "pass"]:
            lines.append(f"  {r['verdict'].upper():4s} {r['field_group']:8s} {r['norm_kind']}"
                         f"[{r['ell_or_p']}] exponent {r['exponent']:+.4f} +/- {r['stderr']:.4f}"
                         f" target {r['target']:+.4f}")
        sens = self.metadata.get("t1_sensitivity")
        if sens:
            lines.append("  fit-window start sensitivity (min over components):")
            for key, val in sens.items():
                lines.append(f"    {key}: {val}")
        for k in ("N0", "runtime_s"):
            if k in self.metadata:
                lines.append(f"  {k} = {self.metadata[k]}")
        return "\n".join(lines) + "\n"

    def write(self, outdir, stem=None):
        stem = stem or self.config.experiment_id
        io.atomic_write_text(f"{outdir}/{stem}_report.csv", self.report_csv())
        io.atomic_write_text(f"{outdir}/{stem}_series.csv", self.series_csv())
        io.atomic_write_text(f"{outdir}/{stem}_summary.txt", self.summary())


def _min_series(table, kind, order):
    return np.min([table.series(g, kind, order) for g in FIELD_GROUPS], axis=0)


def _initial_data(cfg, eq):
    """``(source, N0)``: RadialProfile for the radial backend, scaled FieldState otherwise."""
    if cfg.backend == "linear-radial":
        if cfg.generator == "lower-bound":
            return lower_bound_profile(cfg.eta1, cfg.N0, cfg.delta0), cfg.N0
        amps = {k: 1.0 for k in ("n_plus", "phi_plus", "n_minus", "phi_minus",
                                 "heat_plus", "heat_minus")}
        return RadialProfile.gaussian(amps, cfg.width), None
    grid = Grid(cfg.box_length, cfg.points_per_axis)
    dtype = np.dtype(cfg.dtype)
    if cfg.generator == "generic":
        st = gen_generic_data(grid, cfg.delta0, cfg.seed, cfg.n_bumps, cfg.bump_widths)
        return scale_state(st, eq), l1_norm(st)
    if cfg.generator == "lower-bound":
        st = gen_lower_bound_data(grid, cfg.eta1, cfg.N0, cfg.delta0, eq)
        st = scale_state(st, eq)
    else:
        amps = {k: 1.0 for k in ("n_plus", "phi_plus", "n_minus", "phi_minus",
                                 "heat_plus", "heat_minus")}
        st = RadialProfile.gaussian(amps, cfg.width).sample_on_grid(grid, dtype)
    if st.dtype != dtype:
        st = FieldState.from_stacked(st.stacked().astype(dtype), grid)
    return st, None if cfg.generator != "lower-bound" else cfg.N0


def _norm_table(cfg, eq, source, on_sample=None):
    times = np.asarray(cfg.times, dtype=float)
    if cfg.backend == "nonlinear":
        sc = SolverConfig(dt=cfg.dt, t_end=float(times[-1]), sample_times=tuple(times),
                          ells=tuple(int(l) for l in cfg.ells), ps=tuple(cfg.ps))
        tr = evolve_nonlinear(source, eq, sc, on_sample=on_sample)
        return tr.table
    return linear_decay_series(source, eq, times, ells=cfg.ells, ps=cfg.ps, backend=cfg.backend.split("-")[1])


def _fit_rows(cfg, table, window):
    rows = []
    kinds = [("H", float(l)) for l in cfg.ells] + [("L", float(p)) for p in cfg.ps]
    for group in cfg.groups:
        for kind, order in kinds:
            if group == "min":
                series = _min_series(table, kind, order)
            else:
                series = table.series(group, kind, order)
            slope, err = fit_power_law(table.times, series, window)
            target = target_exponent(kind, order)
            rows.append({"experiment_id": cfg.experiment_id, "backend": cfg.backend,
                         "field_group": group, "norm_kind": kind,
                         "ell_or_p": "inf" if np.isinf(order) else io.format_value(order),
                         "exponent": slope, "stderr": err, "target": target,
                         "verdict": "pass" if abs(slope - target) <= cfg.tolerance else "fail"})
    return rows


def run_experiment(cfg, on_sample=None):
    """Generate data, evolve, fit and compare against the target exponents.

    ``on_sample`` receives the state at each sample time (nonlinear backend).
    Errors and Ctrl-C end the run with a failed report carrying partial data.
    """
    cfg.validate()
    t0 = _time.perf_counter()
    eq = build_equilibrium(cfg.params)
    meta = {"config_hash": cfg.hash()}
    table = NormTable(np.asarray(cfg.times, dtype=float), cfg.backend)
    try:
        source, N0 = _initial_data(cfg, eq)
        if N0 is not None:
            meta["N0"] = N0
        table = _norm_table(cfg, eq, source, on_sample)
        rows = _fit_rows(cfg, table, cfg.window)
        if cfg.lower_bound:
            sens = {}
            for t1 in SENSITIVITY_T1:
                if t1 >= cfg.window[1]:
                    continue
                for l in cfg.ells:
                    try:
                        s, e = fit_power_law(table.times, _min_series(table, "H", l),
                                             (t1, cfg.window[1]))
                        sens[f"t1={t1:g} l={l:g}"] = f"{s:+.4f} +/- {e:.4f}"
                    except FitError as exc:
                        sens[f"t1={t1:g} l={l:g}"] = f"no fit ({exc})"
            meta["t1_sensitivity"] = sens
    except (Exception, KeyboardInterrupt) as exc:  # backend errors become a failed report with partial data
        partial = getattr(exc, "partial", None)
        if partial is not None:
            table = partial.table
        meta["runtime_s"] = round(_time.perf_counter() - t0, 3)
        return DecayReport(cfg, table, [], meta, error=f"{type(exc).__name__}: {exc}")
    meta["runtime_s"] = round(_time.perf_counter() - t0, 3)
    return DecayReport(cfg, table, rows, meta)
