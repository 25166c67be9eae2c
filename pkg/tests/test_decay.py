import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tpdl.decay import (ConfigError, ExperimentConfig, FitError, SENSITIVITY_T1, fit_power_law,
                        gen_generic_data, gen_lower_bound_data, l1_norm, lower_bound_profile,
                        run_experiment, target_exponent)
from tpdl.fields import FieldState, Grid, dealias_mask, scale_state, unscale_state


# --- fits -------------------------------------------------------------------

def test_fit_exact_power_law():
    t = np.geomspace(1, 1e4, 40)
    s, err = fit_power_law(t, 2.5 * (1 + t) ** -0.75)
    assert s == pytest.approx(-0.75, abs=1e-12)
    assert err < 1e-12


def test_fit_perturbed_power_law():
    t = np.geomspace(1, 1e4, 60)
    v = 3 * (1 + t) ** -1.25 * (1 + 0.01 * np.sin(np.log(t)))
    s, _ = fit_power_law(t, v)
    assert s == pytest.approx(-1.25, abs=0.01)


def test_fit_window_and_errors():
    t = np.geomspace(1, 1e4, 40)
    v = (1 + t) ** -1.0
    s, _ = fit_power_law(t, v, (100.0, 1e4))
    assert s == pytest.approx(-1.0, abs=1e-12)
    with pytest.raises(FitError):
        fit_power_law(t, v, (5000.0, 1e4))
    v2 = v.copy()
    v2[-1] = 0.0
    with pytest.raises(FitError):
        fit_power_law(t, v2)
    assert fit_power_law(t, np.ones_like(t)) == (0.0, 0.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(-3.0, 0.0), st.floats(1e-6, 1e6))
def test_fit_recovers_any_exponent(a, c):
    t = np.geomspace(1, 1e3, 20)
    s, _ = fit_power_law(t, c * (1 + t) ** a)
    assert s == pytest.approx(a, abs=1e-9)


def test_target_exponents():
    assert [target_exponent("H", l) for l in range(4)] == [-0.75, -1.25, -1.75, -2.25]
    assert target_exponent("L", 2.0) == pytest.approx(-0.75)
    assert target_exponent("L", math.inf) == -1.5
    with pytest.raises(ValueError):
        target_exponent("Q", 1)


# --- generators -------------------------------------------------------------

@pytest.fixture(scope="module")
def grid():
    return Grid(8 * np.pi, 24)


def test_generic_data_norm_and_band(grid):
    st_ = gen_generic_data(grid, 1e-3, seed=4)
    assert st_.hs_norm(2) == pytest.approx(1e-3, rel=1e-12)
    mask = dealias_mask(grid)
    for arr in st_.stacked():
        assert np.abs(arr[~mask]).max() == 0.0
        assert arr[0, 0, 0] == 0.0


def test_generic_data_deterministic(grid):
    a = gen_generic_data(grid, 1e-3, seed=11).stacked()
    b = gen_generic_data(grid, 1e-3, seed=11).stacked()
    c = gen_generic_data(grid, 1e-3, seed=12).stacked()
    np.testing.assert_array_equal(a, b)
    assert np.abs(a - c).max() > 0
    with pytest.raises(ConfigError):
        gen_generic_data(grid, 0.0, seed=1)


def test_lower_bound_data(eq):
    grid = Grid(64 * np.pi, 32)
    eta1, N0, d0 = 0.1, 2.0, 1e-3
    st_ = gen_lower_bound_data(grid, eta1, N0, d0, eq)
    sc = scale_state(st_, eq)
    # only n+ is populated in scaled variables
    for k in ("u_plus", "n_minus", "u_minus"):
        assert np.abs(getattr(sc, k)).max() == 0.0
    scale = (2 * np.pi) ** 1.5 / grid.L ** 3
    low = grid.kmag() <= eta1
    # Nyquist entries report |k| = 0 but are zeroed by convention
    M = grid.M
    low[M // 2] = low[:, M // 2] = low[:, :, -1] = False
    assert low.sum() > 1
    vals = np.abs(sc.n_plus[low]) / scale
    assert vals.min() >= N0 * math.sqrt(d0)
    assert vals.min() == pytest.approx(1.5 * N0 * math.sqrt(d0), rel=1e-12)


def test_lower_bound_data_errors(eq):
    with pytest.raises(ConfigError):
        gen_lower_bound_data(Grid(8 * np.pi, 16), 100.0, 1.0, 1e-3, eq)
    with pytest.raises(ConfigError):
        gen_lower_bound_data(Grid(8 * np.pi, 16), 0.01, 1.0, 1e-3, eq)
    with pytest.raises(ConfigError):
        lower_bound_profile(-0.1, 1.0, 1e-3)


def test_lower_bound_profile_plateau():
    prof = lower_bound_profile(0.1, 1.0, 4e-4)
    r = np.array([0.0, 0.05, 0.1, 0.15, 0.2, 0.3])
    v = prof.samples(r)[:, 0]
    np.testing.assert_allclose(v[:3], 1.5 * 0.02)
    assert 0 < v[3] < v[0] and v[4] == 0 and v[5] == 0
    assert np.all(prof.samples(r)[:, 1:] == 0)


def test_scaled_unscaled_round_trip(eq, grid):
    st_ = gen_generic_data(grid, 1e-3, seed=2)
    back = unscale_state(scale_state(st_, eq), eq)
    assert np.abs(back.stacked() - st_.stacked()).max() <= 1e-12 * np.abs(st_.stacked()).max()


def test_l1_norm_of_constant(grid):
    st_ = FieldState.zeros(grid)
    st_.n_plus[0, 0, 0] = 2.0
    assert l1_norm(st_) == pytest.approx(2.0 * grid.L ** 3, rel=1e-12)


# --- configs and experiments --------------------------------------------------

def test_config_validation():
    base = ExperimentConfig(times=(1.0, 2.0))
    base.validate()
    for bad in (dict(generator="nope"), dict(backend="nope"), dict(window=(0.5, 10.0)),
                dict(window=(10.0, 5.0)), dict(times=()), dict(tolerance=0.0),
                dict(groups=("n_plus", "bogus")), dict(generator="generic"),
                dict(backend="linear-grid", window=(1.0, 1e6))):
        with pytest.raises(ConfigError):
            replace(base, **bad).validate()


def test_config_hash_changes_with_content():
    a = ExperimentConfig(times=(1.0, 2.0))
    assert a.hash() == ExperimentConfig(times=(1.0, 2.0)).hash()
    assert a.hash() != replace(a, seed=1).hash()
    assert "params.f_slope" in a.as_flat()


def _radial_cfg(**kw):
    base = dict(experiment_id="t", generator="gaussian", backend="linear-radial", ells=(0, 1),
                times=tuple(np.geomspace(1, 1e4, 30)), window=(100.0, 1e4))
    base.update(kw)
    return ExperimentConfig(**base)


def test_run_radial_experiment():
    rep = run_experiment(_radial_cfg())
    assert rep.passed, rep.summary()
    exps = [r["exponent"] for r in rep.rows]
    # ladder monotone in l
    assert exps[1] < exps[0]
    assert rep.report_csv().startswith("# config_hash=")


def test_failed_verdict_is_reported():
    rep = run_experiment(_radial_cfg(tolerance=1e-6))
    assert not rep.passed and rep.failures()
    assert rep.summary().splitlines()[1].lstrip().startswith("FAIL")


def test_lower_bound_experiment_sensitivity():
    cfg = _radial_cfg(generator="lower-bound", ells=(0,), groups=("min",),
                      times=tuple(np.geomspace(1, 1e4, 40)), window=(200.0, 1e4))
    rep = run_experiment(cfg)
    assert rep.passed, rep.summary()
    sens = rep.metadata["t1_sensitivity"]
    assert len(sens) == len(SENSITIVITY_T1)
    assert "sensitivity" in rep.summary()


def test_errors_become_failed_reports():
    cfg = _radial_cfg(times=(1.0, 2.0, 3.0))  # too few samples in the window
    rep = run_experiment(cfg)
    assert rep.error and not rep.passed
    assert "FitError" in rep.summary()


def test_report_files(tmp_path):
    rep = run_experiment(_radial_cfg())
    rep.write(str(tmp_path))
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["t_report.csv", "t_series.csv", "t_summary.txt"]
    first = (tmp_path / "t_report.csv").read_text().splitlines()
    assert first[0] == f"# config_hash={rep.config.hash()}"
    assert first[1] == "experiment_id,backend,field_group,norm_kind,ell_or_p,exponent,stderr,target,verdict"
