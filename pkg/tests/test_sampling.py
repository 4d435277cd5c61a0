"""
Test ensemble statistics, reference oracles and small end-to-end ensembles
"""

import sys
from functools import partial
from pathlib import Path

import numpy as np
import pytest

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.bridge.boundaries import BoundarySpec, boundary_sampler
from src.domain.errors import ConfigError, StructuralError, UnsupportedModelError
from src.domain.models import BridgeGrid, EnsembleSummary, PathGrid
from src.phase_model.presets import build_model, freefield_model, squeeze_model, wiener_model
from src.sampling.ensemble import EnsembleConfig, run_ensemble
from src.sampling.oracles import (
    classical_path, direct_tssde_oracle, free_field_oracle, heisenberg_oracle, lattice_oracle,
    ou_oracle, preset_references, propagated_oracle, wiener_oracle,
)
from src.sampling.stats import (
    compare, equilibration_diagnostic, jackknife_variance_error, moments, observable_number,
    reorder_variance, summarize, uncertainty_product,
)

SQUEEZE_YF_VAR = (1.0 + np.exp(2.0)) / 4.0


def _summary(variance, taus, se=0.01):
    """Single-component summary from a (n_tau, n_t) variance profile"""
    variance = np.asarray(variance, dtype=float)[..., None]
    shape = variance.shape
    return EnsembleSummary(
        taus=np.asarray(taus, dtype=float), times=np.linspace(0.0, 1.0, shape[1]), components=["x"],
        mean=np.zeros(shape), variance=variance, stderr=np.full(shape, se),
        stderr_mean=np.zeros(shape), n_traj=100, label="synthetic",
    )


def _squeeze_config(n_traj, dt=0.1, tau_max=3.0, count=7, batch_size=200, seed=11):
    model = squeeze_model()
    sampler = boundary_sampler(model, [0.0], [0.5], [0.0], [SQUEEZE_YF_VAR])
    grid = BridgeGrid.evenly_spaced(PathGrid.from_step(0.0, 1.0, dt), dt ** 2 / 4, tau_max, count)
    return EnsembleConfig(model=model, spec=BoundarySpec.mixed(model, sampler), grid=grid,
                          n_traj=n_traj, seed=seed, batch_size=batch_size, label="squeeze")


def _wiener_config(n_traj, dt=0.1, tau_max=3.0, count=7, batch_size=200, seed=5, workers=1):
    model = wiener_model(d=1.0)
    sampler = boundary_sampler(model, [0.0], [1.0])
    grid = BridgeGrid.evenly_spaced(PathGrid.from_step(0.0, 1.0, dt), dt ** 2 / 4, tau_max, count)
    return EnsembleConfig(model=model, spec=BoundarySpec.mixed(model, sampler), grid=grid,
                          n_traj=n_traj, seed=seed, batch_size=batch_size, workers=workers,
                          label="wiener", model_factory=partial(build_model, "wiener", {"d": 1.0}))


# --- statistics --------------------------------------------------------------

def test_jackknife_matches_leave_one_out():
    rng = np.random.default_rng(0)
    samples = rng.standard_normal(25) * 2.0 + 1.0

    deleted = np.array([np.var(np.delete(samples, i), ddof=1) for i in range(25)])
    expected = np.sqrt(24 / 25 * np.sum((deleted - deleted.mean()) ** 2))
    assert float(jackknife_variance_error(samples)) == pytest.approx(expected, rel=1e-10)

    assert np.isnan(jackknife_variance_error(samples[:2]))


def test_summarize_moments():
    rng = np.random.default_rng(2)
    samples = rng.standard_normal((2, 50, 3, 2))
    summary = summarize(samples, [0.0, 1.0], [0.0, 0.5, 1.0], ["x", "y"], label="demo")

    assert summary.variance.shape == (2, 3, 2)
    assert summary.variance[1, 2, 0] == pytest.approx(np.var(samples[1, :, 2, 0], ddof=1))
    mean, var, se = moments(summary, 1.0, 0.5, "y")
    assert mean == pytest.approx(samples[1, :, 1, 1].mean())
    assert var == pytest.approx(np.var(samples[1, :, 1, 1], ddof=1))
    assert se > 0
    assert summary.samples is None

    single = summarize(samples[:, :1], [0.0, 1.0], [0.0, 0.5, 1.0], ["x", "y"])
    assert np.all(single.variance == 0.0)
    assert np.all(np.isnan(single.stderr))

    with pytest.raises(StructuralError):
        summarize(samples, [0.0], [0.0, 0.5, 1.0], ["x", "y"])


def test_compare_scores():
    rng = np.random.default_rng(4)
    summary = summarize(rng.standard_normal((1, 200, 5, 1)), [1.0], np.linspace(0, 1, 5), ["x"])

    assert compare(summary, summary) == 0.0
    exact = wiener_oracle(v0=0.0, d=0.0, component="x")
    exact.variance = lambda t: summary.variance[0, :, 0]
    assert compare(summary, exact) == 0.0

    synthetic = _summary(np.ones((1, 4)), [0.0], se=0.0)
    off = wiener_oracle(v0=2.0, d=0.0, component="x")
    assert compare(synthetic, off) == np.inf
    assert compare(synthetic, wiener_oracle(v0=1.0, d=0.0, component="x")) == 0.0

    with pytest.raises(ConfigError):
        compare(summary, [])


def test_equilibration_on_settling_profile():
    profile = np.array([0.0, 0.5, 0.9, 1.0, 1.0, 1.0])[:, None] * np.ones((6, 4))
    result = equilibration_diagnostic(_summary(profile, np.arange(6) * 0.5), "x")

    assert result.equilibrated
    assert result.tau_star == pytest.approx(1.5)
    assert len(result.changes) == 5

    strict = equilibration_diagnostic(_summary(profile, np.arange(6) * 0.5), "x", statistic="max")
    assert strict.tau_star == pytest.approx(1.5)
    with pytest.raises(ConfigError):
        equilibration_diagnostic(_summary(profile, np.arange(6) * 0.5), "x", statistic="median")


def test_equilibration_on_constant_profile():
    result = equilibration_diagnostic(_summary(np.ones((4, 3)), [0.0, 1.0, 2.0, 3.0]), 0)
    assert result.tau_star == 0.0


def test_equilibration_still_moving():
    profile = np.linspace(0.0, 1.0, 5)[:, None] * np.ones((5, 3))
    result = equilibration_diagnostic(_summary(profile, np.arange(5.0)), "x")

    assert result.tau_star is None
    assert "still moving" in result.diagnostic

    with pytest.raises(StructuralError):
        equilibration_diagnostic(_summary(np.ones((2, 3)), [0.0, 1.0]), "x")


def test_observables():
    vacuum = observable_number([0.0, 0.0], [0.5, 0.5])
    assert vacuum == pytest.approx(0.0)
    assert observable_number([1.0, 0.0], [0.5, 0.5]) == pytest.approx(1.0)

    assert reorder_variance(0.5) == pytest.approx(0.25)
    assert reorder_variance(0.5, "normal") == pytest.approx(0.0)
    assert reorder_variance(0.5, "antinormal") == pytest.approx(0.5)
    assert uncertainty_product(0.5, 0.5) == pytest.approx(1.0 / 16.0)
    with pytest.raises(ConfigError):
        reorder_variance(0.5, "weyl-ish")


# --- oracles -----------------------------------------------------------------

def test_ou_oracle_matches_squeezed_vacuum():
    t = np.linspace(0.0, 1.0, 11)
    x = ou_oracle(1.0, 0.5, 0.5, "forward", 0.0, "x")
    y = ou_oracle(1.0, 0.5, SQUEEZE_YF_VAR, "backward", 1.0, "y")

    assert np.allclose(x(t), heisenberg_oracle(t, "x") + 0.25)
    assert np.allclose(y(t), heisenberg_oracle(t, "y") + 0.25)
    assert x(np.array([50.0])) == pytest.approx(0.25)

    with pytest.raises(ConfigError):
        ou_oracle(0.0, 1.0, 1.0)
    with pytest.raises(ConfigError):
        ou_oracle(1.0, 1.0, 1.0, direction="sideways")


def test_propagated_oracle_rotates_input_spread():
    model = freefield_model(omega=1.0)
    sampler = boundary_sampler(model, [1.0, 0.0], [1.0, 0.0])
    t = np.linspace(0.0, 2.0, 9)
    q, p = propagated_oracle(model, sampler)

    assert np.allclose(q(t), np.cos(t) ** 2)
    assert np.allclose(p(t), np.sin(t) ** 2)
    alpha = free_field_oracle(1.0, 1.0, t)
    assert np.allclose(q.mean(t), alpha.real)
    assert np.allclose(p.mean(t), alpha.imag)

    with pytest.raises(UnsupportedModelError):
        propagated_oracle(squeeze_model(), boundary_sampler(squeeze_model(), [0.0], [0.5], [0.0], [0.5]))


def test_classical_paths():
    grid = PathGrid.from_step(0.0, 1.0, 0.05)
    t = grid.times()

    free = classical_path(freefield_model(omega=2.0), np.array([1.0, 0.5]), grid)
    alpha = free_field_oracle(1.0 + 0.5j, 2.0, t)
    assert np.allclose(free[:, 0], alpha.real, atol=1e-8)
    assert np.allclose(free[:, 1], alpha.imag, atol=1e-8)

    squeeze = classical_path(squeeze_model(), np.array([0.7, -0.4]), grid)
    assert np.allclose(squeeze[:, 0], 0.7 * np.exp(-t), atol=1e-8)
    assert np.allclose(squeeze[:, 1], -0.4 * np.exp(t - 1.0), atol=1e-8)

    with pytest.raises(StructuralError):
        classical_path(squeeze_model(), np.array([0.7]), grid)


def test_direct_sde_oracle_matches_closed_forms():
    grid = PathGrid.from_step(0.0, 1.0, 0.05)
    model = squeeze_model()
    sampler = boundary_sampler(model, [0.0], [0.5], [0.0], [SQUEEZE_YF_VAR])
    summary = direct_tssde_oracle(model, grid, sampler, n_traj=2000, seed=3)

    assert summary.taus[0] == np.inf
    refs = preset_references("squeeze", model, sampler, grid, {"strength": 1.0})
    assert compare(summary, refs) <= 4.0

    wiener = wiener_model(d=1.0)
    w_sampler = boundary_sampler(wiener, [0.0], [1.0])
    w_summary = direct_tssde_oracle(wiener, grid, w_sampler, n_traj=2000, seed=4)
    assert compare(w_summary, wiener_oracle(1.0, 1.0)) <= 4.0


def test_standard_errors_shrink_with_trajectories():
    grid = PathGrid.from_step(0.0, 1.0, 0.1)
    model = wiener_model(d=1.0)
    sampler = boundary_sampler(model, [0.0], [1.0])
    small = direct_tssde_oracle(model, grid, sampler, n_traj=1000, seed=21)
    large = direct_tssde_oracle(model, grid, sampler, n_traj=4000, seed=22)

    ratio = np.mean(small.stderr[0, :, 0] / large.stderr[0, :, 0])
    assert ratio == pytest.approx(2.0, rel=0.2)


def test_lattice_oracle_is_exact_for_wiener():
    model = wiener_model(d=1.0)
    spec = BoundarySpec.mixed(model, boundary_sampler(model, [0.0], [1.0]))
    grid = BridgeGrid.evenly_spaced(PathGrid.from_step(0.0, 1.0, 0.1), 0.0025, 1.0, 2)
    exact = lattice_oracle(model, grid, spec)

    assert np.allclose(exact.variance[0, :, 0], 1.0 + grid.path.times(), atol=1e-8)
    assert np.allclose(exact.mean, 0.0, atol=1e-10)


def test_lattice_oracle_approaches_continuum():
    model = squeeze_model()
    spec = BoundarySpec.mixed(model, boundary_sampler(model, [0.0], [0.5], [0.0], [SQUEEZE_YF_VAR]))
    path = PathGrid.from_step(0.0, 1.0, 0.025)
    exact = lattice_oracle(model, BridgeGrid.evenly_spaced(path, path.eps ** 2 / 4, 1.0, 2), spec)
    t = path.times()

    assert np.allclose(exact.variance[0, :, 0], heisenberg_oracle(t, "x") + 0.25, rtol=0.05)
    assert np.allclose(exact.variance[0, :, 1], heisenberg_oracle(t, "y") + 0.25, rtol=0.05)


def test_lattice_oracle_needs_linear_model():
    from src.phase_model.log_transform import log_transform

    _, model = log_transform([[1.0]], lam=1.0)
    spec = BoundarySpec.mixed(model, boundary_sampler(model, [0.0], [0.1], [0.0], [0.1]))
    grid = BridgeGrid.evenly_spaced(PathGrid.from_step(0.0, 1.0, 0.1), 0.0025, 1.0, 2)
    with pytest.raises(UnsupportedModelError):
        lattice_oracle(model, grid, spec)


# --- ensembles ---------------------------------------------------------------

def test_squeeze_ensemble_matches_oracles():
    config = _squeeze_config(n_traj=400)
    summary = run_ensemble(config)

    assert summary.n_traj == 400
    assert list(summary.components) == ["x", "y"]
    exact = lattice_oracle(config.model, config.grid, config.spec)
    assert compare(summary, exact) <= 4.0
    refs = preset_references("squeeze", config.model, config.spec.sampler, config.grid.path)
    assert compare(summary, refs) <= 4.5

    direct = direct_tssde_oracle(config.model, config.grid.path, config.spec.sampler, n_traj=2000, seed=8)
    assert compare(summary, direct) <= 4.0

    var, se = summary.variance[-1], summary.stderr[-1]
    # anti-normal floor and the uncertainty bound
    assert np.all(var >= 0.25 - 3 * se)
    slack = 3 * (se[:, 0] * var[:, 1] + se[:, 1] * var[:, 0])
    assert np.all(var[:, 0] * var[:, 1] >= 1.0 / 16.0 - slack)

    x = equilibration_diagnostic(summary, "x")
    assert x.equilibrated and x.tau_star <= 1.5


def test_wiener_ensemble_and_equilibration():
    config = _wiener_config(n_traj=400, count=11)
    summary = run_ensemble(config)

    assert compare(summary, wiener_oracle(1.0, 1.0)) <= 4.0
    result = equilibration_diagnostic(summary, "x")
    assert result.equilibrated
    # slowest lattice mode relaxes at rate (pi/2)^2 ~ 2.47, so the variance settles well before tau = 1.5
    assert 0.0 < result.tau_star <= 1.5


def test_ensemble_is_reproducible_across_batching():
    first = run_ensemble(_wiener_config(n_traj=12, tau_max=0.2, count=3, batch_size=12))
    second = run_ensemble(_wiener_config(n_traj=12, tau_max=0.2, count=3, batch_size=5))

    assert np.allclose(first.variance, second.variance, rtol=0.0, atol=1e-12)
    assert np.allclose(first.mean, second.mean, rtol=0.0, atol=1e-12)

    other = run_ensemble(_wiener_config(n_traj=12, tau_max=0.2, count=3, seed=6))
    assert not np.allclose(first.variance[-1], other.variance[-1])


def test_ensemble_with_workers_matches_serial():
    serial = run_ensemble(_wiener_config(n_traj=8, tau_max=0.1, count=2, batch_size=4))
    pooled = run_ensemble(_wiener_config(n_traj=8, tau_max=0.1, count=2, batch_size=4, workers=2))

    assert np.allclose(serial.variance, pooled.variance, rtol=0.0, atol=1e-12)


def test_deterministic_ensemble_is_the_classical_path():
    model = freefield_model(omega=1.0)
    sampler = boundary_sampler(model, [1.0, 0.0], [0.0, 0.0])
    grid = BridgeGrid.evenly_spaced(PathGrid.from_step(0.0, 1.0, 0.05), 0.0002, 0.0, 11)
    config = EnsembleConfig(model=model, spec=BoundarySpec.mixed(model, sampler), grid=grid,
                            n_traj=1, seed=0)
    summary = run_ensemble(config)

    alpha = free_field_oracle(1.0, 1.0, grid.path.times())
    assert summary.taus.tolist() == [0.0]
    assert np.allclose(summary.mean[0, :, 0], alpha.real, atol=1e-8)
    assert np.allclose(summary.mean[0, :, 1], alpha.imag, atol=1e-8)
    assert np.all(summary.variance == 0.0)


def test_ensemble_config_validation():
    with pytest.raises(ConfigError):
        _wiener_config(n_traj=0)
    with pytest.raises(ConfigError):
        _wiener_config(n_traj=4, batch_size=0)
    assert _wiener_config(n_traj=10, batch_size=4).batches() == [[0, 1, 2, 3], [4, 5, 6, 7], [8, 9]]
