"""
Test boundary handling, noise streams and the virtual-time SPDE
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.bridge.boundaries import (
    BoundarySpec, GaussianInputs, apply_boundaries, boundary_residual, boundary_sampler, initial_path,
)
from src.bridge.noise import NoiseField
from src.bridge.spde import (
    circulation, evolve, extra_drift, lattice_classical_path, noise_scales, residual_norm,
)
from src.domain.errors import DivergenceError, StructuralError
from src.domain.models import BridgeGrid, PathGrid
from src.phase_model.presets import freefield_model, squeeze_model, wiener_model


def _wiener_setup(dt=0.1, var=1.0):
    model = wiener_model(d=1.0)
    sampler = boundary_sampler(model, [0.0], [var])
    spec = BoundarySpec.mixed(model, sampler)
    return model, spec, PathGrid.from_step(0.0, 1.0, dt)


def _squeeze_setup(dt=0.05, x0=0.7, yf=-0.4):
    model = squeeze_model()
    sampler = boundary_sampler(model, [x0], [0.0], [yf], [0.0])
    spec = BoundarySpec.mixed(model, sampler)
    return model, spec, PathGrid.from_step(0.0, 1.0, dt), np.array([x0, yf])


def test_noise_is_keyed_by_trajectory():
    field = NoiseField(seed=7)
    batch = next(field.standard_blocks([0, 1, 2], (4, 1), steps=10))
    alone = next(field.standard_blocks([1], (4, 1), steps=10))

    assert batch.shape == (10, 3, 4, 1)
    assert np.array_equal(batch[:, 1], alone[:, 0])
    assert not np.array_equal(batch[:, 0], batch[:, 1])

    sampler = GaussianInputs(mean=[0.0, 1.0], var=[1.0, 4.0])
    assert np.array_equal(field.inputs(sampler, [0, 1, 2])[2], field.inputs(sampler, [2])[0])


def test_noise_blocks_cover_all_steps():
    field = NoiseField(seed=1, block=8)
    blocks = list(field.standard_blocks([0], (2,), steps=20))
    assert [b.shape[0] for b in blocks] == [8, 8, 4]


def test_mixed_boundary_spec():
    model, spec, _ = _wiener_setup()
    assert spec.start_open == (False,)
    assert spec.end_open == (True,)

    bad = BoundarySpec(start_open=(False,), end_open=(False,), sampler=spec.sampler)
    with pytest.raises(StructuralError):
        bad.validate(model)

    squeeze, squeeze_spec, _, _ = _squeeze_setup()
    assert squeeze_spec.start_open == (False, True)
    assert squeeze_spec.end_open == (True, False)


def test_ghost_rows_follow_the_drift():
    model, spec, _, _ = _squeeze_setup()
    values = np.array([[1.0, 2.0], [0.8, 1.5], [0.6, 1.2]])

    padded = apply_boundaries(values, spec, model, dt=0.1)
    assert padded.shape == (5, 2)
    # x open at tf: phi_{n+1} = phi_{n-1} + 2 dt A^x(phi_n)
    assert padded[-1, 0] == pytest.approx(0.8 + 0.2 * -0.6)
    # y open at t0: phi_{-1} = phi_1 - 2 dt A^y(phi_0)
    assert padded[0, 1] == pytest.approx(1.5 - 0.2 * 2.0)
    # pinned ends extrapolate linearly
    assert padded[0, 0] == pytest.approx(1.2)
    assert padded[-1, 1] == pytest.approx(0.9)


def test_noise_scales():
    model, spec, grid = _wiener_setup()
    scales = noise_scales(model, spec, grid.points, grid.eps, dtau=0.0025)

    assert scales[0, 0] == 0.0
    assert scales[5, 0] == pytest.approx(np.sqrt(2 * 0.0025 / 0.1))
    assert scales[-1, 0] == pytest.approx(np.sqrt(4 * 0.0025 / 0.1))

    free = freefield_model()
    free_spec = BoundarySpec.mixed(free, boundary_sampler(free, [1.0, 0.0], [0.0, 0.0]))
    assert np.all(noise_scales(free, free_spec, 5, 0.25, 0.01) == 0.0)


def test_scaled_noise_has_lattice_variance():
    model, spec, grid = _wiener_setup()
    dtau = 0.0025
    scales = noise_scales(model, spec, grid.points, grid.eps, dtau)
    field = NoiseField(seed=3, block=1000)
    draws = np.concatenate(list(field.standard_blocks(range(4), (grid.points, 1), steps=30000)))
    increments = draws * scales

    interior = increments[:, :, 1:-1, 0]
    assert interior.size >= 1_000_000
    expected = 2 * model.d * dtau / grid.eps
    assert np.mean(interior ** 2) == pytest.approx(expected, rel=0.01)
    assert np.mean(increments[:, :, -1, 0] ** 2) == pytest.approx(2 * expected, rel=0.02)
    assert np.all(increments[:, :, 0, 0] == 0.0)


def test_interior_drift_vanishes_on_straight_line():
    model, _, grid = _wiener_setup()
    line = grid.times()[:, None] * 2.0 - 0.5

    assert np.allclose(extra_drift(model, line, grid.eps), 0.0, atol=1e-10)


def test_circulation_is_antisymmetric():
    model = freefield_model(omega=2.0)
    c = circulation(model, np.zeros(2))

    assert np.allclose(c, -c.T)
    assert np.abs(c[0, 1]) == pytest.approx(4.0)
    assert np.allclose(circulation(squeeze_model(), np.zeros(2)), 0.0)


def test_zero_tau_returns_initial_paths():
    model, spec, grid = _wiener_setup()
    start = np.linspace(0.0, 1.0, grid.points)[:, None]
    bridge = BridgeGrid.evenly_spaced(grid, dtau=0.0025, tau_max=0.0, count=11)

    record = evolve(start, bridge, spec, model, noise=NoiseField(3))
    assert record.snapshots.shape == (1, 1, grid.points, 1)
    assert np.array_equal(record.at(0.0)[0], start)


def test_flat_path_is_fixed_without_noise():
    model, spec, grid = _wiener_setup()
    start = np.full((grid.points, 1), 0.3)
    bridge = BridgeGrid.evenly_spaced(grid, dtau=0.0025, tau_max=0.5, count=3)

    record = evolve(start, bridge, spec, model, noise=None)
    assert np.allclose(record.snapshots, 0.3, atol=1e-14)


def test_evolution_is_deterministic_and_keeps_pins():
    model, spec, grid = _wiener_setup()
    bridge = BridgeGrid.evenly_spaced(grid, dtau=0.0025, tau_max=0.25, count=2)
    ids = [4, 5, 6]
    inputs = NoiseField(9).inputs(spec.sampler, ids)
    start = initial_path(inputs, spec, grid.points)

    first = evolve(start, bridge, spec, model, noise=NoiseField(9), trajectories=ids, inputs=inputs)
    second = evolve(start, bridge, spec, model, noise=NoiseField(9), trajectories=ids, inputs=inputs)
    other = evolve(start, bridge, spec, model, noise=NoiseField(10), trajectories=ids, inputs=inputs)

    assert np.array_equal(first.snapshots, second.snapshots)
    assert not np.array_equal(first.snapshots[-1], other.snapshots[-1])
    assert np.array_equal(first.snapshots[-1][:, 0, 0], inputs[:, 0])

    single = evolve(start[1], bridge, spec, model, noise=NoiseField(9), trajectories=[5], inputs=inputs[1:2])
    assert np.allclose(single.snapshots[-1][0], first.snapshots[-1][1])


def test_batch_shape_checks():
    model, spec, grid = _wiener_setup()
    bridge = BridgeGrid.evenly_spaced(grid, dtau=0.0025, tau_max=0.01, count=2)

    with pytest.raises(StructuralError):
        evolve(np.zeros((2, grid.points, 1)), bridge, spec, model, trajectories=[0])
    with pytest.raises(StructuralError):
        evolve(np.zeros((grid.points + 1, 1)), bridge, spec, model)


def test_classical_path_is_a_fixed_point():
    model, spec, grid, inputs = _squeeze_setup()
    classical = lattice_classical_path(model, grid, spec, inputs)
    t = grid.times()

    assert np.allclose(classical[:, 0], 0.7 * np.exp(-t), atol=5e-3)
    assert np.allclose(classical[:, 1], -0.4 * np.exp(t - 1.0), atol=5e-3)
    assert boundary_residual(classical, spec, model, grid.eps) < 0.05

    bridge = BridgeGrid(path=grid, dtau=grid.eps ** 2 / 4, tau_max=5.0, checkpoints=(0.0, 5.0))
    record = evolve(classical, bridge, spec, model, noise=None)
    assert np.max(np.abs(record.at(5.0)[0] - classical)) <= 1e-6


def test_continuum_classical_path_barely_moves():
    model, spec, grid, inputs = _squeeze_setup(dt=0.03)
    t = grid.times()
    exact = np.column_stack([inputs[0] * np.exp(-t), inputs[1] * np.exp(t - 1.0)])

    bridge = BridgeGrid(path=grid, dtau=0.0002, tau_max=5.0, checkpoints=(0.0, 0.0002, 5.0))
    record = evolve(exact, bridge, spec, model, noise=None)
    # the open-end ghost rows are first order, so the lattice drifts slightly off the continuum path
    assert np.max(np.abs(record.at(0.0002)[0] - exact)) <= 2e-6
    assert np.max(np.abs(record.at(5.0)[0] - exact)) <= 1e-4


def test_perturbation_relaxes_monotonically():
    model, spec, grid, inputs = _squeeze_setup()
    classical = lattice_classical_path(model, grid, spec, inputs)
    bump = 0.05 * np.sin(np.pi * np.arange(grid.points) / grid.n)
    start = classical + bump[:, None] * (~spec.pinned_mask(grid.points))

    bridge = BridgeGrid.evenly_spaced(grid, dtau=grid.eps ** 2 / 4, tau_max=3.0, count=7)
    record = evolve(start, bridge, spec, model, noise=None)
    norms = [residual_norm(model, snap[0], grid.eps, spec) for snap in record.snapshots]

    assert all(b < a for a, b in zip(norms, norms[1:]))
    assert norms[-1] <= 1e-4 * norms[0]


def test_divergence_is_reported():
    model, spec, grid = _wiener_setup()
    bridge = BridgeGrid.evenly_spaced(grid, dtau=0.1, tau_max=20.0, count=2)
    start = np.zeros((grid.points, 1))

    with pytest.raises(DivergenceError) as excinfo:
        evolve(start, bridge, spec, model, noise=NoiseField(0), trajectories=[12])
    assert excinfo.value.trajectory == 12
