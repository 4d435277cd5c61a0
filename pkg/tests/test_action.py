"""
Test velocity fields, discrete actions and transition densities
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.action.engine import (
    lagrangian, log_normalization, path_action, potential_V, step_action, transition_density,
    velocity_fields,
)
from src.domain.errors import ConfigError, DeterministicModelError, StructuralError
from src.domain.models import PathField, PathGrid, Scheme
from src.phase_model.presets import freefield_model, squeeze_model, wiener_model


def _path(values, tf=1.0):
    values = np.asarray(values, dtype=float)
    return PathField(grid=PathGrid(0.0, tf, values.shape[0] - 1), values=values)


@pytest.mark.parametrize("scheme", [Scheme.I, Scheme.II])
def test_action_matches_transition_density(scheme):
    model = squeeze_model()
    rng = np.random.default_rng(42)
    eps = 0.05
    grid = PathGrid(0.0, eps, 1)

    for _ in range(200):
        window = 0.3 * rng.standard_normal((2, 2))
        s = step_action(PathField(grid=grid, values=window), 1, scheme, model)
        p = transition_density(window[0], window[1], eps, scheme, model)
        assert p == pytest.approx(np.exp(-s), rel=1e-10)


def test_midpoint_scheme_has_no_plain_density():
    with pytest.raises(ConfigError):
        transition_density([0.0, 0.0], [0.1, 0.1], 0.1, "III", squeeze_model())


def test_velocity_fields_scheme_one():
    model = squeeze_model()
    path = _path([[1.0, 2.0], [1.5, 1.0]])

    v_x, v_y = velocity_fields(path, 1, "I", model)
    # a^x at x_{k-1} = 1.0 is -1.0, a^y at y_k = 1.0 is -1.0
    assert v_x == pytest.approx([0.5 / 1.0 + 1.0])
    assert v_y == pytest.approx([1.0 / 1.0 + 1.0])

    with pytest.raises(StructuralError):
        velocity_fields(path, 2, "I", model)


def test_velocity_fields_midpoint_on_ramp():
    model = squeeze_model()
    eps = 0.1
    steps = np.arange(11)
    path = _path(np.column_stack([eps * steps, np.zeros(11)]))

    for k in (1, 4, 10):
        v_x, v_y = velocity_fields(path, k, "III", model)
        assert v_x == pytest.approx([1.0 + (k - 0.5) * eps])
        assert v_y == pytest.approx([0.0])


def test_flat_wiener_path_costs_only_normalization():
    model = wiener_model(d=1.0)
    path = _path(np.zeros((11, 1)))

    value = path_action(path, "I", model)
    norm = log_normalization(0.1, model)
    assert norm == pytest.approx(0.5 * np.log(2 * np.pi * 0.1))
    assert np.allclose(value.steps, norm)
    assert value.total == pytest.approx(10 * norm)
    assert value.physical == pytest.approx(0.0, abs=1e-12)


def test_path_action_is_sum_of_steps():
    model = squeeze_model()
    rng = np.random.default_rng(1)
    path = _path(rng.standard_normal((9, 2)))

    for scheme in ("I", "II", "III"):
        value = path_action(path, scheme, model)
        assert value.total == pytest.approx(sum(step_action(path, k, scheme, model) for k in range(1, 9)))


def test_midpoint_adds_divergence_correction():
    model = squeeze_model()
    path = _path([[0.0, 0.0], [0.0, 0.0]], tf=0.1)

    # zero path: all drifts vanish, so schemes differ only by eps * (div_x + div_y) / 2
    endpoint = path_action(path, "I", model).total
    midpoint = path_action(path, "III", model).total
    assert midpoint - endpoint == pytest.approx(0.5 * 0.1 * (-1.0 + -1.0))


def test_midpoint_gap_beyond_potential_halves_with_step():
    model = squeeze_model()
    remainders = []
    for eps in (0.04, 0.02, 0.01):
        t = eps * np.arange(int(round(1.0 / eps)) + 1)
        path = _path(np.column_stack([np.sin(2 * t) + 0.3, np.cos(t)]))
        gap = path_action(path, "I", model).total - path_action(path, "III", model).total
        mid = 0.5 * (path.values[:-1] + path.values[1:])
        # the divergence term alone contributes eps * sum V; what is left is O(eps)
        remainders.append(abs(gap - eps * np.sum(potential_V(mid, model))))

    for coarse, fine in zip(remainders, remainders[1:]):
        assert coarse / fine == pytest.approx(2.0, rel=0.2)


def test_potential_and_lagrangian():
    model = squeeze_model()
    phi = np.array([0.4, -0.3])

    assert potential_V(phi, model) == pytest.approx(1.0)
    # on the classical flow phi_dot = A only -V remains
    assert lagrangian(phi, model.A(phi), model) == pytest.approx(-1.0)
    assert lagrangian(phi, model.A(phi) + [1.0, 0.0], model) == pytest.approx(1.0 / (2 * 0.5) - 1.0)


def test_deterministic_model_rejected():
    model = freefield_model()
    path = _path(np.zeros((3, 2)))

    with pytest.raises(DeterministicModelError):
        path_action(path, "I", model)
    with pytest.raises(DeterministicModelError):
        lagrangian([0.0, 0.0], [0.0, 0.0], model)


def test_dimension_mismatch():
    with pytest.raises(StructuralError):
        path_action(_path(np.zeros((3, 1))), "I", squeeze_model())
