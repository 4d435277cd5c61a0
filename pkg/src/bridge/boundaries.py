"""
Q_Bridge - Boundary Conditions
Mixed Dirichlet / open (value-derivative) boundaries and input-event samplers
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from src.domain.errors import ConfigError, StructuralError
from src.domain.models import VariableKind
from src.phase_model.quadrature import QuadratureModel


class InputSampler:
    """Distribution of input events: x and deterministic values at t0, y values at tf"""

    dim: int

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        raise NotImplementedError

    def variance(self) -> np.ndarray:
        raise NotImplementedError

    def expected(self) -> np.ndarray:
        raise NotImplementedError


@dataclass
class GaussianInputs(InputSampler):
    """Independent Gaussians per component"""
    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        self.var = np.atleast_1d(np.asarray(self.var, dtype=float))
        if self.mean.shape != self.var.shape:
            raise ConfigError(f"input mean {self.mean.shape} and variance {self.var.shape} differ in shape")
        if np.any(self.var < 0):
            raise ConfigError("input variances must be non-negative")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return self.mean + np.sqrt(self.var) * rng.standard_normal((count, self.dim))

    def variance(self) -> np.ndarray:
        return self.var.copy()

    def expected(self) -> np.ndarray:
        return self.mean.copy()


@dataclass
class TableInputs(InputSampler):
    """Joint input events drawn uniformly from a table of rows"""
    rows: np.ndarray

    def __post_init__(self):
        self.rows = np.atleast_2d(np.asarray(self.rows, dtype=float))
        if self.rows.shape[0] == 0:
            raise ConfigError("input table is empty")

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return self.rows[rng.integers(0, self.rows.shape[0], size=count)]

    def variance(self) -> np.ndarray:
        return np.var(self.rows, axis=0)

    def expected(self) -> np.ndarray:
        return np.mean(self.rows, axis=0)


@dataclass
class BoundarySpec:
    """Which component is pinned or open at each end, plus the input sampler"""
    start_open: Tuple[bool, ...]
    end_open: Tuple[bool, ...]
    sampler: InputSampler

    @classmethod
    def mixed(cls, model: QuadratureModel, sampler: InputSampler) -> "BoundarySpec":
        """x and deterministic pinned at t0, open at tf; y pinned at tf, open at t0"""
        start_open = tuple(k is VariableKind.Y for k in model.kinds)
        end_open = tuple(k is not VariableKind.Y for k in model.kinds)
        spec = cls(start_open=start_open, end_open=end_open, sampler=sampler)
        spec.validate(model)
        return spec

    def validate(self, model: QuadratureModel):
        dim = model.dim
        if len(self.start_open) != dim or len(self.end_open) != dim:
            raise StructuralError(f"boundary spec covers {len(self.start_open)}/{len(self.end_open)} components, model has {dim}")
        if self.sampler.dim != dim:
            raise StructuralError(f"input sampler has {self.sampler.dim} components, model has {dim}")
        for i, kind in enumerate(model.kinds):
            backward = kind is VariableKind.Y
            if self.start_open[i] != backward or self.end_open[i] == backward:
                raise StructuralError(
                    f"component {model.labels[i]} ({kind.value}) must be pinned at "
                    f"{'tf' if backward else 't0'} and open at {'t0' if backward else 'tf'}"
                )

    @property
    def start_pinned(self) -> np.ndarray:
        return ~np.array(self.start_open, dtype=bool)

    @property
    def end_pinned(self) -> np.ndarray:
        return ~np.array(self.end_open, dtype=bool)

    def pinned_mask(self, points: int) -> np.ndarray:
        """(points, dim) mask of Dirichlet lattice entries"""
        mask = np.zeros((points, len(self.start_open)), dtype=bool)
        mask[0] = self.start_pinned
        mask[-1] |= self.end_pinned
        return mask


def initial_path(inputs: np.ndarray, spec: BoundarySpec, points: int) -> np.ndarray:
    """Flat tau = 0 paths: each component held at its pinned input value"""
    inputs = np.asarray(inputs, dtype=float)
    return np.repeat(inputs[..., None, :], points, axis=-2)


def pin(values: np.ndarray, spec: BoundarySpec, inputs: np.ndarray) -> np.ndarray:
    """Set Dirichlet entries from the input events"""
    out = np.array(values, dtype=float, copy=True)
    start, end = spec.start_pinned, spec.end_pinned
    out[..., 0, start] = inputs[..., start]
    out[..., -1, end] = inputs[..., end]
    return out


def apply_boundaries(values: np.ndarray, spec: BoundarySpec, model: QuadratureModel, dt: float,
                     inputs: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Pin Dirichlet entries and add ghost rows at both ends.

    Open ends get ghosts whose central difference equals the drift,
    phi_{n+1} = phi_{n-1} + 2 dt A(phi_n) and phi_{-1} = phi_1 - 2 dt A(phi_0);
    pinned components get linear extrapolation.

    Returns:
        padded array of shape (..., n+3, dim)
    """
    values = np.asarray(values, dtype=float)
    if values.shape[-1] != model.dim or values.shape[-2] < 2:
        raise StructuralError(f"path shape {values.shape} does not fit model {model.name}")
    if inputs is not None:
        values = pin(values, spec, inputs)

    first, second = values[..., 0, :], values[..., 1, :]
    last, before = values[..., -1, :], values[..., -2, :]
    start_open = np.array(spec.start_open, dtype=bool)
    end_open = np.array(spec.end_open, dtype=bool)

    lower = np.where(start_open, second - 2 * dt * model.A(first), 2 * first - second)
    upper = np.where(end_open, before + 2 * dt * model.A(last), 2 * last - before)
    return np.concatenate([lower[..., None, :], values, upper[..., None, :]], axis=-2)


def boundary_residual(values: np.ndarray, spec: BoundarySpec, model: QuadratureModel, dt: float) -> float:
    """Max |one-sided derivative - A| over the open ends, using lattice points only"""
    values = np.asarray(values, dtype=float)
    start_open = np.array(spec.start_open, dtype=bool)
    end_open = np.array(spec.end_open, dtype=bool)
    start = (values[..., 1, :] - values[..., 0, :]) / dt - model.A(values[..., 0, :])
    end = (values[..., -1, :] - values[..., -2, :]) / dt - model.A(values[..., -1, :])
    parts = [np.abs(start[..., start_open]).ravel(), np.abs(end[..., end_open]).ravel()]
    merged = np.concatenate(parts)
    return float(np.max(merged)) if merged.size else 0.0


def boundary_sampler(model: QuadratureModel, x0_mean: Sequence[float], x0_var: Sequence[float],
                     yf_mean: Sequence[float] = (), yf_var: Sequence[float] = ()) -> GaussianInputs:
    """Gaussian inputs assembled from forward (x, det) and backward (y) blocks"""
    forward = model.n_x + len(model.det_idx)
    x0_mean, x0_var = np.broadcast_to(x0_mean, (forward,)), np.broadcast_to(x0_var, (forward,))
    yf_mean, yf_var = np.broadcast_to(yf_mean, (model.n_y,)), np.broadcast_to(yf_var, (model.n_y,))
    mean = np.zeros(model.dim)
    var = np.zeros(model.dim)
    mean[model.forward_idx], var[model.forward_idx] = x0_mean, x0_var
    mean[model.y_idx], var[model.y_idx] = yf_mean, yf_var
    logger.debug(f"Input sampler for {model.name}: mean={mean.tolist()}, var={var.tolist()}")
    return GaussianInputs(mean=mean, var=var)
