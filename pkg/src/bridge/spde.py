"""
Q_Bridge - Extra-Dimensional SPDE
Virtual-time evolution d(phi)/d(tau) = phi'' + C phi' + U + zeta on a real-time lattice
"""

import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from loguru import logger
from scipy import optimize

from src.bridge.boundaries import BoundarySpec, apply_boundaries, pin
from src.bridge.noise import NoiseField
from src.domain.errors import ConfigError, DivergenceError, StructuralError
from src.domain.models import BridgeGrid, PathGrid
from src.phase_model.quadrature import QuadratureModel

DEFAULT_ITERATIONS = 4

_stability_warned = set()


def circulation(model: QuadratureModel, phi) -> np.ndarray:
    """C^{mu nu} = d_mu A^nu - d_nu A^mu"""
    jac = model.J(phi)
    return np.swapaxes(jac, -1, -2) - jac


def grad_potential(model: QuadratureModel, phi) -> np.ndarray:
    """Gradient of V = -(sum_x dA^x/dx - sum_y dA^y/dy)/2"""
    hess = model.H(phi)
    x, y = model.x_idx, model.y_idx
    return -0.5 * (np.sum(hess[..., x, x, :], axis=-2) - np.sum(hess[..., y, y, :], axis=-2))


def force_U(model: QuadratureModel, phi) -> np.ndarray:
    """U = grad(d V - |A|^2 / 2) = d grad V - J^T A"""
    phi = np.asarray(phi, dtype=float)
    jac = model.J(phi)
    pull = np.einsum("...nm,...n->...m", jac, model.A(phi))
    if model.linear:
        return -pull
    return model.d * grad_potential(model, phi) - pull


class ExtraDrift:
    """
    Evaluator of the SPDE drift phi'' + C phi' + U over a lattice.

    With a boundary spec, open ends use ghost rows and pinned entries get zero
    drift; without one only interior points are evaluated.
    """

    def __init__(self, model: QuadratureModel, dt: float, spec: Optional[BoundarySpec] = None):
        self.model = model
        self.dt = dt
        self.spec = spec
        if spec is not None:
            spec.validate(model)
        self._linear = None
        if model.linear:
            origin = np.zeros(model.dim)
            jac = np.array(model.J(origin))
            offset = model.A(origin)
            self._linear = (jac, jac.T - jac, -jac.T @ jac, -jac.T @ offset)

    def C(self, phi) -> np.ndarray:
        if self._linear is not None:
            phi = np.asarray(phi)
            return np.broadcast_to(self._linear[1], phi.shape[:-1] + (self.model.dim,) * 2)
        return circulation(self.model, phi)

    def U(self, phi) -> np.ndarray:
        if self._linear is not None:
            _, _, quad, const = self._linear
            return np.asarray(phi) @ quad.T + const
        return force_U(self.model, phi)

    def _rates(self, padded: np.ndarray) -> np.ndarray:
        dt = self.dt
        phi = padded[..., 1:-1, :]
        lap = (padded[..., 2:, :] - 2 * phi + padded[..., :-2, :]) / dt ** 2
        vel = (padded[..., 2:, :] - padded[..., :-2, :]) / (2 * dt)
        if self._linear is not None:
            circ = vel @ self._linear[1].T
        else:
            circ = np.einsum("...mn,...n->...m", self.C(phi), vel)
        return lap + circ + self.U(phi)

    def __call__(self, values: np.ndarray, inputs: Optional[np.ndarray] = None) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape[-2] < 3:
            raise StructuralError(f"SPDE drift needs at least 3 lattice points, got {values.shape[-2]}")
        if self.spec is None:
            out = np.zeros_like(values)
            out[..., 1:-1, :] = self._rates(values)
            return out
        padded = apply_boundaries(values, self.spec, self.model, self.dt, inputs)
        out = self._rates(padded)
        out[..., self.spec.pinned_mask(values.shape[-2])] = 0.0
        return out


def extra_drift(model: QuadratureModel, values, dt: float, spec: Optional[BoundarySpec] = None,
                inputs: Optional[np.ndarray] = None) -> np.ndarray:
    """SPDE drift field over the lattice (interior only when no boundary spec is given)"""
    return ExtraDrift(model, dt, spec)(values, inputs)


def noise_scales(model: QuadratureModel, spec: BoundarySpec, points: int, dt: float, dtau: float) -> np.ndarray:
    """
    Std of dtau*zeta per lattice entry.

    Interior points get variance 2 d dtau / dt; open-end points stand for half a
    cell and get twice that; pinned and deterministic entries get none.
    """
    scale = np.full((points, model.dim), NoiseField.increment_scale(model.d, dt, dtau))
    scale[0, np.array(spec.start_open, dtype=bool)] *= np.sqrt(2.0)
    scale[-1, np.array(spec.end_open, dtype=bool)] *= np.sqrt(2.0)
    scale[:, ~model.noise_mask()] = 0.0
    scale[spec.pinned_mask(points)] = 0.0
    return scale


def check_stability(grid: BridgeGrid):
    """Warn when dtau exceeds dt^2/2"""
    dt = grid.path.eps
    limit = 0.5 * dt ** 2
    key = (grid.dtau, dt)
    if grid.dtau > limit and key not in _stability_warned:
        _stability_warned.add(key)
        logger.warning(f"dtau={grid.dtau:g} exceeds dt^2/2={limit:g}; the semi-implicit step may not converge")


def tau_step(values: np.ndarray, dtau: float, increment: np.ndarray, drift: ExtraDrift,
             iterations: int = DEFAULT_ITERATIONS, tau: float = 0.0,
             times: Optional[np.ndarray] = None, trajectories: Optional[Sequence[int]] = None) -> np.ndarray:
    """
    One semi-implicit midpoint step.

    The midpoint m = phi + (dtau*A(m) + increment)/2 is found by a fixed number
    of fixed-point iterations, then phi' = 2m - phi with pinned entries restored.

    Raises:
        DivergenceError: non-finite values after the step
    """
    if iterations < 1:
        raise ConfigError(f"semi-implicit iterations must be >= 1, got {iterations}")
    mid = values
    for _ in range(iterations):
        mid = values + 0.5 * (dtau * drift(mid) + increment)
    new = 2.0 * mid - values

    if drift.spec is not None:
        mask = drift.spec.pinned_mask(values.shape[-2])
        new[..., mask] = values[..., mask]

    if not np.all(np.isfinite(new)):
        bad = np.argwhere(~np.isfinite(new))[0]
        k, comp = int(bad[-2]), int(bad[-1])
        traj = None
        if new.ndim == 3:
            b = int(bad[0])
            traj = int(trajectories[b]) if trajectories is not None else b
        t = float(times[k]) if times is not None else None
        raise DivergenceError(tau=tau + dtau, t=t, trajectory=traj, component=comp)
    return new


@dataclass
class TrajectoryRecord:
    """Path snapshots at virtual-time checkpoints"""
    taus: np.ndarray
    times: np.ndarray
    labels: List[str]
    snapshots: np.ndarray  # (n_checkpoints, B, n+1, dim)
    trajectories: List[int] = field(default_factory=list)
    elapsed: float = 0.0

    def at(self, tau: float) -> np.ndarray:
        hits = np.flatnonzero(np.isclose(self.taus, tau, rtol=0.0, atol=1e-9))
        if hits.size == 0:
            raise StructuralError(f"no snapshot at tau={tau}")
        return self.snapshots[hits[0]]


def evolve(initial: np.ndarray, grid: BridgeGrid, spec: BoundarySpec, model: QuadratureModel,
           noise: Optional[NoiseField] = None, trajectories: Optional[Sequence[int]] = None,
           inputs: Optional[np.ndarray] = None, iterations: int = DEFAULT_ITERATIONS) -> TrajectoryRecord:
    """
    Evolve a batch of paths in virtual time, recording checkpoints.

    Args:
        initial: (n+1, dim) or (B, n+1, dim) starting paths
        grid: lattice, dtau, tau_max and checkpoints
        spec: boundary spec
        model: quadrature model
        noise: seeded noise; None runs without noise
        trajectories: trajectory ids keying the noise substreams (default 0..B-1)
        inputs: (B, dim) pinned values; default taken from the initial paths
        iterations: semi-implicit fixed-point iterations

    Returns:
        TrajectoryRecord with one snapshot per checkpoint
    """
    started = time.perf_counter()
    path_grid: PathGrid = grid.path
    values = np.asarray(initial, dtype=float)
    if values.ndim == 2:
        values = values[None]
    if values.shape[1:] != (path_grid.points, model.dim):
        raise StructuralError(
            f"initial paths {values.shape[1:]} do not match lattice ({path_grid.points}, {model.dim})"
        )
    spec.validate(model)
    batch = values.shape[0]
    trajectories = list(range(batch)) if trajectories is None else [int(t) for t in trajectories]
    if len(trajectories) != batch:
        raise StructuralError(f"{len(trajectories)} trajectory ids for a batch of {batch}")

    if inputs is not None:
        values = pin(values, spec, np.asarray(inputs, dtype=float).reshape(batch, model.dim))
    check_stability(grid)

    dt, dtau = path_grid.eps, grid.dtau
    times = path_grid.times()
    drift = ExtraDrift(model, dt, spec)
    scales = noise_scales(model, spec, path_grid.points, dt, dtau)
    stochastic = noise is not None and np.any(scales > 0)

    wanted: Dict[int, List[int]] = {}
    for i, step in enumerate(grid.checkpoint_steps()):
        wanted.setdefault(step, []).append(i)
    snapshots = np.empty((len(grid.checkpoints), batch, path_grid.points, model.dim))
    for i in wanted.get(0, []):
        snapshots[i] = values

    total = grid.steps
    blocks = noise.standard_blocks(trajectories, (path_grid.points, model.dim), total) if stochastic else None
    step = 0
    while step < total:
        block = next(blocks) if stochastic else None
        count = block.shape[0] if block is not None else total - step
        for j in range(count):
            increment = block[j] * scales if block is not None else 0.0
            values = tau_step(values, dtau, increment, drift, iterations,
                              tau=step * dtau, times=times, trajectories=trajectories)
            step += 1
            for i in wanted.get(step, []):
                snapshots[i] = values
                logger.debug(f"[{model.name}] checkpoint tau={grid.checkpoints[i]:g} for batch of {batch}")

    record = TrajectoryRecord(
        taus=np.array(grid.checkpoints, dtype=float), times=times, labels=list(model.labels),
        snapshots=snapshots, trajectories=trajectories,
        elapsed=time.perf_counter() - started,
    )
    return record


def residual_norm(model: QuadratureModel, values, dt: float, spec: BoundarySpec) -> float:
    """Cell-weighted L2 norm over t of the SPDE drift at free lattice entries"""
    rates = extra_drift(model, values, dt, spec)
    weights = np.ones(rates.shape[-2])
    weights[0] = weights[-1] = 0.5
    return float(np.sqrt(np.sum(weights[:, None] * rates ** 2) * dt))


def lattice_classical_path(model: QuadratureModel, grid: PathGrid, spec: BoundarySpec, inputs,
                           guess: Optional[np.ndarray] = None, tol: float = 1e-13) -> np.ndarray:
    """
    Noise-free fixed point of the lattice SPDE with the given pinned inputs.

    Solves drift = 0 at every free entry with scipy's hybrid root finder.
    """
    inputs = np.asarray(inputs, dtype=float)
    points = grid.points
    start = np.repeat(inputs[None, :], points, axis=0) if guess is None else np.array(guess, dtype=float)
    start = pin(start, spec, inputs)
    free = ~spec.pinned_mask(points)
    drift = ExtraDrift(model, grid.eps, spec)

    def residual(x: np.ndarray) -> np.ndarray:
        values = start.copy()
        values[free] = x
        return drift(values)[free] * grid.eps ** 2

    solution = optimize.root(residual, start[free], method="hybr", tol=tol)
    if not solution.success:
        logger.warning(f"Lattice classical path did not fully converge: {solution.message}")
    out = start.copy()
    out[free] = solution.x
    return out
