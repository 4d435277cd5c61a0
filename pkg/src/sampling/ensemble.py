"""
Q_Bridge - Ensemble Runner
Evolves independent trajectories in batches and reduces them in trajectory order
"""

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np
from loguru import logger

from src.bridge.boundaries import BoundarySpec, initial_path
from src.bridge.noise import NoiseField
from src.bridge.spde import DEFAULT_ITERATIONS, evolve
from src.domain.errors import ConfigError, DivergenceError
from src.domain.models import BridgeGrid, EnsembleSummary
from src.phase_model.quadrature import QuadratureModel
from src.sampling.oracles import classical_path
from src.sampling.stats import summarize


@dataclass
class EnsembleConfig:
    """Everything needed to reproduce an ensemble run"""
    model: QuadratureModel
    spec: BoundarySpec
    grid: BridgeGrid
    n_traj: int
    seed: int
    iterations: int = DEFAULT_ITERATIONS
    batch_size: int = 256
    workers: int = 1
    label: str = ""
    keep_samples: bool = False
    # Picklable builder of the model, required for workers > 1
    model_factory: Optional[Callable[[], QuadratureModel]] = None

    def __post_init__(self):
        if self.n_traj < 1:
            raise ConfigError(f"trajectory count must be >= 1, got {self.n_traj}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if self.workers < 1:
            raise ConfigError(f"worker count must be >= 1, got {self.workers}")

    def batches(self) -> List[List[int]]:
        ids = list(range(self.n_traj))
        return [ids[i:i + self.batch_size] for i in range(0, self.n_traj, self.batch_size)]


def run_batch(model: QuadratureModel, spec: BoundarySpec, grid: BridgeGrid, seed: int,
              trajectories: Sequence[int], iterations: int = DEFAULT_ITERATIONS) -> np.ndarray:
    """
    Snapshots (n_checkpoints, B, n+1, dim) for one batch of trajectory ids.

    Deterministic models skip the SPDE and return their classical path at every checkpoint.
    """
    noise = NoiseField(seed)
    inputs = noise.inputs(spec.sampler, trajectories)
    points = grid.path.points
    if model.is_deterministic:
        paths = np.stack([classical_path(model, row, grid.path) for row in inputs])
        return np.broadcast_to(paths, (len(grid.checkpoints),) + paths.shape).copy()
    record = evolve(initial_path(inputs, spec, points), grid, spec, model, noise=noise,
                    trajectories=trajectories, inputs=inputs, iterations=iterations)
    logger.debug(f"[{model.name}] trajectories {trajectories[0]}..{trajectories[-1]} evolved in {record.elapsed:.2f}s")
    return record.snapshots


def _remote_batch(factory: Callable[[], QuadratureModel], spec: BoundarySpec, grid: BridgeGrid, seed: int,
                  trajectories: Sequence[int], iterations: int) -> np.ndarray:
    return run_batch(factory(), spec, grid, seed, trajectories, iterations)


def run_ensemble(config: EnsembleConfig) -> EnsembleSummary:
    """
    Evolve config.n_traj trajectories and summarize them at every checkpoint.

    Results depend only on the base seed: each trajectory draws from its own
    substreams and batches are concatenated in trajectory order.

    Raises:
        DivergenceError: a trajectory blew up; the error names its id
    """
    model, grid = config.model, config.grid
    config.spec.validate(model)
    batches = config.batches()
    label = config.label or model.name
    started = time.perf_counter()
    logger.info(
        f"[{label}] {config.n_traj} trajectories in {len(batches)} batches, "
        f"n={grid.path.n} dtau={grid.dtau:g} tau_max={grid.tau_max:g}"
    )

    workers = config.workers
    if workers > 1 and config.model_factory is None:
        logger.warning(f"[{label}] no picklable model factory; running {workers} requested workers serially")
        workers = 1

    parts: List[np.ndarray] = []
    try:
        if workers == 1:
            for i, ids in enumerate(batches):
                tic = time.perf_counter()
                parts.append(run_batch(model, config.spec, grid, config.seed, ids, config.iterations))
                logger.info(
                    f"[{label}] batch {i + 1}/{len(batches)} done "
                    f"(trajectories {ids[0]}-{ids[-1]}) in {time.perf_counter() - tic:.1f}s"
                )
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [
                    pool.submit(_remote_batch, config.model_factory, config.spec, grid, config.seed,
                                ids, config.iterations)
                    for ids in batches
                ]
                for i, future in enumerate(futures):
                    parts.append(future.result())
                    logger.info(f"[{label}] batch {i + 1}/{len(batches)} collected")
    except DivergenceError as e:
        logger.error(f"[{label}] {e}")
        raise

    samples = np.concatenate(parts, axis=1)
    summary = summarize(samples, grid.checkpoints, grid.path.times(), model.labels,
                        label=label, keep_samples=config.keep_samples)
    logger.info(f"[{label}] ensemble finished in {time.perf_counter() - started:.1f}s")
    return summary


__all__ = ["EnsembleConfig", "run_batch", "run_ensemble"]
