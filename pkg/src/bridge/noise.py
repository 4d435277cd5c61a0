"""
Q_Bridge - Noise Streams
Seeded per-trajectory Gaussian substreams for inputs and virtual-time noise
"""

from dataclasses import dataclass
from typing import Iterator, Sequence, Tuple

import numpy as np

INPUT_STREAM = 0
NOISE_STREAM = 1
DIRECT_STREAM = 2  # shared stream of the direct SDE oracle


@dataclass(frozen=True)
class NoiseField:
    """
    Deterministic Gaussian noise keyed by (seed, trajectory).

    Each trajectory owns two independent substreams spawned from the base seed,
    one for its input event and one for its virtual-time noise, so results do
    not depend on how trajectories are batched or scheduled.
    """
    seed: int
    block: int = 64  # tau steps drawn per request

    def generator(self, trajectory: int, stream: int) -> np.random.Generator:
        seq = np.random.SeedSequence(self.seed, spawn_key=(int(trajectory), int(stream)))
        return np.random.Generator(np.random.PCG64(seq))

    def inputs(self, sampler, trajectories: Sequence[int]) -> np.ndarray:
        """One input event per trajectory, shape (B, dim)"""
        rows = [sampler.sample(self.generator(t, INPUT_STREAM), 1)[0] for t in trajectories]
        return np.array(rows).reshape(len(trajectories), sampler.dim)

    def standard_blocks(self, trajectories: Sequence[int], shape: Tuple[int, ...],
                        steps: int) -> Iterator[np.ndarray]:
        """Yield standard normal blocks of shape (steps_in_block, B, *shape) until steps are covered"""
        gens = [self.generator(t, NOISE_STREAM) for t in trajectories]
        done = 0
        while done < steps:
            count = min(self.block, steps - done)
            per_traj = [g.standard_normal((self.block,) + tuple(shape))[:count] for g in gens]
            yield np.stack(per_traj, axis=1)
            done += count

    @staticmethod
    def increment_scale(d: float, dt: float, dtau: float) -> float:
        """Std of the per-step increment dtau*zeta, variance 2 d dtau / dt"""
        return float(np.sqrt(2.0 * d * dtau / dt))
