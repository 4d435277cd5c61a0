"""
Q_Bridge - Data Models
Grids, paths, discretization schemes and ensemble summaries
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Tuple

import numpy as np

from src.domain.errors import MissingCheckpointError, StructuralError


class Scheme(Enum):
    """Drift evaluation points of the discretized time-symmetric SDE"""
    I = "I"  # endpoint: both drifts at (x_{k-1}, y_k)
    II = "II"  # split endpoint: a^x at phi_{k-1}, a^y at phi_k
    III = "III"  # midpoint, with divergence correction


class VariableKind(Enum):
    """Partition a real phase-space variable belongs to"""
    X = "x"  # positive diffusion, forward in time
    Y = "y"  # negative diffusion, backward in time
    DETERMINISTIC = "det"


@dataclass(frozen=True)
class PathGrid:
    """Real-time lattice t_k = t0 + k*eps, k = 0..n"""
    t0: float
    tf: float
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise StructuralError(f"path grid needs n >= 1 steps, got {self.n}")
        if not self.tf > self.t0:
            raise StructuralError(f"path grid needs tf > t0, got t0={self.t0}, tf={self.tf}")

    @property
    def eps(self) -> float:
        return (self.tf - self.t0) / self.n

    @property
    def points(self) -> int:
        return self.n + 1

    def times(self) -> np.ndarray:
        return self.t0 + self.eps * np.arange(self.n + 1)

    @classmethod
    def from_step(cls, t0: float, tf: float, dt: float) -> "PathGrid":
        n = int(round((tf - t0) / dt))
        if n < 1:
            raise StructuralError(f"dt={dt} too large for interval [{t0}, {tf}]")
        return cls(t0=t0, tf=tf, n=n)


@dataclass
class PathField:
    """Discretized trajectory; row k holds phi_k in the model's column layout"""
    grid: PathGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[0] != self.grid.points:
            raise StructuralError(
                f"path values must have shape ({self.grid.points}, dim), got {self.values.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise StructuralError("path values must be finite")

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class DiscretizationScheme:
    """
    Interpolation weights for drift arguments.

    weights[z, c] is the weight of the step's earlier lattice point (k-1) in the
    class-c coordinates of the argument of drift a^z, with z, c in (x, y).
    """
    kind: Scheme
    weights: Tuple[Tuple[float, float], Tuple[float, float]]

    @classmethod
    def of(cls, kind) -> "DiscretizationScheme":
        kind = Scheme(kind) if not isinstance(kind, Scheme) else kind
        table = {
            Scheme.I: ((1.0, 0.0), (1.0, 0.0)),
            Scheme.II: ((1.0, 1.0), (0.0, 0.0)),
            Scheme.III: ((0.5, 0.5), (0.5, 0.5)),
        }
        return cls(kind=kind, weights=table[kind])

    @property
    def midpoint(self) -> bool:
        return self.kind is Scheme.III


@dataclass
class ActionValue:
    """Discrete action of a path with its normalization tracked separately"""
    total: float
    steps: np.ndarray
    log_normalization: float  # per-step log N, included in every entry of steps

    @property
    def physical(self) -> float:
        """Action with the normalization constant removed"""
        return self.total - self.log_normalization * len(self.steps)


@dataclass(frozen=True)
class BridgeGrid:
    """Real-time lattice plus virtual-time stepping"""
    path: PathGrid
    dtau: float
    tau_max: float
    checkpoints: Tuple[float, ...]

    def __post_init__(self):
        if self.dtau <= 0:
            raise StructuralError(f"dtau must be positive, got {self.dtau}")
        if self.tau_max < 0:
            raise StructuralError(f"tau_max must be non-negative, got {self.tau_max}")
        for tau in self.checkpoints:
            if tau < 0 or tau > self.tau_max + 1e-12:
                raise StructuralError(f"checkpoint {tau} outside [0, {self.tau_max}]")

    @property
    def steps(self) -> int:
        return int(round(self.tau_max / self.dtau))

    def checkpoint_steps(self) -> List[int]:
        return [int(round(tau / self.dtau)) for tau in self.checkpoints]

    @classmethod
    def evenly_spaced(cls, path: PathGrid, dtau: float, tau_max: float, count: int = 11) -> "BridgeGrid":
        if count < 1:
            raise StructuralError("need at least one checkpoint")
        taus = (tau_max,) if count == 1 or tau_max == 0 else tuple(float(v) for v in np.linspace(0.0, tau_max, count))
        return cls(path=path, dtau=dtau, tau_max=tau_max, checkpoints=taus)


@dataclass
class EnsembleSummary:
    """Moments per (tau checkpoint, lattice time, component) across trajectories"""
    taus: np.ndarray
    times: np.ndarray
    components: List[str]
    mean: np.ndarray  # (n_tau, n_t, n_comp)
    variance: np.ndarray
    stderr: np.ndarray  # standard error of the variance
    stderr_mean: np.ndarray
    n_traj: int
    label: str = ""
    samples: Optional[np.ndarray] = field(default=None, repr=False)  # (n_tau, N, n_t, n_comp)

    def tau_index(self, tau: float) -> int:
        hits = np.flatnonzero(np.isclose(self.taus, tau, rtol=0.0, atol=1e-9))
        if hits.size == 0:
            raise MissingCheckpointError(tau, tuple(float(v) for v in self.taus))
        return int(hits[0])

    def component_index(self, component) -> int:
        if isinstance(component, (int, np.integer)):
            if not 0 <= component < len(self.components):
                raise StructuralError(f"component {component} out of range")
            return int(component)
        try:
            return self.components.index(component)
        except ValueError:
            raise StructuralError(f"unknown component {component!r}; have {self.components}")

    def time_index(self, t: float) -> int:
        return int(np.argmin(np.abs(self.times - t)))

    def final(self) -> "EnsembleSummary":
        """Summary restricted to the last checkpoint"""
        return self.at(float(self.taus[-1]))

    def at(self, tau: float) -> "EnsembleSummary":
        i = self.tau_index(tau)
        pick = slice(i, i + 1)
        return EnsembleSummary(
            taus=self.taus[pick], times=self.times, components=list(self.components),
            mean=self.mean[pick], variance=self.variance[pick], stderr=self.stderr[pick],
            stderr_mean=self.stderr_mean[pick], n_traj=self.n_traj, label=self.label,
        )

    def rows(self):
        """Yield flat (tau, t, component, mean, variance, stderr, n_traj) records"""
        for a, tau in enumerate(self.taus):
            for b, t in enumerate(self.times):
                for c, name in enumerate(self.components):
                    yield (float(tau), float(t), name, float(self.mean[a, b, c]),
                           float(self.variance[a, b, c]), float(self.stderr[a, b, c]), self.n_traj)


@dataclass
class ReferenceCurve:
    """Closed-form variance curve for one component"""
    component: str
    variance: Callable[[np.ndarray], np.ndarray]
    label: str
    mean: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __call__(self, t) -> np.ndarray:
        return np.asarray(self.variance(np.asarray(t, dtype=float)), dtype=float)


@dataclass
class EquilibrationResult:
    """Virtual time after which the variance profile stops moving"""
    component: str
    tau_star: Optional[float]
    changes: List[float] = field(default_factory=list)  # normalized change per checkpoint interval
    diagnostic: str = ""

    @property
    def equilibrated(self) -> bool:
        return self.tau_star is not None


__all__ = [
    "Scheme", "VariableKind", "PathGrid", "PathField", "DiscretizationScheme", "ActionValue",
    "BridgeGrid", "EnsembleSummary", "ReferenceCurve", "EquilibrationResult",
]
