"""
Q_Bridge - Error Types
Exception hierarchy shared by the library and the CLI
"""

from typing import List, Optional, Tuple


class QBridgeError(Exception):
    """Base class for all Q_Bridge errors"""
    exit_code = 1


class ConfigError(QBridgeError, ValueError):
    """Invalid scenario, parameter or flag"""
    exit_code = 2


class StructuralError(QBridgeError, ValueError):
    """Array or tensor dimensions that do not fit together"""
    exit_code = 2


class CouplingValidationError(ConfigError):
    """Coupling tensor violates hermiticity or permutation constraints"""

    def __init__(self, violations: List["object"]):
        self.violations = violations
        shown = ", ".join(str(v) for v in violations[:5])
        more = f" (+{len(violations) - 5} more)" if len(violations) > 5 else ""
        super().__init__(f"{len(violations)} coupling constraint violation(s): {shown}{more}")


class UnsupportedModelError(QBridgeError):
    """Model outside what an operation can handle"""
    exit_code = 2


class DeterministicModelError(UnsupportedModelError):
    """Operation needs noise but the model has none"""


class DivergenceError(QBridgeError, ArithmeticError):
    """Non-finite values appeared during virtual-time evolution"""
    exit_code = 3

    def __init__(self, tau: float, t: Optional[float] = None, trajectory: Optional[int] = None,
                 component: Optional[int] = None):
        self.tau = tau
        self.t = t
        self.trajectory = trajectory
        self.component = component
        where = f"tau={tau:.6g}"
        if t is not None:
            where += f", t={t:.6g}"
        if component is not None:
            where += f", component={component}"
        if trajectory is not None:
            where += f", trajectory={trajectory}"
        super().__init__(f"SPDE diverged at {where}")

    def with_trajectory(self, trajectory: int) -> "DivergenceError":
        return DivergenceError(self.tau, self.t, trajectory, self.component)


class MissingCheckpointError(QBridgeError, KeyError):
    """Requested tau checkpoint is not stored in the summary"""

    def __init__(self, tau: float, available: Tuple[float, ...]):
        self.tau = tau
        self.available = available
        super().__init__(f"no checkpoint at tau={tau}; available: {list(available)}")

    def __str__(self) -> str:
        return self.args[0]
