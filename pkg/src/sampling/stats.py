"""
Q_Bridge - Ensemble Statistics
Moments with jackknife errors, oracle comparison and equilibration detection
"""

from typing import Iterable, List, Optional, Sequence, Union

import numpy as np
from loguru import logger

from src.domain.errors import ConfigError, StructuralError
from src.domain.models import EnsembleSummary, EquilibrationResult, ReferenceCurve

ORDERING_SHIFT = {"symmetric": 0.25, "normal": 0.5, "antinormal": 0.0}
_REDUCERS = {
    "rms": lambda z: float(np.sqrt(np.mean(z ** 2))),
    "max": lambda z: float(np.max(z)),
}


def jackknife_variance_error(samples: np.ndarray, axis: int = 0) -> np.ndarray:
    """
    Leave-one-out standard error of the sample variance along an axis.

    Uses the closed form for the deleted variances, so it costs a single pass.
    Fewer than three samples give nan.
    """
    samples = np.moveaxis(np.asarray(samples, dtype=float), axis, 0)
    n = samples.shape[0]
    if n < 3:
        return np.full(samples.shape[1:], np.nan)
    dev = samples - samples.mean(axis=0)
    ss = np.sum(dev ** 2, axis=0)
    deleted = (ss - dev ** 2 * n / (n - 1)) / (n - 2)
    spread = np.sum((deleted - deleted.mean(axis=0)) ** 2, axis=0)
    return np.sqrt((n - 1) / n * spread)


def summarize(samples: np.ndarray, taus: Sequence[float], times: Sequence[float],
              components: Sequence[str], label: str = "", keep_samples: bool = False) -> EnsembleSummary:
    """
    Ensemble moments from raw path snapshots.

    Args:
        samples: (n_tau, N, n_t, n_comp) values ordered by trajectory id
        taus: virtual-time checkpoints
        times: lattice times
        components: component labels
        label: run label carried into the summary
        keep_samples: attach the raw samples to the summary

    Returns:
        EnsembleSummary with unbiased variances (population variance when N = 1)
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 4:
        raise StructuralError(f"samples must be (n_tau, N, n_t, n_comp), got shape {samples.shape}")
    n = samples.shape[1]
    if n == 0:
        raise StructuralError("cannot summarize an empty ensemble")
    if samples.shape[0] != len(taus) or samples.shape[2] != len(times) or samples.shape[3] != len(components):
        raise StructuralError(
            f"sample shape {samples.shape} does not match {len(taus)} taus, {len(times)} times, "
            f"{len(components)} components"
        )

    mean = samples.mean(axis=1)
    variance = samples.var(axis=1, ddof=1 if n > 1 else 0)
    stderr = jackknife_variance_error(samples, axis=1)
    stderr_mean = np.sqrt(variance / n)
    return EnsembleSummary(
        taus=np.asarray(taus, dtype=float), times=np.asarray(times, dtype=float),
        components=list(components), mean=mean, variance=variance, stderr=stderr,
        stderr_mean=stderr_mean, n_traj=n, label=label,
        samples=samples if keep_samples else None,
    )


def moments(summary: EnsembleSummary, tau: float, t: float, component) -> tuple:
    """(mean, variance, stderr of the variance) at one checkpoint, time and component"""
    a = summary.tau_index(tau)
    b = summary.time_index(t)
    c = summary.component_index(component)
    return (float(summary.mean[a, b, c]), float(summary.variance[a, b, c]), float(summary.stderr[a, b, c]))


def _normalized(diff: np.ndarray, se: np.ndarray) -> np.ndarray:
    """|diff| / se with 0/0 -> 0 and x/0 -> inf"""
    diff = np.abs(diff)
    se = np.nan_to_num(np.asarray(se, dtype=float), nan=0.0)
    out = np.full(diff.shape, np.inf)
    zero = diff <= 1e-14
    out[zero] = 0.0
    ok = (se > 0) & ~zero
    out[ok] = diff[ok] / se[ok]
    return out


def compare(summary: EnsembleSummary,
            reference: Union[ReferenceCurve, Iterable[ReferenceCurve], EnsembleSummary],
            tau: Optional[float] = None, t_range: Optional[Sequence[float]] = None) -> float:
    """
    Largest deviation of the variance from a reference, in standard errors.

    The summary is read at checkpoint tau (default: last). A reference summary is
    read at its own last checkpoint and its errors are combined in quadrature.
    """
    tau = float(summary.taus[-1]) if tau is None else tau
    a = summary.tau_index(tau)
    times = summary.times
    keep = np.ones(times.shape, dtype=bool)
    if t_range is not None:
        keep = (times >= t_range[0] - 1e-12) & (times <= t_range[1] + 1e-12)

    if isinstance(reference, EnsembleSummary):
        if reference.times.shape != times.shape or not np.allclose(reference.times, times):
            raise StructuralError("reference summary uses a different time lattice")
        if list(reference.components) != list(summary.components):
            raise StructuralError(
                f"reference components {reference.components} differ from {summary.components}"
            )
        diff = summary.variance[a] - reference.variance[-1]
        se = np.sqrt(np.nan_to_num(summary.stderr[a]) ** 2 + np.nan_to_num(reference.stderr[-1]) ** 2)
        return float(np.max(_normalized(diff[keep], se[keep])))

    curves = [reference] if isinstance(reference, ReferenceCurve) else list(reference)
    if not curves:
        raise ConfigError("no reference curves to compare against")
    worst = 0.0
    for curve in curves:
        c = summary.component_index(curve.component)
        diff = summary.variance[a, :, c] - curve(times)
        score = _normalized(diff[keep], summary.stderr[a, keep, c])
        worst = max(worst, float(np.max(score)))
    return worst


def equilibration_diagnostic(summary: EnsembleSummary, component, tolerance: float = 2.0,
                             statistic: str = "rms") -> EquilibrationResult:
    """
    First checkpoint after which the variance profile stops moving.

    A checkpoint interval counts as settled when the variance change over t,
    in combined standard errors and reduced by statistic ("rms" or "max"), is
    below tolerance. tau* is the earliest checkpoint from which every later
    interval is settled. With many lattice points "max" trips on noise alone.
    """
    if statistic not in _REDUCERS:
        raise ConfigError(f"unknown change statistic {statistic!r}; choose from {sorted(_REDUCERS)}")
    reduce = _REDUCERS[statistic]
    if len(summary.taus) < 3:
        raise StructuralError(f"equilibration needs at least 3 checkpoints, got {len(summary.taus)}")
    c = summary.component_index(component)
    name = summary.components[c]
    var = summary.variance[:, :, c]
    se = np.nan_to_num(summary.stderr[:, :, c])
    changes: List[float] = []
    for j in range(len(summary.taus) - 1):
        combined = np.sqrt(se[j] ** 2 + se[j + 1] ** 2)
        changes.append(reduce(_normalized(var[j + 1] - var[j], combined)))

    settled_from = None
    for j in range(len(changes) - 1, -1, -1):
        if changes[j] >= tolerance:
            break
        settled_from = j
    if settled_from is None:
        message = (f"variance of {name} still moving at tau={summary.taus[-1]:g}: "
                   f"last change {changes[-1]:.2f} stderr >= {tolerance:g}")
        logger.warning(message)
        return EquilibrationResult(component=name, tau_star=None, changes=changes, diagnostic=message)
    tau_star = float(summary.taus[settled_from])
    logger.info(f"[{summary.label or 'ensemble'}] {name} equilibrated by tau*={tau_star:g}")
    return EquilibrationResult(component=name, tau_star=tau_star, changes=changes)


def observable_number(mean, variance) -> np.ndarray:
    """
    Mode occupation <n> = <q^2> + <p^2> - 1 from Q-function quadrature moments.

    Both arguments have a trailing axis of length 2 holding the mode's two quadratures.
    """
    mean = np.asarray(mean, dtype=float)
    variance = np.asarray(variance, dtype=float)
    if mean.shape[-1:] != (2,) or variance.shape != mean.shape:
        raise StructuralError(f"expected matching (..., 2) moments, got {mean.shape} and {variance.shape}")
    n = np.sum(mean ** 2 + variance, axis=-1) - 1.0
    if np.any(n < 0):
        logger.warning(f"Negative occupation {float(np.min(n)):.4g}: Q moments below the vacuum bound")
    return n


def reorder_variance(variance, ordering: str = "symmetric") -> np.ndarray:
    """Convert an anti-normally ordered (Q-function) quadrature variance to another ordering"""
    if ordering not in ORDERING_SHIFT:
        raise ConfigError(f"unknown operator ordering {ordering!r}; choose from {sorted(ORDERING_SHIFT)}")
    return np.asarray(variance, dtype=float) - ORDERING_SHIFT[ordering]


def uncertainty_product(var_q, var_p, ordering: str = "symmetric") -> np.ndarray:
    """Product of the two reordered quadrature variances; 1/16 for minimum uncertainty states"""
    return reorder_variance(var_q, ordering) * reorder_variance(var_p, ordering)


__all__ = [
    "jackknife_variance_error", "summarize", "moments", "compare", "equilibration_diagnostic",
    "observable_number", "reorder_variance", "uncertainty_product",
]
