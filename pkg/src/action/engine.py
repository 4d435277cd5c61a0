"""
Q_Bridge - Action Engine
Velocity fields, discrete actions and the continuum Lagrangian of time-symmetric SDE paths
"""

from typing import Tuple

import numpy as np
from loguru import logger
from scipy import stats

from src.domain.errors import ConfigError, DeterministicModelError, StructuralError
from src.domain.models import ActionValue, DiscretizationScheme, PathField, Scheme
from src.phase_model.quadrature import QuadratureModel


def _require_noise(model: QuadratureModel):
    if model.is_deterministic:
        raise DeterministicModelError(f"model {model.name} has no diffusion; its path action is undefined")
    if len(model.det_idx):
        raise DeterministicModelError(
            f"model {model.name} has {len(model.det_idx)} deterministic variables; action needs d > 0 everywhere"
        )


def _scheme(scheme) -> DiscretizationScheme:
    return scheme if isinstance(scheme, DiscretizationScheme) else DiscretizationScheme.of(scheme)


def _drift_arguments(prev: np.ndarray, cur: np.ndarray, scheme: DiscretizationScheme,
                     model: QuadratureModel) -> Tuple[np.ndarray, np.ndarray]:
    """Interpolated points at which a^x and a^y are evaluated"""
    args = []
    for z in range(2):
        arg = np.array(cur, dtype=float, copy=True)
        for c, idx in enumerate((model.x_idx, model.y_idx)):
            s = scheme.weights[z][c]
            arg[..., idx] = s * prev[..., idx] + (1.0 - s) * cur[..., idx]
        args.append(arg)
    return args[0], args[1]


def _all_velocities(values: np.ndarray, eps: float, scheme: DiscretizationScheme, model: QuadratureModel):
    prev, cur = values[:-1], values[1:]
    arg_x, arg_y = _drift_arguments(prev, cur, scheme, model)
    x, y = model.x_idx, model.y_idx
    v_x = (cur[:, x] - prev[:, x]) / eps - model.a_x(arg_x)
    v_y = (prev[:, y] - cur[:, y]) / eps - model.a_y(arg_y)
    return v_x, v_y


def _check_path(path: PathField, model: QuadratureModel):
    if path.dim != model.dim:
        raise StructuralError(f"path has {path.dim} components, model {model.name} has {model.dim}")


def velocity_fields(path: PathField, k: int, scheme, model: QuadratureModel) -> Tuple[np.ndarray, np.ndarray]:
    """
    Relative velocities of step k.

    v^x_k = (x_k - x_{k-1})/eps - a^x and v^y_k = (y_{k-1} - y_k)/eps - a^y,
    with drift arguments interpolated per the scheme.
    """
    _check_path(path, model)
    if not 1 <= k <= path.grid.n:
        raise StructuralError(f"step index {k} outside 1..{path.grid.n}")
    scheme = _scheme(scheme)
    window = path.values[k - 1: k + 1]
    v_x, v_y = _all_velocities(window, path.grid.eps, scheme, model)
    return v_x[0], v_y[0]


def log_normalization(eps: float, model: QuadratureModel) -> float:
    return 0.5 * model.n_noisy * float(np.log(2 * np.pi * eps * model.d))


def _step_terms(path: PathField, scheme: DiscretizationScheme, model: QuadratureModel) -> np.ndarray:
    _require_noise(model)
    _check_path(path, model)
    eps = path.grid.eps
    v_x, v_y = _all_velocities(path.values, eps, scheme, model)
    terms = eps / (2 * model.d) * (np.sum(v_x ** 2, axis=-1) + np.sum(v_y ** 2, axis=-1))
    terms = terms + log_normalization(eps, model)
    if scheme.midpoint:
        mid = 0.5 * (path.values[:-1] + path.values[1:])
        terms = terms + 0.5 * eps * (model.div_x(mid) + model.div_y(mid))
    return terms


def step_action(path: PathField, k: int, scheme, model: QuadratureModel) -> float:
    """One-step action S_{k-1,k}, including the normalization ln N"""
    if not 1 <= k <= path.grid.n:
        raise StructuralError(f"step index {k} outside 1..{path.grid.n}")
    scheme = _scheme(scheme)
    window = PathField(grid=type(path.grid)(path.grid.t0, path.grid.t0 + path.grid.eps, 1),
                       values=path.values[k - 1: k + 1])
    return float(_step_terms(window, scheme, model)[0])


def path_action(path: PathField, scheme, model: QuadratureModel) -> ActionValue:
    """Total action as the sum of per-step actions"""
    scheme = _scheme(scheme)
    terms = _step_terms(path, scheme, model)
    norm = log_normalization(path.grid.eps, model)
    value = ActionValue(total=float(np.sum(terms)), steps=terms, log_normalization=norm)
    logger.debug(f"Action ({scheme.kind.value}) over {path.grid.n} steps: S={value.total:.6g}")
    return value


def potential_V(phi, model: QuadratureModel) -> np.ndarray:
    """V = -(div_x a^x + div_y a^y)/2"""
    return -0.5 * (model.div_x(phi) + model.div_y(phi))


def lagrangian(phi, phi_dot, model: QuadratureModel) -> np.ndarray:
    """L = sum (phi_dot - A)^2 / (2d) - V"""
    _require_noise(model)
    phi = np.asarray(phi, dtype=float)
    phi_dot = np.asarray(phi_dot, dtype=float)
    if phi.shape != phi_dot.shape:
        raise StructuralError(f"phi {phi.shape} and phi_dot {phi_dot.shape} differ in shape")
    kinetic = np.sum((phi_dot - model.A(phi)) ** 2, axis=-1) / (2 * model.d)
    return kinetic - potential_V(phi, model)


def transition_density(prev, cur, eps: float, scheme, model: QuadratureModel) -> float:
    """
    Gaussian one-step density of the discretized SDE for endpoint schemes.

    x_k ~ N(x_{k-1} + eps a^x, eps d) and y_{k-1} ~ N(y_k + eps a^y, eps d),
    drifts evaluated at the scheme's interpolated points.
    """
    scheme = _scheme(scheme)
    if scheme.kind is Scheme.III:
        raise ConfigError("the midpoint scheme carries a divergence correction; no plain Gaussian density")
    _require_noise(model)
    prev = np.asarray(prev, dtype=float)
    cur = np.asarray(cur, dtype=float)
    arg_x, arg_y = _drift_arguments(prev, cur, scheme, model)
    x, y = model.x_idx, model.y_idx
    sd = np.sqrt(eps * model.d)
    log_p = np.sum(stats.norm.logpdf(cur[x], loc=prev[x] + eps * model.a_x(arg_x), scale=sd))
    log_p += np.sum(stats.norm.logpdf(prev[y], loc=cur[y] + eps * model.a_y(arg_y), scale=sd))
    return float(np.exp(log_p))
