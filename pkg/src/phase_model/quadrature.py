"""
Q_Bridge - Quadrature Models
Real-variable time-symmetric Fokker-Planck models with a forward/backward partition
"""

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from scipy import linalg

from src.domain.errors import StructuralError, UnsupportedModelError
from src.domain.models import VariableKind
from src.phase_model.liouvillian import ComplexCoefficients

FD_STEP = 1e-5

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass
class QuadratureModel:
    """
    Drift A(phi) and scalar diffusion d over real variables laid out as [x | y | det].

    x variables diffuse with +d forward in time, y variables with -d (forward in
    the reverse time direction), deterministic ones not at all. The per-direction
    drifts are a^x = A[x] and a^y = -A[y].
    """
    name: str
    drift: ArrayFn
    jacobian: ArrayFn
    d: float
    kinds: Tuple[VariableKind, ...]
    labels: Tuple[str, ...]
    hessian: Optional[ArrayFn] = None
    transform: Optional[np.ndarray] = None  # phi = transform @ source coordinates
    source_labels: Tuple[str, ...] = ()
    linear: bool = False  # affine drift: constant jacobian, zero hessian

    def __post_init__(self):
        self.kinds = tuple(VariableKind(k) for k in self.kinds)
        if len(self.labels) != len(self.kinds):
            raise StructuralError(f"{len(self.labels)} labels for {len(self.kinds)} variables")
        order = [k for k in (VariableKind.X, VariableKind.Y, VariableKind.DETERMINISTIC)]
        ranks = [order.index(k) for k in self.kinds]
        if ranks != sorted(ranks):
            raise StructuralError("variables must be ordered x, then y, then deterministic")
        if self.d < 0:
            raise StructuralError(f"diffusion d must be non-negative, got {self.d}")

    # --- partition -----------------------------------------------------------

    @property
    def dim(self) -> int:
        return len(self.kinds)

    def _indices(self, kind: VariableKind) -> np.ndarray:
        return np.array([i for i, k in enumerate(self.kinds) if k is kind], dtype=int)

    @property
    def x_idx(self) -> np.ndarray:
        return self._indices(VariableKind.X)

    @property
    def y_idx(self) -> np.ndarray:
        return self._indices(VariableKind.Y)

    @property
    def det_idx(self) -> np.ndarray:
        return self._indices(VariableKind.DETERMINISTIC)

    @property
    def forward_idx(self) -> np.ndarray:
        """x and deterministic variables: pinned at t0"""
        return np.concatenate([self.x_idx, self.det_idx])

    @property
    def n_x(self) -> int:
        return len(self.x_idx)

    @property
    def n_y(self) -> int:
        return len(self.y_idx)

    @property
    def n_noisy(self) -> int:
        return self.n_x + self.n_y

    @property
    def is_deterministic(self) -> bool:
        return self.d == 0 or self.n_noisy == 0

    def diffusion_signs(self) -> np.ndarray:
        sign = {VariableKind.X: 1.0, VariableKind.Y: -1.0, VariableKind.DETERMINISTIC: 0.0}
        return np.array([sign[k] for k in self.kinds])

    def diffusion_matrix(self) -> np.ndarray:
        return np.diag(self.d * self.diffusion_signs())

    def noise_mask(self) -> np.ndarray:
        return self.diffusion_signs() != 0

    # --- drifts --------------------------------------------------------------

    def _points(self, phi) -> np.ndarray:
        phi = np.asarray(phi, dtype=float)
        if phi.shape[-1:] != (self.dim,):
            raise StructuralError(f"model {self.name} expects {self.dim} components, got shape {phi.shape}")
        return phi

    def A(self, phi) -> np.ndarray:
        return np.asarray(self.drift(self._points(phi)), dtype=float)

    def a_x(self, phi) -> np.ndarray:
        return self.A(phi)[..., self.x_idx]

    def a_y(self, phi) -> np.ndarray:
        return -self.A(phi)[..., self.y_idx]

    def J(self, phi) -> np.ndarray:
        """J[..., nu, mu] = dA^nu / dphi^mu"""
        phi = self._points(phi)
        jac = np.asarray(self.jacobian(phi), dtype=float)
        return np.broadcast_to(jac, phi.shape[:-1] + (self.dim, self.dim))

    def H(self, phi) -> np.ndarray:
        """H[..., nu, a, b] = d^2 A^nu / dphi^a dphi^b, by central differences of J when not supplied"""
        phi = self._points(phi)
        if self.hessian is not None:
            hess = np.asarray(self.hessian(phi), dtype=float)
            return np.broadcast_to(hess, phi.shape[:-1] + (self.dim,) * 3)
        cols = []
        for b in range(self.dim):
            step = np.zeros(self.dim)
            step[b] = FD_STEP
            cols.append((self.J(phi + step) - self.J(phi - step)) / (2 * FD_STEP))
        return np.stack(cols, axis=-1)

    def div_x(self, phi) -> np.ndarray:
        """sum over x of d a^x_i / d x_i"""
        jac = self.J(phi)
        return np.sum(jac[..., self.x_idx, self.x_idx], axis=-1)

    def div_y(self, phi) -> np.ndarray:
        """sum over y of d a^y_i / d y_i"""
        jac = self.J(phi)
        return -np.sum(jac[..., self.y_idx, self.y_idx], axis=-1)

    def jacobian_error(self, points, h: float = FD_STEP) -> float:
        """Max relative mismatch between J and central differences of A"""
        points = self._points(points)
        worst = 0.0
        jac = self.J(points)
        for mu in range(self.dim):
            step = np.zeros(self.dim)
            step[mu] = h
            fd = (self.A(points + step) - self.A(points - step)) / (2 * h)
            err = np.abs(fd - jac[..., :, mu])
            scale = np.maximum(np.abs(jac[..., :, mu]), 1.0)
            worst = max(worst, float(np.max(err / scale)))
        return worst


# --- construction ------------------------------------------------------------

def linear_model(name: str, matrix, d: float, kinds: Sequence, labels: Sequence[str],
                 offset=None) -> QuadratureModel:
    """Model with A(phi) = matrix @ phi + offset"""
    k = np.atleast_2d(np.asarray(matrix, dtype=float))
    b = np.zeros(k.shape[0]) if offset is None else np.asarray(offset, dtype=float)
    if k.shape[0] != k.shape[1] or b.shape != (k.shape[0],):
        raise StructuralError(f"linear drift needs a square matrix and matching offset, got {k.shape}, {b.shape}")
    dim = k.shape[0]
    return QuadratureModel(
        name=name,
        drift=lambda phi: phi @ k.T + b,
        jacobian=lambda phi: np.broadcast_to(k, phi.shape[:-1] + (dim, dim)),
        hessian=lambda phi: np.zeros(phi.shape[:-1] + (dim, dim, dim)),
        d=d,
        kinds=tuple(kinds),
        labels=tuple(labels),
        linear=True,
    )


def _component_labels(prefix: str, count: int) -> List[str]:
    return [prefix] if count == 1 else [f"{prefix}{i + 1}" for i in range(count)]


def _sign_fixed(vec: np.ndarray, tol: float) -> np.ndarray:
    nz = np.flatnonzero(np.abs(vec) > tol)
    if nz.size and vec[nz[0]] < 0:
        return -vec
    return vec


def diagonalize_diffusion(dq: np.ndarray, tol: float = 1e-12):
    """
    Rotation of a constant real diffusion matrix into +d / -d / 0 blocks.

    Returns:
        (transform, d, kinds) where transform rows are the new variables in
        source coordinates, scaled so every noisy variable has |diffusion| = d
    """
    dq = 0.5 * (dq + dq.T)
    w, v = linalg.eigh(dq)
    cutoff = tol * max(1.0, float(np.max(np.abs(w))) if w.size else 1.0)
    pos = [i for i in np.argsort(-w, kind="stable") if w[i] > cutoff]
    neg = [i for i in np.argsort(w, kind="stable") if w[i] < -cutoff]
    zero = [i for i in range(len(w)) if abs(w[i]) <= cutoff]

    d = float(max((abs(w[i]) for i in pos + neg), default=0.0))
    rows, kinds = [], []
    for group, kind in ((pos, VariableKind.X), (neg, VariableKind.Y), (zero, VariableKind.DETERMINISTIC)):
        for i in group:
            vec = _sign_fixed(v[:, i], tol)
            scale = np.sqrt(d / abs(w[i])) if kind is not VariableKind.DETERMINISTIC else 1.0
            rows.append(scale * vec)
            kinds.append(kind)
    return np.array(rows).reshape(len(w), len(w)), d, tuple(kinds)


def _labels_for(transform: np.ndarray, kinds, source_labels: Sequence[str], tol: float = 1e-12) -> Tuple[str, ...]:
    n_x = sum(1 for k in kinds if k is VariableKind.X)
    n_y = sum(1 for k in kinds if k is VariableKind.Y)
    labels = _component_labels("x", n_x) + _component_labels("y", n_y)
    for row in transform[n_x + n_y:]:
        nz = np.flatnonzero(np.abs(row) > tol)
        labels.append(source_labels[nz[0]] if nz.size == 1 else f"u{len(labels) + 1}")
    return tuple(labels)


def _real_labels(modes: int) -> Tuple[str, ...]:
    return tuple(_component_labels("q", modes) + _component_labels("p", modes))


def rotated_model(name: str, source_drift: ArrayFn, source_jacobian: ArrayFn, dq: np.ndarray,
                  source_labels: Sequence[str], source_hessian: Optional[ArrayFn] = None,
                  linear: bool = False) -> QuadratureModel:
    """Model in the rotated variables phi = T r of a source model with constant diffusion dq"""
    transform, d, kinds = diagonalize_diffusion(np.asarray(dq, dtype=float))
    inverse = np.linalg.inv(transform)

    def drift(phi):
        return source_drift(phi @ inverse.T) @ transform.T

    def jacobian(phi):
        return np.einsum("ab,...bc,cd->...ad", transform, source_jacobian(phi @ inverse.T), inverse)

    hessian = None
    if source_hessian is not None:
        def hessian(phi):
            return np.einsum("na,...abc,bi,cj->...nij", transform, source_hessian(phi @ inverse.T), inverse, inverse)

    model = QuadratureModel(
        name=name, drift=drift, jacobian=jacobian, hessian=hessian, d=d, kinds=kinds,
        labels=_labels_for(transform, kinds, source_labels), transform=transform,
        source_labels=tuple(source_labels), linear=linear,
    )
    logger.debug(f"Built quadrature model {name}: d={d:.6g}, partition x={model.n_x} y={model.n_y} det={len(model.det_idx)}")
    return model


def to_quadrature_model(coeffs: ComplexCoefficients, name: str = "custom") -> QuadratureModel:
    """
    Real-quadrature model of complex Fokker-Planck coefficients.

    Raises:
        UnsupportedModelError: diffusion depends on the phase-space point
    """
    if not coeffs.is_constant_diffusion():
        raise UnsupportedModelError(
            "diffusion is not constant in phase space; apply log_transform to obtain constant diffusion"
        )
    origin = np.zeros(coeffs.nvars)
    dq = coeffs.real_diffusion(origin)
    model = rotated_model(
        name, coeffs.real_drift, coeffs.real_jacobian, dq, _real_labels(coeffs.modes),
        source_hessian=coeffs.real_hessian,
        linear=all(p.degree <= 1 for p in coeffs.drift),
    )
    if model.n_x != model.n_y:
        logger.warning(f"Model {name} has unequal partition sizes x={model.n_x}, y={model.n_y}")
    return model


def trace_check(source: Union[QuadratureModel, ComplexCoefficients], points) -> float:
    """
    Max |trace| of the signed real-variable diffusion over sample points.

    Args:
        source: quadrature model, or complex coefficients evaluated in the q/p quadratures
        points: real points (..., dim) or, for coefficients, complex amplitudes (..., M)
    """
    points = np.asarray(points)
    if isinstance(source, ComplexCoefficients):
        if np.iscomplexobj(points):
            points = np.concatenate([points.real, points.imag], axis=-1)
        dq = source.real_diffusion(points)
        traces = np.trace(dq, axis1=-2, axis2=-1)
    else:
        trace = float(np.trace(source.diffusion_matrix()))
        traces = np.full(np.asarray(points).shape[:-1], trace)
    return float(np.max(np.abs(traces))) if np.size(traces) else 0.0
