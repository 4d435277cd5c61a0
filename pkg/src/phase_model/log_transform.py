"""
Q_Bridge - Logarithmic Transform
Constant-diffusion variables theta = lambda * ln(alpha) for density-density couplings
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from loguru import logger

from src.domain.errors import ConfigError, StructuralError
from src.phase_model.coupling import kerr_tensor
from src.phase_model.liouvillian import ComplexCoefficients, expand_liouvillian
from src.phase_model.quadrature import QuadratureModel, rotated_model

JACOBIAN_STEP = 1e-6


@dataclass
class LogTransformSpec:
    """Scaling, per-mode phase angles and coupling of the log-variable model"""
    lam: float
    eta: np.ndarray
    g2: np.ndarray
    diffusion_theta: np.ndarray  # D^theta = i lam^2 g2
    coefficients: Optional[ComplexCoefficients] = None

    @property
    def modes(self) -> int:
        return self.g2.shape[0]

    def to_theta(self, alpha) -> np.ndarray:
        return self.lam * np.log(np.asarray(alpha, dtype=complex))

    def to_alpha(self, theta) -> np.ndarray:
        return np.exp(np.asarray(theta, dtype=complex) / self.lam)

    def to_real(self, theta) -> np.ndarray:
        """(x + i y) = exp(-i eta) theta per mode, returned as (Re..., Im...)"""
        u = np.exp(-1j * self.eta) * np.asarray(theta, dtype=complex)
        return np.concatenate([u.real, u.imag], axis=-1)

    def from_real(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        u = r[..., : self.modes] + 1j * r[..., self.modes:]
        return np.exp(1j * self.eta) * u


def _real_symmetric(g2: np.ndarray) -> np.ndarray:
    if g2.ndim != 2 or g2.shape[0] != g2.shape[1]:
        raise StructuralError(f"density coupling must be a square matrix, got shape {g2.shape}")
    if not np.allclose(g2, np.conj(g2.T), atol=1e-12):
        raise ConfigError("density coupling matrix must be Hermitian")
    sym = np.real(0.5 * (g2 + g2.T))
    dropped = float(np.max(np.abs(g2 - sym))) if g2.size else 0.0
    if dropped > 1e-12:
        logger.warning(f"Dropping non-real part of density coupling (max {dropped:.3g})")
    return sym


def log_transform(g2, lam: float, omega=None, name: str = "kerr") -> Tuple[LogTransformSpec, QuadratureModel]:
    """
    Log-variable model of a density-density coupled Hamiltonian.

    Args:
        g2: Hermitian density coupling matrix g_ij
        lam: positive scaling of theta = lam * ln(alpha)
        omega: optional frequency matrix of the quadratic part

    Returns:
        (LogTransformSpec, QuadratureModel) with constant diffusion D^theta = i lam^2 g2

    Raises:
        ConfigError: lam <= 0 or g2 not Hermitian
    """
    if not lam > 0:
        raise ConfigError(f"log transform scaling must be positive, got lam={lam}")
    g2 = _real_symmetric(np.atleast_2d(np.asarray(g2, dtype=complex)))
    modes = g2.shape[0]

    coeffs = expand_liouvillian(kerr_tensor(omega, g2))
    d_theta = 1j * lam ** 2 * g2
    eta = 0.5 * np.angle(np.diag(d_theta))
    eta = np.where(np.abs(np.diag(d_theta)) > 0, eta, 0.0)
    spec = LogTransformSpec(lam=lam, eta=eta, g2=g2, diffusion_theta=d_theta, coefficients=coeffs)

    rot = np.exp(-1j * eta)
    d_u = rot[:, None] * d_theta * rot[None, :]
    dq = 0.5 * np.block([[d_u.real, d_u.imag], [d_u.imag, -d_u.real]])

    def theta_drift(theta: np.ndarray) -> np.ndarray:
        alpha = spec.to_alpha(theta)
        a_alpha = coeffs.drift_alpha(alpha)[..., :modes]
        diff = coeffs.diffusion_alpha(alpha)
        d_jj = np.diagonal(diff, axis1=-2, axis2=-1)[..., :modes]
        return lam * a_alpha / alpha - 0.5 * lam * d_jj / alpha ** 2

    def real_drift(r: np.ndarray) -> np.ndarray:
        u_dot = rot * theta_drift(spec.from_real(r))
        return np.concatenate([u_dot.real, u_dot.imag], axis=-1)

    def real_jacobian(r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        cols = []
        for mu in range(2 * modes):
            step = np.zeros(2 * modes)
            step[mu] = JACOBIAN_STEP
            cols.append((real_drift(r + step) - real_drift(r - step)) / (2 * JACOBIAN_STEP))
        return np.stack(cols, axis=-1)

    labels = ["u_re", "u_im"] if modes == 1 else (
        [f"u{j + 1}_re" for j in range(modes)] + [f"u{j + 1}_im" for j in range(modes)]
    )
    model = rotated_model(name, real_drift, real_jacobian, dq, labels)
    logger.info(f"Log transform: lam={lam}, eta={np.round(eta, 6).tolist()}, d={model.d:.6g}")
    return spec, model
