"""
Q_Bridge - Liouvillian Expansion
Expands the Q-function Liouvillian of a coupling tensor into Fokker-Planck drift and diffusion
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from loguru import logger

from src.domain.errors import CouplingValidationError, StructuralError
from src.phase_model.coupling import CouplingTensor, validate_couplings
from src.phase_model.polynomial import Polynomial

# Operator in divergence form: {sorted derivative indices: p} meaning sum_D d^D [p Q]
Operator = Dict[Tuple[int, ...], Polynomial]


def _add_into(target: Operator, source: Operator, scale: complex = 1.0):
    for key, poly in source.items():
        scaled = poly * scale if scale != 1.0 else poly
        target[key] = target[key] + scaled if key in target else scaled


def _times_term(f: Polynomial, derivs: Tuple[int, ...], p: Polynomial) -> Operator:
    """f * d^derivs [p Q], rewritten with all derivatives on the left"""
    if not derivs:
        return {(): f * p}
    first, rest = derivs[0], derivs[1:]
    out: Operator = {}
    # f d_mu X = d_mu (f X) - (d_mu f) X
    for key, poly in _times_term(f, rest, p).items():
        _add_into(out, {tuple(sorted(key + (first,))): poly})
    df = f.derivative(first)
    if df.terms:
        _add_into(out, _times_term(df, rest, p), -1.0)
    return out


def _times(op: Operator, f: Polynomial) -> Operator:
    out: Operator = {}
    for derivs, p in op.items():
        _add_into(out, _times_term(f, derivs, p))
    return out


def _derive(op: Operator, index: int) -> Operator:
    return {tuple(sorted(derivs + (index,))): p for derivs, p in op.items()}


@dataclass
class ComplexCoefficients:
    """
    Fokker-Planck coefficients over z = (alpha_1..alpha_M, alpha_1*..alpha_M*).

    drift[mu] and diffusion[mu][nu] are polynomials in z.
    """
    modes: int
    drift: List[Polynomial]
    diffusion: List[List[Polynomial]]
    residual: Optional[Polynomial] = None  # zero-order terms, vanish for valid tensors
    _drift_grad: Optional[List[List[Polynomial]]] = field(default=None, repr=False)
    _drift_hess: Optional[List[List[List[Polynomial]]]] = field(default=None, repr=False)

    @property
    def nvars(self) -> int:
        return 2 * self.modes

    # --- complex evaluators --------------------------------------------------

    def _z(self, alpha) -> np.ndarray:
        alpha = np.asarray(alpha, dtype=complex)
        if alpha.shape[-1:] != (self.modes,):
            raise StructuralError(f"expected {self.modes} mode amplitudes, got shape {alpha.shape}")
        return np.concatenate([alpha, np.conj(alpha)], axis=-1)

    def drift_alpha(self, alpha) -> np.ndarray:
        """Complex drift A at amplitudes alpha (..., M) -> (..., 2M)"""
        z = self._z(alpha)
        return np.stack([p.evaluate(z) for p in self.drift], axis=-1)

    def diffusion_alpha(self, alpha) -> np.ndarray:
        """Complex diffusion matrix at amplitudes alpha (..., M) -> (..., 2M, 2M)"""
        z = self._z(alpha)
        rows = [np.stack([p.evaluate(z) for p in row], axis=-1) for row in self.diffusion]
        return np.stack(rows, axis=-2)

    def is_constant_diffusion(self) -> bool:
        return all(p.degree == 0 for row in self.diffusion for p in row)

    def is_zero_diffusion(self, atol: float = 0.0) -> bool:
        return all(p.is_zero(atol) for row in self.diffusion for p in row)

    # --- real quadratures (alpha = q + i p) ----------------------------------

    def _alpha_from_real(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if r.shape[-1:] != (self.nvars,):
            raise StructuralError(f"expected {self.nvars} real quadratures, got shape {r.shape}")
        return r[..., : self.modes] + 1j * r[..., self.modes:]

    def _real_directions(self) -> np.ndarray:
        """W[a, mu]: d/dr_a = sum_mu W[a, mu] d/dz_mu"""
        m = self.modes
        w = np.zeros((2 * m, 2 * m), dtype=complex)
        for j in range(m):
            w[j, j], w[j, m + j] = 1.0, 1.0
            w[m + j, j], w[m + j, m + j] = 1j, -1j
        return w

    def real_transform(self) -> np.ndarray:
        """T[mu, a]: d/dz_mu = sum_a T[mu, a] d/dr_a"""
        m = self.modes
        t = np.zeros((2 * m, 2 * m), dtype=complex)
        for j in range(m):
            t[j, j], t[j, m + j] = 0.5, -0.5j
            t[m + j, j], t[m + j, m + j] = 0.5, 0.5j
        return t

    def real_drift(self, r) -> np.ndarray:
        a = self.drift_alpha(self._alpha_from_real(r))[..., : self.modes]
        return np.concatenate([a.real, a.imag], axis=-1)

    def real_diffusion(self, r) -> np.ndarray:
        """Real diffusion matrix D_q = Re(T^T D T) at real points"""
        d = self.diffusion_alpha(self._alpha_from_real(r))
        t = self.real_transform()
        dq = np.einsum("ma,...mn,nb->...ab", t, d, t)
        return dq.real

    def real_jacobian(self, r) -> np.ndarray:
        """J[..., nu, mu] = dA^nu / dr_mu"""
        if self._drift_grad is None:
            self._drift_grad = [[p.derivative(mu) for mu in range(self.nvars)] for p in self.drift[: self.modes]]
        z = self._z(self._alpha_from_real(r))
        grad = np.stack(
            [np.stack([p.evaluate(z) for p in row], axis=-1) for row in self._drift_grad], axis=-2
        )  # (..., M, 2M) over complex variables
        jac = grad @ self._real_directions().T
        return np.concatenate([jac.real, jac.imag], axis=-2)

    def real_hessian(self, r) -> np.ndarray:
        """H[..., nu, a, b] = d^2 A^nu / dr_a dr_b"""
        if self._drift_hess is None:
            self._drift_hess = [
                [[p.derivative(mu).derivative(nu) for nu in range(self.nvars)] for mu in range(self.nvars)]
                for p in self.drift[: self.modes]
            ]
        z = self._z(self._alpha_from_real(r))
        w = self._real_directions()
        hess = np.stack([
            np.stack([np.stack([p.evaluate(z) for p in row], axis=-1) for row in block], axis=-2)
            for block in self._drift_hess
        ], axis=-3)  # (..., M, 2M, 2M)
        hess = np.einsum("am,...jmn,bn->...jab", w, hess, w)
        return np.concatenate([hess.real, hess.imag], axis=-3)


def _factor_maps(modes: int):
    """Polynomials for alpha_i, alpha_i* and derivative indices, with index 0 as the unit mode"""
    n = 2 * modes
    one = Polynomial.constant(1.0, n)

    def alpha(i: int, conj: bool) -> Polynomial:
        if i == 0:
            return one
        return Polynomial.variable(i - 1 + (modes if conj else 0), n)

    def deriv(i: int, conj: bool) -> Optional[int]:
        if i == 0:
            return None  # d_0 = 0
        return i - 1 + (modes if conj else 0)

    return alpha, deriv


def _term_operator(index, modes: int, conj: bool) -> Operator:
    """(d_l + a_l*) a_k (d_j + a_j*) a_i Q, or its conjugate with alpha and alpha* swapped"""
    i, j, k, l = index
    alpha, deriv = _factor_maps(modes)
    op: Operator = {(): Polynomial.constant(1.0, 2 * modes)}

    def shift(op: Operator, m: int) -> Operator:
        out = _times(op, alpha(m, not conj))
        d = deriv(m, conj)
        if d is not None:
            _add_into(out, _derive(op, d))
        return out

    op = _times(op, alpha(i, conj))
    op = shift(op, j)
    op = _times(op, alpha(k, conj))
    op = shift(op, l)
    return op


def expand_liouvillian(tensor: CouplingTensor, validate: bool = True) -> ComplexCoefficients:
    """
    Expand (i/2) g_ijkl [(d_l + a_l*) a_k (d_j + a_j*) a_i - c.c.] into drift and diffusion.

    Args:
        tensor: coupling tensor
        validate: reject tensors that violate the hermiticity or permutation constraints

    Returns:
        ComplexCoefficients with A^mu = -(first-order coefficient) and
        D^{mu mu} = 2 c, D^{mu nu} = c for the second-order coefficients c
    """
    if validate:
        report = validate_couplings(tensor)
        if not report.valid:
            raise CouplingValidationError(report.violations)

    m = tensor.modes
    n = 2 * m
    scale = float(np.max(np.abs(tensor.g))) if tensor.g.size else 0.0
    total: Operator = {}
    for index, value in tensor.nonzero_terms():
        _add_into(total, _term_operator(index, m, conj=False), 0.5j * value)
        _add_into(total, _term_operator(index, m, conj=True), -0.5j * np.conj(value))

    atol = 1e-13 * max(scale, 1.0)
    zero = Polynomial(n)
    drift = [zero for _ in range(n)]
    diffusion = [[zero for _ in range(n)] for _ in range(n)]
    residual = zero

    for derivs, poly in total.items():
        poly = poly.pruned(atol)
        if not poly.terms:
            continue
        if len(derivs) == 0:
            residual = residual + poly
        elif len(derivs) == 1:
            drift[derivs[0]] = drift[derivs[0]] - poly
        elif len(derivs) == 2:
            mu, nu = derivs
            if mu == nu:
                diffusion[mu][mu] = diffusion[mu][mu] + poly * 2.0
            else:
                diffusion[mu][nu] = diffusion[mu][nu] + poly
                diffusion[nu][mu] = diffusion[nu][mu] + poly
        else:
            raise RuntimeError(f"unexpected derivative order {len(derivs)} in Liouvillian expansion")

    if not residual.is_zero(atol):
        logger.warning(f"Liouvillian has non-cancelling zero-order terms: {residual}")

    logger.debug(
        f"Expanded {m}-mode Liouvillian: "
        f"{sum(len(p.terms) for p in drift)} drift terms, "
        f"{sum(len(p.terms) for row in diffusion for p in row)} diffusion terms"
    )
    return ComplexCoefficients(modes=m, drift=drift, diffusion=diffusion, residual=residual)


def diffusion_closed_form(tensor: CouplingTensor, alpha) -> np.ndarray:
    """D^{lj} = i sum_ik g_ijkl alpha_i alpha_k over the unconjugated block, shape (..., M, M)"""
    alpha = np.asarray(alpha, dtype=complex)
    ones = np.ones(alpha.shape[:-1] + (1,), dtype=complex)
    a = np.concatenate([ones, alpha], axis=-1)
    full = 1j * np.einsum("ijkl,...i,...k->...lj", tensor.g, a, a)
    return full[..., 1:, 1:]
