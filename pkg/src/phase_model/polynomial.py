"""
Q_Bridge - Sparse Polynomials
Multivariate complex polynomials in (alpha, alpha*) with exact coefficients
"""

from typing import Dict, Iterable, Tuple, Union

import numpy as np

Exponents = Tuple[int, ...]
Scalar = Union[int, float, complex]


class Polynomial:
    """Sparse polynomial: {exponent tuple: complex coefficient}"""

    __slots__ = ("nvars", "terms", "_packed")

    def __init__(self, nvars: int, terms: Dict[Exponents, complex] = None):
        self.nvars = nvars
        self.terms: Dict[Exponents, complex] = {}
        self._packed = None
        for exps, coeff in (terms or {}).items():
            if len(exps) != nvars:
                raise ValueError(f"exponent {exps} does not have {nvars} entries")
            if coeff != 0:
                self.terms[tuple(exps)] = self.terms.get(tuple(exps), 0) + complex(coeff)

    @classmethod
    def constant(cls, value: Scalar, nvars: int) -> "Polynomial":
        return cls(nvars, {(0,) * nvars: value})

    @classmethod
    def variable(cls, index: int, nvars: int) -> "Polynomial":
        exps = [0] * nvars
        exps[index] = 1
        return cls(nvars, {tuple(exps): 1.0})

    # --- algebra -------------------------------------------------------------

    def _check(self, other: "Polynomial"):
        if other.nvars != self.nvars:
            raise ValueError(f"polynomials over {self.nvars} and {other.nvars} variables")

    def __add__(self, other) -> "Polynomial":
        if not isinstance(other, Polynomial):
            other = Polynomial.constant(other, self.nvars)
        self._check(other)
        out = dict(self.terms)
        for exps, coeff in other.terms.items():
            out[exps] = out.get(exps, 0) + coeff
        return Polynomial(self.nvars, {e: c for e, c in out.items() if c != 0})

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return Polynomial(self.nvars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other) -> "Polynomial":
        return self + (-other)

    def __mul__(self, other) -> "Polynomial":
        if not isinstance(other, Polynomial):
            return Polynomial(self.nvars, {e: c * other for e, c in self.terms.items()})
        self._check(other)
        out: Dict[Exponents, complex] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                exps = tuple(a + b for a, b in zip(e1, e2))
                out[exps] = out.get(exps, 0) + c1 * c2
        return Polynomial(self.nvars, {e: c for e, c in out.items() if c != 0})

    __rmul__ = __mul__

    def derivative(self, index: int) -> "Polynomial":
        out: Dict[Exponents, complex] = {}
        for exps, coeff in self.terms.items():
            power = exps[index]
            if power == 0:
                continue
            lowered = list(exps)
            lowered[index] -= 1
            key = tuple(lowered)
            out[key] = out.get(key, 0) + coeff * power
        return Polynomial(self.nvars, out)

    # --- inspection ----------------------------------------------------------

    def is_zero(self, atol: float = 0.0) -> bool:
        return all(abs(c) <= atol for c in self.terms.values())

    def pruned(self, atol: float) -> "Polynomial":
        return Polynomial(self.nvars, {e: c for e, c in self.terms.items() if abs(c) > atol})

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def coefficient(self, exps: Iterable[int]) -> complex:
        return self.terms.get(tuple(exps), 0j)

    def max_abs_difference(self, other: "Polynomial") -> float:
        """Largest coefficient mismatch"""
        diff = self - other
        return max((abs(c) for c in diff.terms.values()), default=0.0)

    def __eq__(self, other) -> bool:
        return isinstance(other, Polynomial) and self.nvars == other.nvars and self.max_abs_difference(other) == 0

    def __repr__(self) -> str:
        if not self.terms:
            return "Polynomial(0)"
        parts = [f"{c:.4g}*{e}" for e, c in sorted(self.terms.items())]
        return "Polynomial(" + " + ".join(parts) + ")"

    # --- evaluation ----------------------------------------------------------

    def evaluate(self, z: np.ndarray) -> np.ndarray:
        """Evaluate at points z of shape (..., nvars)"""
        z = np.asarray(z, dtype=complex)
        if not self.terms:
            return np.zeros(z.shape[:-1], dtype=complex)
        if self._packed is None:
            exps = np.array(list(self.terms.keys()), dtype=int)
            coeffs = np.array(list(self.terms.values()), dtype=complex)
            self._packed = (exps, coeffs)
        exps, coeffs = self._packed
        monomials = np.prod(z[..., None, :] ** exps, axis=-1)
        return monomials @ coeffs

    __call__ = evaluate
