"""
Q_Bridge - Coupling Tensors
Quartic bosonic coupling coefficients g_ijkl and their constraint checks
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Tuple, Union

import numpy as np
from loguru import logger

from src.domain.errors import ConfigError, StructuralError

Index = Tuple[int, int, int, int]


@dataclass
class CouplingTensor:
    """
    Coupling coefficients of H = (hbar/2) sum g_ijkl B_ij B_kl with B_ij = a_i a_j^dagger.

    Index 0 is the unit mode (a_0 = 1), so linear and quadratic terms live in
    entries with one or two zero indices.
    """
    modes: int
    g: np.ndarray

    def __post_init__(self):
        if not isinstance(self.modes, (int, np.integer)) or self.modes < 1:
            raise StructuralError(f"modes must be a positive integer, got {self.modes!r}")
        self.g = np.asarray(self.g, dtype=complex)
        expected = (self.modes + 1,) * 4
        if self.g.shape != expected:
            raise StructuralError(f"coupling array must have shape {expected}, got {self.g.shape}")

    @classmethod
    def zeros(cls, modes: int) -> "CouplingTensor":
        return cls(modes=modes, g=np.zeros((modes + 1,) * 4, dtype=complex))

    @property
    def size(self) -> int:
        return self.modes + 1

    def nonzero_terms(self, atol: float = 0.0) -> Iterator[Tuple[Index, complex]]:
        for idx in zip(*np.nonzero(np.abs(self.g) > atol)):
            index = tuple(int(v) for v in idx)
            if index == (0, 0, 0, 0):
                continue  # constant energy offset
            yield index, complex(self.g[index])

    def with_term(self, i: int, j: int, k: int, l: int, value: complex) -> "CouplingTensor":
        g = self.g.copy()
        g[i, j, k, l] += value
        return CouplingTensor(self.modes, g)

    def symmetrized(self) -> "CouplingTensor":
        """Average over the permutation and hermitian-conjugate images"""
        g = 0.5 * (self.g + self.g.transpose(2, 3, 0, 1))
        g = 0.5 * (g + np.conj(g.transpose(3, 2, 1, 0)))
        return CouplingTensor(self.modes, g)

    @classmethod
    def random(cls, modes: int, rng: np.random.Generator, scale: float = 1.0) -> "CouplingTensor":
        """Random tensor satisfying both constraints"""
        shape = (modes + 1,) * 4
        g = scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
        return cls(modes, g).symmetrized()

    # --- JSON ----------------------------------------------------------------

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CouplingTensor":
        try:
            modes = int(data["modes"])
            terms = data.get("terms", [])
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"coupling document needs integer 'modes' and a 'terms' list: {e}")

        tensor = cls.zeros(modes)
        for n, term in enumerate(terms):
            try:
                i, j, k, l = (int(term[key]) for key in ("i", "j", "k", "l"))
                value = complex(float(term.get("re", 0.0)), float(term.get("im", 0.0)))
            except (KeyError, TypeError, ValueError) as e:
                raise ConfigError(f"coupling term #{n} is malformed: {e}")
            if not all(0 <= v <= modes for v in (i, j, k, l)):
                raise StructuralError(f"coupling term #{n} index ({i},{j},{k},{l}) outside 0..{modes}")
            tensor.g[i, j, k, l] += value
        return tensor

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "CouplingTensor":
        path = Path(path)
        try:
            with open(path, "r") as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read coupling tensor {path}: {e}")
        tensor = cls.from_dict(data)
        logger.debug(f"Loaded {tensor.modes}-mode coupling tensor from {path}")
        return tensor

    def to_dict(self) -> Dict[str, Any]:
        terms = [
            {"i": i, "j": j, "k": k, "l": l, "re": v.real, "im": v.imag}
            for (i, j, k, l), v in self.nonzero_terms()
        ]
        return {"modes": int(self.modes), "terms": terms}


@dataclass(frozen=True)
class CouplingViolation:
    """One failed constraint"""
    kind: str  # "hermiticity" or "permutation"
    index: Index
    value: complex
    expected: complex

    def __str__(self) -> str:
        i, j, k, l = self.index
        return f"{self.kind} at ({i},{j},{k},{l}): {self.value:.6g} != {self.expected:.6g}"


@dataclass
class ValidationReport:
    """Violated constraints; an empty report means the tensor is valid"""
    modes: int
    violations: List[CouplingViolation] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.violations

    def indices(self, kind: Optional[str] = None) -> List[Index]:
        return [v.index for v in self.violations if kind is None or v.kind == kind]

    def lines(self) -> List[str]:
        if self.valid:
            return [f"valid {self.modes}-mode coupling tensor"]
        return [str(v) for v in self.violations]


def validate_couplings(tensor: CouplingTensor, atol: float = 1e-12) -> ValidationReport:
    """
    Check g_ijkl = conj(g_lkji) and g_ijkl = g_klij for every index.

    Args:
        tensor: coupling tensor
        atol: absolute tolerance on each constraint

    Returns:
        ValidationReport listing every violated index
    """
    g = np.asarray(tensor.g)
    if g.ndim != 4 or len(set(g.shape)) != 1 or g.shape[0] != tensor.modes + 1:
        raise StructuralError(f"coupling array shape {g.shape} does not match {tensor.modes} modes")

    report = ValidationReport(modes=tensor.modes)
    herm = np.conj(g.transpose(3, 2, 1, 0))
    perm = g.transpose(2, 3, 0, 1)

    for kind, partner in (("hermiticity", herm), ("permutation", perm)):
        for idx in zip(*np.nonzero(np.abs(g - partner) > atol)):
            index = tuple(int(v) for v in idx)
            report.violations.append(
                CouplingViolation(kind=kind, index=index, value=complex(g[index]),
                                  expected=complex(partner[index]))
            )

    if report.valid:
        logger.debug(f"Coupling tensor ({tensor.modes} modes) passed validation")
    else:
        logger.debug(f"Coupling tensor has {len(report.violations)} constraint violations")
    return report


# --- Builders ----------------------------------------------------------------

def squeezing_tensor(strength: float = 1.0) -> CouplingTensor:
    """Single-mode squeezing H = i*hbar*r*(a^dag^2 - a^2)/2"""
    tensor = CouplingTensor.zeros(1)
    tensor.g[0, 1, 0, 1] = 1j * strength
    tensor.g[1, 0, 1, 0] = -1j * strength
    return tensor


def free_field_tensor(omega) -> CouplingTensor:
    """Linear evolution H = hbar * sum omega_ij a_i^dag a_j for a Hermitian omega"""
    omega = np.atleast_2d(np.asarray(omega, dtype=complex))
    if omega.shape[0] != omega.shape[1]:
        raise StructuralError(f"frequency matrix must be square, got {omega.shape}")
    tensor = CouplingTensor.zeros(omega.shape[0])
    for i in range(omega.shape[0]):
        for j in range(omega.shape[0]):
            tensor.g[j + 1, i + 1, 0, 0] += omega[i, j]
            tensor.g[0, 0, j + 1, i + 1] += omega[i, j]
    return tensor


def kerr_tensor(omega, g2) -> CouplingTensor:
    """
    Density-density coupling H = hbar * sum omega_ij a_i^dag a_j + hbar * sum g_ij n_i n_j / 2,
    written through B_ii = n_i + 1.
    """
    g2 = np.atleast_2d(np.asarray(g2, dtype=float))
    modes = g2.shape[0]
    omega = np.zeros((modes, modes)) if omega is None else np.atleast_2d(np.asarray(omega, dtype=complex))
    if g2.shape != (modes, modes) or omega.shape != (modes, modes):
        raise StructuralError(f"omega {omega.shape} and g2 {g2.shape} must be square and equal")

    tensor = free_field_tensor(omega)
    for i in range(modes):
        for j in range(modes):
            tensor.g[i + 1, i + 1, j + 1, j + 1] += g2[i, j]
        row = g2[i].sum()
        tensor.g[i + 1, i + 1, 0, 0] -= row
        tensor.g[0, 0, i + 1, i + 1] -= row
    return tensor
