#!/usr/bin/env python3
"""
Check the exact identities of the phase-space pipeline
Traceless diffusion, action vs transition density, free-field evolution
"""

import sys
from pathlib import Path

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np

from src.action.engine import step_action, transition_density
from src.domain.models import PathField, PathGrid, Scheme
from src.phase_model.coupling import CouplingTensor
from src.phase_model.liouvillian import expand_liouvillian
from src.phase_model.presets import freefield_model, squeeze_model
from src.phase_model.quadrature import trace_check
from src.sampling.oracles import classical_path, free_field_oracle
from src.utils.logging import setup_logging

# Colors for terminal output
GREEN = '\033[92m'
RED = '\033[91m'
BLUE = '\033[94m'
RESET = '\033[0m'


def print_header(text):
    print(f"\n{BLUE}{'=' * 70}{RESET}")
    print(f"{BLUE}{text.center(70)}{RESET}")
    print(f"{BLUE}{'=' * 70}{RESET}\n")


def report(ok: bool, text: str) -> bool:
    mark = f"{GREEN}PASS{RESET}" if ok else f"{RED}FAIL{RESET}"
    print(f"  [{mark}] {text}")
    return ok


def check_traceless(tensors: int = 50, points: int = 100, seed: int = 0) -> bool:
    """Max |trace| of the real diffusion over random valid tensors"""
    print_header("Traceless diffusion")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for n in range(tensors):
        modes = 1 + n % 3
        coeffs = expand_liouvillian(CouplingTensor.random(modes, rng))
        alpha = rng.standard_normal((points, modes)) + 1j * rng.standard_normal((points, modes))
        worst = max(worst, trace_check(coeffs, alpha))
    return report(worst <= 1e-12, f"{tensors} tensors x {points} points, max |trace| = {worst:.3e}")


def check_action_density(transitions: int = 1000, seed: int = 1) -> bool:
    """exp(-S) against the two-Gaussian transition density"""
    print_header("Action vs transition density")
    model = squeeze_model()
    rng = np.random.default_rng(seed)
    eps = 0.03
    grid = PathGrid(0.0, eps, 1)
    ok = True
    for scheme in (Scheme.I, Scheme.II):
        worst = 0.0
        for _ in range(transitions):
            window = 0.3 * rng.standard_normal((2, model.dim))
            s = step_action(PathField(grid=grid, values=window), 1, scheme, model)
            p = transition_density(window[0], window[1], eps, scheme, model)
            worst = max(worst, abs(np.exp(-s) - p) / p)
        ok &= report(worst <= 1e-10, f"scheme {scheme.value}: max relative error {worst:.3e}")
    return ok


def check_free_field(omega: float = 1.0, alpha0: complex = 1.0) -> bool:
    """Deterministic path against alpha0 exp(-i omega t)"""
    print_header("Free-field evolution")
    grid = PathGrid.from_step(0.0, 1.0, 0.03)
    path = classical_path(freefield_model(omega), np.array([alpha0.real, alpha0.imag]), grid)
    exact = free_field_oracle(alpha0, omega, grid.times())
    err = np.max(np.abs(path[:, 0] + 1j * path[:, 1] - exact) / np.abs(exact))
    return report(err <= 1e-8, f"max relative error {err:.3e}")


def main() -> int:
    setup_logging("WARNING")
    results = [check_traceless(), check_action_density(), check_free_field()]
    print()
    return 0 if all(results) else 1


if __name__ == "__main__":
    sys.exit(main())
