"""
Q_Bridge - Reference Oracles
Closed-form variance curves, classical paths, direct SDE ensembles and exact lattice covariances
"""

from typing import List, Optional

import numpy as np
from loguru import logger
from scipy import integrate, linalg

from src.bridge.boundaries import BoundarySpec, InputSampler
from src.bridge.noise import DIRECT_STREAM, NoiseField
from src.bridge.spde import ExtraDrift, noise_scales
from src.domain.errors import ConfigError, QBridgeError, StructuralError, UnsupportedModelError
from src.domain.models import BridgeGrid, EnsembleSummary, PathGrid, ReferenceCurve
from src.phase_model.quadrature import QuadratureModel
from src.sampling.stats import summarize

DECOUPLING_TOL = 1e-10


def ou_oracle(k: float, d: float, v_boundary: float, direction: str = "forward", t_boundary: float = 0.0,
              component: str = "x", mean_boundary: float = 0.0) -> ReferenceCurve:
    """
    Variance of an Ornstein-Uhlenbeck variable relaxing away from a boundary.

    v(t) = d/(2k) + (v_b - d/(2k)) exp(-2k|t - t_b|), mean m_b exp(-k|t - t_b|).
    direction only documents which way the variable propagates.
    """
    if k <= 0:
        raise ConfigError(f"OU relaxation rate must be positive, got {k}")
    if direction not in ("forward", "backward"):
        raise ConfigError(f"direction must be 'forward' or 'backward', got {direction!r}")
    floor = d / (2.0 * k)

    def variance(t):
        return floor + (v_boundary - floor) * np.exp(-2.0 * k * np.abs(t - t_boundary))

    def mean(t):
        return mean_boundary * np.exp(-k * np.abs(t - t_boundary))

    return ReferenceCurve(component=component, variance=variance, mean=mean,
                          label=f"OU {direction} (k={k:g}, d={d:g})")


def wiener_oracle(v0: float, d: float, t0: float = 0.0, component: str = "x") -> ReferenceCurve:
    """Free diffusion from a random start: v(t) = v0 + d (t - t0)"""
    return ReferenceCurve(component=component, variance=lambda t: v0 + d * (t - t0),
                          mean=lambda t: np.zeros_like(t), label=f"Wiener (d={d:g})")


def heisenberg_oracle(t, quadrature: str = "x", strength: float = 1.0) -> np.ndarray:
    """Symmetric-ordered quadrature variance of a squeezed vacuum, 1/4 exp(-+2rt)"""
    sign = {"x": -1.0, "y": 1.0}
    if quadrature not in sign:
        raise ConfigError(f"quadrature must be 'x' or 'y', got {quadrature!r}")
    return 0.25 * np.exp(sign[quadrature] * 2.0 * strength * np.asarray(t, dtype=float))


def free_field_oracle(alpha0, omega: float, t, t0: float = 0.0) -> np.ndarray:
    """Coherent amplitude of a free mode, alpha(t) = alpha0 exp(-i omega (t - t0))"""
    t = np.asarray(t, dtype=float)
    return np.asarray(alpha0, dtype=complex) * np.exp(-1j * omega * (t - t0))


def propagated_oracle(model: QuadratureModel, sampler: InputSampler, t0: float = 0.0) -> List[ReferenceCurve]:
    """Input covariance carried by a noise-free linear model: C(t) = E C0 E^T with E = exp(J (t - t0))"""
    if not model.linear:
        raise UnsupportedModelError(f"model {model.name} is not linear")
    if model.n_y:
        raise UnsupportedModelError("propagation oracle covers forward-only models")
    origin = np.zeros(model.dim)
    jac = np.array(model.J(origin))
    offset = model.A(origin)
    cov0 = np.diag(sampler.variance())
    mean0 = sampler.expected()

    def propagators(t):
        return [linalg.expm(jac * (s - t0)) for s in np.atleast_1d(np.asarray(t, dtype=float))]

    def curve(c: int):
        def variance(t):
            return np.array([(e @ cov0 @ e.T)[c, c] for e in propagators(t)])

        def mean(t):
            return np.array([(e @ mean0)[c] for e in propagators(t)])

        # mean curve only for homogeneous drift
        return ReferenceCurve(component=model.labels[c], variance=variance,
                              mean=None if np.any(offset) else mean, label=f"propagated {model.name}")

    return [curve(c) for c in range(model.dim)]


def is_decoupled(model: QuadratureModel, points, tol: float = DECOUPLING_TOL) -> bool:
    """True when forward and backward variables do not drive each other at the sample points"""
    if not model.n_y or not len(model.forward_idx):
        return True
    jac = model.J(np.atleast_2d(points))
    fwd, bwd = model.forward_idx, model.y_idx
    cross = max(float(np.max(np.abs(jac[..., fwd[:, None], bwd]))),
                float(np.max(np.abs(jac[..., bwd[:, None], fwd]))))
    return cross <= tol


def _require_decoupled(model: QuadratureModel, points):
    samples = np.vstack([np.atleast_2d(points), np.random.default_rng(0).standard_normal((4, model.dim))])
    if not is_decoupled(model, samples):
        raise UnsupportedModelError(
            f"model {model.name} couples forward and backward variables; no direct integration exists"
        )


def classical_path(model: QuadratureModel, inputs, grid: PathGrid,
                   rtol: float = 1e-11, atol: float = 1e-12) -> np.ndarray:
    """
    Noise-free path phi' = A(phi) on the lattice.

    Forward variables start from their t0 inputs, backward ones are integrated
    from their tf inputs toward t0.

    Raises:
        UnsupportedModelError: forward and backward variables are coupled
    """
    inputs = np.asarray(inputs, dtype=float)
    if inputs.shape != (model.dim,):
        raise StructuralError(f"inputs must have shape ({model.dim},), got {inputs.shape}")
    _require_decoupled(model, inputs)
    times = np.clip(grid.times(), grid.t0, grid.tf)
    out = np.empty((grid.points, model.dim))

    def solve(idx: np.ndarray, span, t_eval) -> np.ndarray:
        def rhs(_t, z):
            phi = inputs.copy()
            phi[idx] = z
            return model.A(phi)[idx]

        sol = integrate.solve_ivp(rhs, span, inputs[idx], t_eval=t_eval, method="DOP853", rtol=rtol, atol=atol)
        if not sol.success:
            raise QBridgeError(f"classical path integration failed for {model.name}: {sol.message}")
        return sol.y.T

    fwd, bwd = model.forward_idx, model.y_idx
    if len(fwd):
        out[:, fwd] = solve(fwd, (grid.t0, grid.tf), times)
    if len(bwd):
        out[:, bwd] = solve(bwd, (grid.tf, grid.t0), times[::-1])[::-1]
    return out


def direct_tssde_oracle(model: QuadratureModel, grid: PathGrid, sampler: InputSampler, n_traj: int,
                        seed: int, substeps: int = 4, noise: bool = True, label: str = "direct") -> EnsembleSummary:
    """
    Euler-Maruyama ensemble of a decoupled time-symmetric SDE.

    x and deterministic variables step forward from t0, y variables step
    backward from tf with drift a^y = -A[y]. Increments have variance d*h.
    The summary has a single checkpoint at tau = inf.
    """
    if n_traj < 1:
        raise ConfigError(f"need at least one trajectory, got {n_traj}")
    if substeps < 1:
        raise ConfigError(f"substeps must be >= 1, got {substeps}")
    field = NoiseField(seed)
    trajectories = list(range(n_traj))
    inputs = field.inputs(sampler, trajectories)
    _require_decoupled(model, inputs[:8])

    rng = field.generator(0, DIRECT_STREAM)
    h = grid.eps / substeps
    amp = np.sqrt(model.d * h) if noise else 0.0
    noisy = model.noise_mask().astype(float)
    samples = np.empty((1, n_traj, grid.points, model.dim))
    paths = samples[0]
    fwd, bwd = model.forward_idx, model.y_idx

    state = inputs.copy()
    paths[:, 0, fwd] = state[:, fwd]
    for k in range(1, grid.points):
        for _ in range(substeps):
            kick = amp * noisy * rng.standard_normal(state.shape)
            step = h * model.A(state) + kick
            state[:, fwd] += step[:, fwd]
        paths[:, k, fwd] = state[:, fwd]

    state = inputs.copy()
    paths[:, -1, bwd] = state[:, bwd]
    for k in range(grid.points - 2, -1, -1):
        for _ in range(substeps):
            kick = amp * noisy * rng.standard_normal(state.shape)
            step = -h * model.A(state) + kick
            state[:, bwd] += step[:, bwd]
        paths[:, k, bwd] = state[:, bwd]

    if not np.all(np.isfinite(samples)):
        raise QBridgeError(f"direct integration of {model.name} produced non-finite values")
    logger.debug(f"Direct SDE oracle for {model.name}: {n_traj} trajectories, h={h:g}")
    return summarize(samples, [np.inf], grid.times(), model.labels, label=label)


def lattice_oracle(model: QuadratureModel, grid: BridgeGrid, spec: BoundarySpec,
                   label: str = "lattice") -> EnsembleSummary:
    """
    Exact stationary moments of the lattice SPDE for a linear model.

    The drift over free entries is affine, -K phi + B p + c, in the free values
    phi and the pinned inputs p. The stationary covariance solves the Lyapunov
    equation K S + S K^T = Q for the per-unit-tau noise Q; input spread adds
    M Var(p) M^T with M = K^-1 B.
    """
    if not model.linear:
        raise UnsupportedModelError(f"lattice oracle needs a linear model, {model.name} is not")
    path = grid.path
    points, dim = path.points, model.dim
    drift = ExtraDrift(model, path.eps, spec)
    pinned = spec.pinned_mask(points).ravel()
    free = ~pinned

    def response(flat: np.ndarray) -> np.ndarray:
        return drift(flat.reshape(points, dim)).ravel()[free]

    size = points * dim
    base = response(np.zeros(size))
    columns = []
    for i in range(size):
        unit = np.zeros(size)
        unit[i] = 1.0
        columns.append(response(unit) - base)
    full = np.array(columns).T
    stiffness = -full[:, free]
    coupling = full[:, pinned]

    in_mean = np.tile(spec.sampler.expected(), points)[pinned]
    in_var = np.tile(spec.sampler.variance(), points)[pinned]
    rate = (noise_scales(model, spec, points, path.eps, grid.dtau) ** 2 / grid.dtau).ravel()[free]

    try:
        solve = linalg.lu_factor(stiffness)
    except (linalg.LinAlgError, ValueError) as e:
        raise UnsupportedModelError(f"lattice drift of {model.name} is singular: {e}")
    gain = linalg.lu_solve(solve, coupling)
    noise_cov = linalg.solve_continuous_lyapunov(stiffness, np.diag(rate))
    cov = noise_cov + gain @ np.diag(in_var) @ gain.T

    mean = np.empty(size)
    var = np.empty(size)
    mean[pinned], var[pinned] = in_mean, in_var
    mean[free] = linalg.lu_solve(solve, coupling @ in_mean + base)
    var[free] = np.diag(cov)

    shape = (1, points, dim)
    zeros = np.zeros(shape)
    return EnsembleSummary(
        taus=np.array([np.inf]), times=path.times(), components=list(model.labels),
        mean=mean.reshape(shape), variance=var.reshape(shape), stderr=zeros, stderr_mean=zeros.copy(),
        n_traj=0, label=label,
    )


def preset_references(preset: str, model: QuadratureModel, sampler: InputSampler, grid: PathGrid,
                      params: Optional[dict] = None) -> List[ReferenceCurve]:
    """Closed-form reference curves for a preset, empty when none is known"""
    params = params or {}
    var = sampler.variance()
    if preset == "wiener":
        return [wiener_oracle(float(var[0]), model.d, grid.t0, model.labels[0])]
    if preset == "squeeze":
        k = float(params.get("strength", 1.0))
        x, y = int(model.x_idx[0]), int(model.y_idx[0])
        return [
            ou_oracle(k, model.d, float(var[x]), "forward", grid.t0, model.labels[x]),
            ou_oracle(k, model.d, float(var[y]), "backward", grid.tf, model.labels[y]),
        ]
    if preset == "freefield":
        return propagated_oracle(model, sampler, grid.t0)
    return []


__all__ = [
    "ou_oracle", "wiener_oracle", "heisenberg_oracle", "free_field_oracle", "propagated_oracle",
    "is_decoupled", "classical_path", "direct_tssde_oracle", "lattice_oracle", "preset_references",
]
