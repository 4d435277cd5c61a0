"""
Q_Bridge - Model Presets
Wiener, squeezing and free-field quadrature models
"""

from pathlib import Path
from typing import Union

from loguru import logger

from src.domain.errors import ConfigError
from src.domain.models import VariableKind
from src.phase_model.coupling import CouplingTensor, free_field_tensor, squeezing_tensor
from src.phase_model.liouvillian import expand_liouvillian
from src.phase_model.quadrature import QuadratureModel, linear_model, to_quadrature_model


def wiener_model(d: float = 1.0) -> QuadratureModel:
    """Single forward variable with zero drift"""
    return linear_model("wiener", [[0.0]], d=d, kinds=(VariableKind.X,), labels=("x",))


def squeeze_model(strength: float = 1.0) -> QuadratureModel:
    """Single-mode squeezing built through the coupling-tensor pipeline"""
    return to_quadrature_model(expand_liouvillian(squeezing_tensor(strength)), name="squeeze")


def freefield_model(omega: float = 1.0) -> QuadratureModel:
    """Single-mode linear evolution; no diffusion, every variable deterministic"""
    return to_quadrature_model(expand_liouvillian(free_field_tensor([[omega]])), name="freefield")


def tensor_model(path: Union[str, Path], name: str = "custom") -> QuadratureModel:
    """Quadrature model of a coupling tensor JSON document"""
    tensor = CouplingTensor.from_json(path)
    model = to_quadrature_model(expand_liouvillian(tensor), name=name)
    logger.info(f"Custom model from {path}: {model.dim} variables, d={model.d:.6g}")
    return model


def build_model(preset: str, params: dict = None) -> QuadratureModel:
    """Model for a preset name and its parameters"""
    params = params or {}
    if preset == "wiener":
        return wiener_model(d=float(params.get("d", 1.0)))
    if preset == "squeeze":
        return squeeze_model(strength=float(params.get("strength", 1.0)))
    if preset == "freefield":
        return freefield_model(omega=float(params.get("omega", 1.0)))
    if preset == "custom":
        return tensor_model(params["tensor"])
    raise ConfigError(f"unknown preset {preset!r}")
