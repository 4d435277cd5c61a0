"""
Q_Bridge - Scenario Configuration
Pydantic schema for runs, merged from presets, scenario files and flags
"""

import json
from functools import partial
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import numpy as np
import yaml
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from config import get_preset
from src.bridge.boundaries import BoundarySpec, InputSampler, TableInputs, boundary_sampler
from src.domain.errors import ConfigError
from src.domain.models import BridgeGrid, PathGrid
from src.phase_model.presets import build_model
from src.phase_model.quadrature import QuadratureModel
from src.sampling.ensemble import EnsembleConfig

Preset = Literal["wiener", "squeeze", "freefield", "custom"]


class InputsConfig(BaseModel):
    """Input-event distribution: Gaussians per block, or a CSV table of joint rows"""
    model_config = ConfigDict(extra="forbid")

    x0_mean: List[float] = Field(default_factory=list)
    x0_var: List[float] = Field(default_factory=list)
    yf_mean: List[float] = Field(default_factory=list)
    yf_var: List[float] = Field(default_factory=list)
    table: Optional[str] = None

    @model_validator(mode="after")
    def _check(self):
        if len(self.x0_mean) != len(self.x0_var) or len(self.yf_mean) != len(self.yf_var):
            raise ValueError("each mean list needs a variance list of the same length")
        if any(v < 0 for v in self.x0_var + self.yf_var):
            raise ValueError("input variances must be non-negative")
        return self


class ScenarioConfig(BaseModel):
    """One ensemble run; unknown keys are rejected"""
    model_config = ConfigDict(extra="forbid")

    preset: Preset
    tensor: Optional[str] = None
    label: Optional[str] = None
    t0: float = 0.0
    tf: float = 1.0
    dt: float = Field(0.03, gt=0)
    dtau: float = Field(0.0002, gt=0)
    tau_max: float = Field(5.0, ge=0)
    checkpoints: Union[int, List[float]] = 11
    trajectories: int = Field(1000, ge=1)
    seed: int = 20240601
    iterations: int = Field(4, ge=1)
    batch_size: int = Field(256, ge=1)
    workers: int = Field(1, ge=1)
    params: Dict[str, Any] = Field(default_factory=dict)
    inputs: InputsConfig = Field(default_factory=InputsConfig)
    output_dir: str = "./output"
    emit_snapshots: bool = False
    line_time: float = 0.5

    @model_validator(mode="after")
    def _check(self):
        if self.tf <= self.t0:
            raise ValueError(f"tf must exceed t0, got t0={self.t0}, tf={self.tf}")
        if round((self.tf - self.t0) / self.dt) < 2:
            raise ValueError("the lattice needs at least 2 steps; reduce dt")
        if self.preset == "custom" and not self.tensor:
            raise ValueError("custom preset needs a coupling tensor file")
        if isinstance(self.checkpoints, int) and self.checkpoints < 1:
            raise ValueError("need at least one checkpoint")
        return self

    @property
    def name(self) -> str:
        return self.label or self.preset

    def model_params(self) -> Dict[str, Any]:
        params = dict(self.params)
        if self.preset == "custom":
            params["tensor"] = self.tensor
        return params

    def build_model(self) -> QuadratureModel:
        return build_model(self.preset, self.model_params())

    def model_factory(self):
        return partial(build_model, self.preset, self.model_params())

    def build_grid(self) -> BridgeGrid:
        path = PathGrid.from_step(self.t0, self.tf, self.dt)
        if isinstance(self.checkpoints, int):
            return BridgeGrid.evenly_spaced(path, self.dtau, self.tau_max, self.checkpoints)
        return BridgeGrid(path=path, dtau=self.dtau, tau_max=self.tau_max,
                          checkpoints=tuple(sorted(float(t) for t in self.checkpoints)))

    def build_sampler(self, model: QuadratureModel) -> InputSampler:
        if self.inputs.table:
            rows = np.loadtxt(self.inputs.table, delimiter=",", ndmin=2)
            logger.info(f"Loaded {rows.shape[0]} joint input rows from {self.inputs.table}")
            return TableInputs(rows=rows)
        forward = model.n_x + len(model.det_idx)
        x0_mean = self.inputs.x0_mean or [0.0] * forward
        x0_var = self.inputs.x0_var or [0.5] * forward
        yf_mean = self.inputs.yf_mean or [0.0] * model.n_y
        yf_var = self.inputs.yf_var or [0.5] * model.n_y
        if len(x0_mean) != forward or len(yf_mean) != model.n_y:
            raise ConfigError(
                f"inputs give {len(x0_mean)} forward and {len(yf_mean)} backward values; "
                f"model {model.name} has {forward} and {model.n_y}"
            )
        return boundary_sampler(model, x0_mean, x0_var, yf_mean, yf_var)

    def ensemble_config(self, model: QuadratureModel, keep_samples: bool = False) -> EnsembleConfig:
        sampler = self.build_sampler(model)
        return EnsembleConfig(
            model=model, spec=BoundarySpec.mixed(model, sampler), grid=self.build_grid(),
            n_traj=self.trajectories, seed=self.seed, iterations=self.iterations,
            batch_size=self.batch_size, workers=self.workers, label=self.name,
            keep_samples=keep_samples or self.emit_snapshots, model_factory=self.model_factory(),
        )

    def echo(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")


def _deep_merge(base: Dict[str, Any], extra: Dict[str, Any]) -> Dict[str, Any]:
    out = dict(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def read_scenario_file(path: Union[str, Path]) -> Dict[str, Any]:
    """Scenario document as a dict; JSON or YAML"""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"scenario file not found: {path}")
    try:
        text = path.read_text()
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot parse scenario file {path}: {e}")
    if not isinstance(data, dict):
        raise ConfigError(f"scenario file {path} must hold a mapping")
    if isinstance(data.get("config"), dict) and "version" in data:
        # a run sidecar: replay its config echo
        return data["config"]
    return data


def load_scenario(app_config: Dict[str, Any], preset: Optional[str] = None,
                  config_file: Optional[Union[str, Path]] = None,
                  overrides: Optional[Dict[str, Any]] = None) -> ScenarioConfig:
    """
    Merge preset defaults, a scenario file and flag overrides into a validated config.

    Raises:
        ConfigError: unknown preset, unknown keys or invalid values
    """
    from_file = read_scenario_file(config_file) if config_file else {}
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    name = overrides.get("preset") or from_file.get("preset") or preset
    if not name:
        raise ConfigError("no preset given; pass --preset or set 'preset' in the scenario file")

    run = app_config.get("run", {})
    merged: Dict[str, Any] = {
        "seed": run.get("seed", 20240601),
        "checkpoints": run.get("checkpoints", 11),
        "iterations": run.get("iterations", 4),
        "batch_size": run.get("batch_size", 256),
        "workers": run.get("workers", 1),
        "emit_snapshots": run.get("emit_snapshots", False),
        "line_time": run.get("line_time", 0.5),
        "output_dir": app_config.get("app", {}).get("output_dir", "./output"),
    }
    if name != "custom":
        try:
            merged = _deep_merge(merged, get_preset(name, app_config))
        except KeyError as e:
            raise ConfigError(e.args[0])
    merged = _deep_merge(merged, from_file)
    merged = _deep_merge(merged, overrides)
    merged["preset"] = name

    try:
        scenario = ScenarioConfig.model_validate(merged)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in e.errors()
        )
        raise ConfigError(f"invalid scenario: {problems}")
    logger.debug(f"Scenario {scenario.name}: {scenario.echo()}")
    return scenario


__all__ = ["InputsConfig", "ScenarioConfig", "read_scenario_file", "load_scenario"]
