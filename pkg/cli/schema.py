"""
Scenario configuration documents.

Every physical quantity is required; only output toggles have defaults.
Units: lengths and times in the natural units of the run (hbar and masses
given explicitly), energies in hbar / time.
"""
from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from lattice.errors import ConfigurationError
from lattice.grid import MAX_DIMENSIONS, GridSpec


logger = logging.getLogger(__name__)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class AxisConfig(_Strict):
    min: float = Field(description="lower edge of the periodic box [length]")
    max: float = Field(description="upper edge of the periodic box [length]")
    points: int = Field(gt=0, description="number of nodes, a power of two")

    @field_validator("points")
    @classmethod
    def _power_of_two(cls, value: int) -> int:
        if value & (value - 1):
            raise ValueError(f"grid points must be a power of two, got {value}")
        return value


class GridConfig(_Strict):
    axes: List[AxisConfig] = Field(min_length=1, max_length=MAX_DIMENSIONS)


class PhysicsConfig(_Strict):
    hbar: float = Field(gt=0, description="reduced Planck constant [energy * time]")
    masses: List[float] = Field(min_length=1, description="one mass per configuration axis [mass]")

    @field_validator("masses")
    @classmethod
    def _positive(cls, value: List[float]) -> List[float]:
        if any(m <= 0 for m in value):
            raise ValueError("masses must be positive")
        return value


class TimeConfig(_Strict):
    dt: float = Field(gt=0, description="time step [time]")
    t_final: float = Field(gt=0, description="end of the run [time]")
    snapshot_stride: int = Field(ge=1, description="steps between recorded snapshots")


class EnsembleConfig(_Strict):
    n_runs: int = Field(ge=1, description="trajectories, runs or Monte Carlo samples")


class ScenarioSection(_Strict):
    name: str
    params: Dict[str, Any] = Field(default_factory=dict)


class OutputConfig(_Strict):
    directory: Optional[str] = None
    trajectories: bool = True
    density_snapshots: bool = False
    summary: bool = True


class ScenarioConfig(_Strict):
    scenario: ScenarioSection
    grid: GridConfig
    physics: PhysicsConfig
    time: TimeConfig
    ensemble: EnsembleConfig
    seed: int = Field(ge=0)
    output: OutputConfig = Field(default_factory=OutputConfig)

    def grid_spec(self) -> GridSpec:
        return GridSpec.from_bounds((a.min, a.max, a.points) for a in self.grid.axes)


def _field_of(error: ValidationError) -> str:
    first = error.errors()[0]
    return ".".join(str(part) for part in first["loc"]) or "config"


def _check_consistency(config: ScenarioConfig) -> None:
    if len(config.physics.masses) != len(config.grid.axes):
        raise ConfigurationError(
            f"{len(config.physics.masses)} masses for {len(config.grid.axes)} axes", field="physics.masses"
        )
    for index, axis in enumerate(config.grid.axes):
        if axis.max <= axis.min:
            raise ConfigurationError("axis max must exceed min", field=f"grid.axes.{index}.max")
    steps = config.time.t_final / config.time.dt
    if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
        raise ConfigurationError("t_final must be a whole number of steps", field="time.dt")
    windows = config.scenario.params.get("windows")
    if windows is not None:
        for index, window in enumerate(windows):
            start, end = (float(x) for x in window)
            if not math.isfinite(end) or end > config.time.t_final:
                raise ConfigurationError(
                    f"pulse window {index} ends at {end}, after t_final = {config.time.t_final}",
                    field=f"scenario.params.windows.{index}",
                )
            if start < 0 or end <= start:
                raise ConfigurationError(
                    f"pulse window {index} [{start}, {end}] is empty or starts before 0",
                    field=f"scenario.params.windows.{index}",
                )


def parse_config(document: Union[Dict[str, Any], None]) -> ScenarioConfig:
    """Validate a loaded document; raises ConfigurationError naming the field."""
    if not isinstance(document, dict):
        raise ConfigurationError("config document must be a mapping", field="config")
    try:
        config = ScenarioConfig.model_validate(document)
    except ValidationError as exc:
        field = _field_of(exc)
        message = exc.errors()[0]["msg"]
        logger.error("Config error at %s: %s", field, message)
        raise ConfigurationError(f"{field}: {message}", field=field) from exc
    _check_consistency(config)
    return config


def load_config(path: Union[str, Path]) -> ScenarioConfig:
    path = Path(path)
    try:
        document = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}", field="config") from exc
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path} is not valid YAML: {exc}", field="config") from exc
    return parse_config(document)


def config_schema() -> Dict[str, Any]:
    return ScenarioConfig.model_json_schema()


__all__ = [
    "ScenarioConfig",
    "AxisConfig",
    "GridConfig",
    "PhysicsConfig",
    "TimeConfig",
    "EnsembleConfig",
    "OutputConfig",
    "parse_config",
    "load_config",
    "config_schema",
]
