"""Typed configs per command.

This module provides user-facing configuration objects that map to core jobs.
Uses pydantic for validation; YAML errors are reported at the offending line.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Any, Optional, TypeVar, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from signalsmith.core.calibration import DEFAULT_CC0_GRID, DEFAULT_CC1_GRID, DEFAULT_TARGET_H
from signalsmith.core.contracts import FLEET_ORDER, Approach, Fleet, Movement
from signalsmith.core.driver_model import DriverProfile
from signalsmith.core.errors import ConfigurationError
from signalsmith.core.io import YamlDocument, load_yaml
from signalsmith.core.scenario import LaneSpec, Scenario, default_testbed
from signalsmith.core.signal_advisory import Phase, SignalPlan

ModelT = TypeVar("ModelT", bound=BaseModel)
SHARE_TOL = 1e-9


def _raise_located(error: ValidationError, document: Optional[YamlDocument]) -> None:
    first = error.errors()[0]
    location = tuple(first.get("loc", ()))
    field = ".".join(str(part) for part in location) or None
    line = document.line_of(location) if document is not None else None
    message = first.get("msg", str(error))
    raise ConfigurationError(f"{field}: {message}" if field else message, line=line, field=field) from error


def _relocate(error: ConfigurationError, document: Optional[YamlDocument]) -> ConfigurationError:
    """Attach the YAML line of ``error.field`` when the core raised without one."""
    if error.line is not None or document is None or not error.field:
        return error
    line = document.line_of(tuple(error.field.split(".")))
    message = str(error)
    return ConfigurationError(message, line=line, field=error.field)


def parse_model(model: type[ModelT], document: YamlDocument) -> ModelT:
    """Validate a YAML document against a pydantic model, keeping line numbers."""
    if not isinstance(document.data, dict):
        raise ConfigurationError(f"{document.path or 'config'} must contain a mapping", line=1)
    try:
        return model.model_validate(document.data)
    except ValidationError as e:
        _raise_located(e, document)
        raise


def _resolve(path: Optional[str], base: Optional[Path]) -> Optional[Path]:
    if path is None:
        return None
    candidate = Path(path)
    if candidate.is_absolute() or base is None:
        return candidate
    return base / candidate


def _rebase(config: ModelT, base: Path, fields: tuple[str, ...]) -> ModelT:
    updates = {name: str(_resolve(getattr(config, name), base)) for name in fields if getattr(config, name) is not None}
    return config.model_copy(update=updates)


def load_profile_overrides(path: Union[str, Path], profiles: dict[Fleet, DriverProfile]) -> dict[Fleet, DriverProfile]:
    """Apply a ``FLEET -> {field: value}`` override file to ``profiles``."""
    document = load_yaml(path)
    if not isinstance(document.data, dict):
        raise ConfigurationError(f"{path} must map fleet names to field overrides", line=1)
    result = dict(profiles)
    for fleet_name, fields in document.data.items():
        line = document.line_of((fleet_name,))
        try:
            fleet = Fleet.parse(fleet_name)
        except ValueError as e:
            valid = ", ".join(f.value for f in FLEET_ORDER)
            raise ConfigurationError(
                f"Unknown fleet '{fleet_name}' (expected one of {valid})", line=line, field=str(fleet_name)
            ) from e
        if not isinstance(fields, dict):
            raise ConfigurationError(f"{fleet_name}: overrides must be a mapping", line=line, field=str(fleet_name))
        try:
            result[fleet] = result[fleet].with_overrides(**fields)
        except (ConfigurationError, TypeError, ValueError) as e:
            raise ConfigurationError(f"{fleet_name}: {e}", line=line, field=str(fleet_name)) from e
    return result


class PhaseConfig(BaseModel):
    """One phase: the movement groups it serves and its intervals in seconds."""

    model_config = ConfigDict(extra="forbid")

    groups: list[str] = Field(..., min_length=1)
    green: float = Field(..., gt=0)
    amber: float = Field(default=3.0, ge=0)
    all_red: float = Field(default=1.0, ge=0)
    green_start: Optional[float] = Field(default=None, ge=0, description="Defaults to the end of the previous phase")


class PlanConfig(BaseModel):
    """Fixed-time plan; phases are laid end to end unless green_start is given."""

    model_config = ConfigDict(extra="forbid")

    cycle_length: Optional[float] = Field(default=None, gt=0)
    offset: float = 0.0
    phases: list[PhaseConfig] = Field(..., min_length=1)

    def to_core(self) -> SignalPlan:
        built = []
        start = 0.0
        for phase in self.phases:
            begin = phase.green_start if phase.green_start is not None else start
            built.append(Phase(tuple(phase.groups), begin, begin + phase.green, phase.amber, phase.all_red))
            start = built[-1].end
        cycle_length = self.cycle_length if self.cycle_length is not None else max(p.end for p in built)
        return SignalPlan(cycle_length=cycle_length, phases=tuple(built), offset=self.offset)


class LaneConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lane_group: str
    movements: list[Movement] = Field(..., min_length=1)


class ScenarioConfig(BaseModel):
    """Scenario file. Omitted sections fall back to the default testbed."""

    model_config = ConfigDict(extra="forbid")

    scenario_id: str = "base"
    shares: Optional[dict[str, float]] = None
    demands: Optional[dict[Approach, float]] = None
    turning: Optional[dict[Approach, dict[Movement, float]]] = None
    geometry: Optional[dict[Approach, list[LaneConfig]]] = None
    plan: Optional[PlanConfig] = None
    duration: Optional[float] = Field(default=None, gt=0)
    warmup: Optional[float] = Field(default=None, ge=0)
    seed: Optional[int] = None
    dt: Optional[float] = Field(default=None, gt=0)
    link_length: Optional[float] = Field(default=None, gt=0)
    downstream_length: Optional[float] = Field(default=None, ge=0)
    v_base: Optional[float] = Field(default=None, gt=0)
    profiles: Optional[str] = Field(default=None, description="Path to a profile override file")

    @field_validator("shares")
    @classmethod
    def validate_shares(cls, v: Optional[dict[str, float]]) -> Optional[dict[str, float]]:
        """Shares name known fleets, are nonnegative and sum to 1."""
        if v is None:
            return v
        unknown = {k for k in v if k.upper() not in {f.value for f in FLEET_ORDER}}
        if unknown:
            raise ValueError(f"unknown fleet(s): {', '.join(sorted(unknown))}")
        if any(share < 0 for share in v.values()):
            raise ValueError("shares must be nonnegative")
        total = sum(v.values())
        if abs(total - 1.0) > SHARE_TOL:
            raise ValueError(f"shares must sum to 1 (got {total:.6g})")
        return {k.upper(): share for k, share in v.items()}

    @field_validator("demands")
    @classmethod
    def validate_demands(cls, v: Optional[dict[Approach, float]]) -> Optional[dict[Approach, float]]:
        if v is not None and any(rate < 0 for rate in v.values()):
            raise ValueError("demands must be nonnegative")
        return v

    @model_validator(mode="after")
    def validate_horizon(self) -> ScenarioConfig:
        if self.duration is not None and self.warmup is not None and self.warmup >= self.duration:
            raise ValueError("warmup must be shorter than duration")
        return self

    def to_core_config(self, base_dir: Optional[Path] = None) -> Scenario:
        """Convert to a core Scenario, starting from the default testbed."""
        base = default_testbed()
        overrides: dict[str, Any] = {"scenario_id": self.scenario_id}
        if self.shares is not None:
            overrides["shares"] = {Fleet(k): share for k, share in self.shares.items()}
        if self.demands is not None:
            overrides["demands"] = self.demands
        if self.turning is not None:
            overrides["turning"] = self.turning
        if self.geometry is not None:
            overrides["geometry"] = {
                approach: tuple(LaneSpec(lane.lane_group, tuple(lane.movements)) for lane in lanes)
                for approach, lanes in self.geometry.items()
            }
        if self.plan is not None:
            overrides["plan"] = self.plan.to_core()
        for name in ("duration", "warmup", "seed", "dt", "link_length", "downstream_length", "v_base"):
            value = getattr(self, name)
            if value is not None:
                overrides[name] = value
        if self.profiles is not None:
            overrides["profiles"] = load_profile_overrides(_resolve(self.profiles, base_dir), dict(base.profiles))
        return dataclasses.replace(base, **overrides)

    @classmethod
    def from_yaml(cls, path: Union[str, Path]) -> ScenarioConfig:
        return parse_model(cls, load_yaml(path))


def load_scenario(path: Union[str, Path]) -> Scenario:
    """Read, validate and build a Scenario from a YAML file.

    Raises:
        ConfigurationError: with the line of the offending key where known
    """
    document = load_yaml(path)
    config = parse_model(ScenarioConfig, document)
    try:
        return config.to_core_config(base_dir=Path(path).parent)
    except ConfigurationError as e:
        raise _relocate(e, document) from e


class RunConfig(BaseModel):
    """Single replication."""

    scenario: str = Field(..., description="Path to scenario YAML")
    out: str = Field(default="runs/run", description="Output directory")
    seed: Optional[int] = None
    profiles: Optional[str] = Field(default=None, description="Profile override file")
    trajectories: bool = False

    def to_core_config(self):
        from signalsmith.core.pipelines import RunJob

        scenario = load_scenario(self.scenario)
        if self.profiles is not None:
            scenario = dataclasses.replace(scenario, profiles=load_profile_overrides(self.profiles, dict(scenario.profiles)))
        if self.seed is not None:
            scenario = scenario.with_seed(self.seed)
        return RunJob(scenario=scenario, output_dir=self.out, record_trajectories=self.trajectories)


class SweepConfig(BaseModel):
    """Sweep job: every share combination for ``reps`` consecutive seeds."""

    model_config = ConfigDict(extra="forbid")

    scenario: str = Field(..., description="Path to the base scenario YAML")
    seed_base: int = 1
    reps: int = Field(default=10, ge=1)
    step: float = Field(default=0.2, gt=0, le=1)
    parallelism: int = Field(default=1, ge=1)
    out: str = "runs/sweep"
    profiles: Optional[str] = None

    @field_validator("step")
    @classmethod
    def validate_step(cls, v: float) -> float:
        levels = round(1.0 / v)
        if abs(levels * v - 1.0) > 1e-9:
            raise ValueError(f"step must divide 1 evenly, got {v}")
        return v

    def to_core_config(self):
        from signalsmith.core.pipelines import SweepJob

        scenario = load_scenario(self.scenario)
        if self.profiles is not None:
            profiles = load_profile_overrides(self.profiles, dict(scenario.profiles))
            scenario = dataclasses.replace(scenario, profiles=profiles)
        return SweepJob.from_base(
            scenario,
            output_dir=self.out,
            seed_base=self.seed_base,
            reps=self.reps,
            step=self.step,
            parallelism=self.parallelism,
        )

    @classmethod
    def from_yaml(cls, path: Union[str, Path]) -> SweepConfig:
        """Load a sweep job; relative paths are taken from the job file's directory."""
        return _rebase(parse_model(cls, load_yaml(path)), Path(path).parent, ("scenario", "profiles"))


class CalibrationConfig(BaseModel):
    """Calibration job for the human-driver cc0/cc1 pair."""

    model_config = ConfigDict(extra="forbid")

    scenario: str = Field(..., description="Path to the 100% HV base scenario YAML")
    target_h: float = Field(default=DEFAULT_TARGET_H, gt=0)
    cc0_grid: list[float] = Field(default_factory=lambda: list(DEFAULT_CC0_GRID), min_length=1)
    cc1_grid: list[float] = Field(default_factory=lambda: list(DEFAULT_CC1_GRID), min_length=1)
    replications: int = Field(default=3, ge=1)
    seed_base: int = 1
    parallelism: int = Field(default=1, ge=1)
    duration: Optional[float] = Field(default=None, gt=0, description="Shorter measured horizon")
    warmup: Optional[float] = Field(default=None, ge=0)
    out: str = "runs/calibration"

    @field_validator("cc0_grid", "cc1_grid")
    @classmethod
    def validate_grid(cls, v: list[float]) -> list[float]:
        if any(value <= 0 for value in v):
            raise ValueError("grid values must be > 0")
        return v

    def to_core_config(self):
        from signalsmith.core.pipelines import CalibrationJob

        scenario = load_scenario(self.scenario)
        horizon = {k: v for k, v in (("duration", self.duration), ("warmup", self.warmup)) if v is not None}
        if horizon:
            scenario = dataclasses.replace(scenario, **horizon)
        return CalibrationJob(
            scenario_base=scenario,
            output_dir=self.out,
            target_h=self.target_h,
            cc0_grid=tuple(self.cc0_grid),
            cc1_grid=tuple(self.cc1_grid),
            replications=self.replications,
            seed_base=self.seed_base,
            parallelism=self.parallelism,
        )

    @classmethod
    def from_yaml(cls, path: Union[str, Path]) -> CalibrationConfig:
        return _rebase(parse_model(cls, load_yaml(path)), Path(path).parent, ("scenario",))


class AnalysisConfig(BaseModel):
    """Regression and capacity analysis of a merged results CSV."""

    model_config = ConfigDict(extra="forbid")

    results: str = Field(..., description="Path to the sweep's results.csv")
    out: str = "runs/analysis"
    step: float = Field(default=0.2, gt=0, le=1)
    hv_levels: list[float] = Field(default_factory=lambda: [0.0, 0.2, 0.4, 0.6], min_length=1)
    scenario: Optional[str] = Field(default=None, description="Scenario whose timing feeds the capacity table")

    @field_validator("results")
    @classmethod
    def validate_results_path(cls, v: str) -> str:
        """Validate that the results file exists."""
        if not Path(v).exists():
            raise ValueError(f"Results file does not exist: {v}")
        return v

    def to_core_config(self):
        from signalsmith.core.pipelines import AnalysisJob

        scenario = load_scenario(self.scenario) if self.scenario else None
        return AnalysisJob(
            results_path=self.results,
            output_dir=self.out,
            step=self.step,
            hv_levels=tuple(self.hv_levels),
            scenario=scenario,
        )
