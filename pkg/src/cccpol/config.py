"""Scenario configuration: YAML on disk, validated into pydantic models.

Validation errors carry dotted field paths (``plant.arm_b.gammas``) so the CLI
can report them in machine-readable form.
"""

from __future__ import annotations

import hashlib
import json
from importlib import resources
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import controller as ctl
from .fiber import OpticalPath, StretcherActuator
from .plant import BeamsplitterSpec, DetectorModel, PlantConfig, TriangleWave

PACKAGED_CONFIGS = ("drift", "reset", "sweep")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ActuatorConfig(_Strict):
    v_min: float
    v_max: float
    v_center: float = 400.0
    v_per_circle: float = Field(500.0, gt=0)
    # a voltage, or "auto" to start at the crosspoint nearest ``auto_guess``
    initial: Union[float, Literal["auto"]] = "auto"

    @model_validator(mode="after")
    def _range(self):
        if not self.v_min < self.v_max:
            raise ValueError("v_min must be below v_max")
        if self.initial != "auto" and not self.v_min <= self.initial <= self.v_max:
            raise ValueError(f"initial voltage {self.initial} outside [{self.v_min}, {self.v_max}]")
        return self

    def build(self, name: str) -> StretcherActuator:
        v0 = self.v_center if self.initial == "auto" else float(self.initial)
        return StretcherActuator(self.v_min, self.v_max, self.v_center, self.v_per_circle,
                                 float(np.clip(v0, self.v_min, self.v_max)), name)


class PathConfig(_Strict):
    """One fiber chain. ``joints_deg[k]`` precedes segment ``k``."""

    joints_deg: list[float] = Field(min_length=1)
    gammas: list[float] = Field(min_length=1)
    # deterministic drift in rad/s per segment (empty means none)
    drift_rates: list[float] = Field(default_factory=list)
    output_joint_deg: Optional[float] = None
    actuator_segment: Optional[int] = None
    actuator: Optional[ActuatorConfig] = None

    @field_validator("joints_deg")
    @classmethod
    def _joint_range(cls, v):
        for k, t in enumerate(v):
            if abs(t) > 90:
                raise ValueError(f"joint {k} angle {t} deg exceeds 90 deg")
        return v

    @model_validator(mode="after")
    def _shape(self):
        n = len(self.joints_deg)
        if len(self.gammas) != n:
            raise ValueError(f"gammas has {len(self.gammas)} entries, joints_deg has {n}")
        if self.drift_rates and len(self.drift_rates) != n:
            raise ValueError(f"drift_rates needs {n} entries or none")
        if (self.actuator is None) != (self.actuator_segment is None):
            raise ValueError("actuator and actuator_segment go together")
        if self.actuator_segment is not None and not 0 <= self.actuator_segment < n:
            raise ValueError(f"actuator_segment must be in [0, {n - 1}]")
        return self

    def build(self, name: str = "stretcher", lead_rad: float = 0.0,
              trail_rad: Optional[float] = None) -> OpticalPath:
        """Path with ``lead_rad`` added to the first joint and ``trail_rad``
        (if given) added to the output joint."""
        thetas = np.deg2rad(self.joints_deg)
        thetas[0] += lead_rad
        out = None if self.output_joint_deg is None else np.deg2rad(self.output_joint_deg)
        if trail_rad is not None:
            out = trail_rad + (0.0 if out is None else out)
        acts = {}
        if self.actuator is not None:
            acts[self.actuator_segment] = self.actuator.build(name)
        path = OpticalPath.from_angles(thetas, self.gammas, acts, out)
        for seg, rate in zip(path.segments, self.drift_rates):
            seg.drift_rate = float(rate)
        return path


class BeamsplitterConfig(_Strict):
    coupling_ratio: float = Field(0.5, gt=0, lt=1)
    per_db: float = Field(25.0, gt=0)

    def build(self) -> BeamsplitterSpec:
        return BeamsplitterSpec(self.coupling_ratio, self.per_db)


class DetectorConfig(_Strict):
    v_max: float = Field(0.6, gt=0)
    dark_level: float = 2e-3
    noise_rms: float = Field(0.18e-3, ge=0)
    adc_bits: Optional[int] = Field(14, ge=2, le=32)
    adc_range: float = Field(1.0, gt=0)
    dark_drift_amp: float = Field(0.5e-3, ge=0)
    dark_drift_period: float = Field(3600.0, gt=0)
    dark_walk_sigma: float = Field(0.5e-3 / 60.0, ge=0)

    def build(self) -> DetectorModel:
        return DetectorModel(**self.model_dump())


class TriangleConfig(_Strict):
    frequency: float = Field(100.0, gt=0)
    v_lo: float = 20.0
    v_hi: float = 50.0
    phase_per_volt: float = Field(2 * np.pi * 5 / 70, gt=0)

    @model_validator(mode="after")
    def _order(self):
        if not self.v_lo < self.v_hi:
            raise ValueError("v_lo must be below v_hi")
        return self

    def build(self) -> TriangleWave:
        return TriangleWave(self.frequency, self.v_lo, self.v_hi, self.phase_per_volt,
                            monitor_offset=0.5 * (self.v_lo + self.v_hi))


def _arm_a_default():
    return PathConfig(joints_deg=[0.0, 4.0, 3.0], gammas=[0.3, 1.0, 2.0], actuator_segment=1,
                      actuator=ActuatorConfig(v_min=34.0, v_max=772.0))


def _arm_b_default():
    return PathConfig(joints_deg=[0.0, 4.0, 1.5], gammas=[1.4, 0.2, 0.7], actuator_segment=1,
                      actuator=ActuatorConfig(v_min=110.0, v_max=702.0))


class PlantSection(_Strict):
    arm_a: PathConfig = Field(default_factory=_arm_a_default)
    arm_b: PathConfig = Field(default_factory=_arm_b_default)
    bs1: BeamsplitterConfig = Field(default_factory=BeamsplitterConfig)
    bs2: BeamsplitterConfig = Field(default_factory=BeamsplitterConfig)
    bs3: BeamsplitterConfig = Field(default_factory=lambda: BeamsplitterConfig(coupling_ratio=0.995))
    bs4: BeamsplitterConfig = Field(default_factory=lambda: BeamsplitterConfig(coupling_ratio=0.005))
    input_power: float = Field(1.2e-3, gt=0)
    detector: DetectorConfig = Field(default_factory=DetectorConfig)
    triangle: TriangleConfig = Field(default_factory=TriangleConfig)
    drift_sigma: float = Field(0.0, ge=0, le=1.0)
    phase_sigma: float = Field(0.3, ge=0)
    shutter_stuck_open: bool = False
    # starting-point hint for initial: auto, in stretcher volts (hv1, hv2)
    auto_guess: tuple[float, float] = (400.0, 400.0)

    @model_validator(mode="after")
    def _actuated(self):
        for name in ("arm_a", "arm_b"):
            if getattr(self, name).actuator is None:
                raise ValueError(f"{name} needs a stretcher actuator")
        return self

    def build(self) -> PlantConfig:
        bs1, bs2 = self.bs1.build(), self.bs2.build()
        lead, trail = bs1.port_misalignment, bs2.port_misalignment
        return PlantConfig(
            arm_a=self.arm_a.build("fiber_stretcher_1", lead, trail),
            arm_b=self.arm_b.build("fiber_stretcher_2", lead, trail),
            bs1=bs1, bs2=bs2, bs3=self.bs3.build(), bs4=self.bs4.build(),
            input_power=self.input_power, detector=self.detector.build(),
            triangle=self.triangle.build(), drift_sigma=self.drift_sigma,
            phase_sigma=self.phase_sigma, shutter_stuck_open=self.shutter_stuck_open)


class DacMapConfig(_Strict):
    gain: float = Field(gt=0)
    offset: float


class ControllerSection(_Strict):
    step_policy: list[tuple[float, float]] = Field(
        default_factory=lambda: [tuple(p) for p in ctl.STEP_POLICY])
    dac_to_hv: dict[int, DacMapConfig] = Field(default_factory=lambda: {
        k: DacMapConfig(gain=m.gain, offset=m.offset) for k, m in ctl.DAC_MAPS.items()})
    reset_target: dict[int, float] = Field(default_factory=lambda: {1: 400.0, 2: 400.0})
    deadband: float = Field(0.0, ge=0)
    initial_direction: dict[int, Literal[-1, 1]] = Field(default_factory=lambda: {1: 1, 2: 1})

    @field_validator("step_policy")
    @classmethod
    def _policy(cls, v):
        if not v:
            raise ValueError("step policy is empty")
        th = [p[0] for p in v]
        if any(b <= a for a, b in zip(th, th[1:])):
            raise ValueError("step policy thresholds must be strictly increasing")
        if any(p[1] <= 0 for p in v):
            raise ValueError("step widths must be positive")
        return v

    @field_validator("dac_to_hv", "reset_target", "initial_direction")
    @classmethod
    def _keys(cls, v):
        if set(v) != {1, 2}:
            raise ValueError("needs entries for actuators 1 and 2")
        return v

    def build_state(self, hv: dict, v_limits: dict) -> ctl.ControllerState:
        maps = {k: ctl.DacMap(m.gain, m.offset) for k, m in self.dac_to_hv.items()}
        return ctl.ControllerState.from_hv(
            hv, dac_to_hv=maps, v_limits=v_limits,
            step_policy=tuple(tuple(p) for p in self.step_policy),
            reset_target=dict(self.reset_target), deadband=self.deadband,
            direction=dict(self.initial_direction))


class RunSection(_Strict):
    duration: float = Field(10800.0, ge=0)
    cadence: float = Field(2.5, gt=0)
    control: bool = True
    frames_per_sample: int = Field(5, ge=1)
    frame_interval: float = Field(0.5, gt=0)
    dark_refresh_every: int = Field(20, ge=1)
    min_valid_frames: int = Field(3, ge=1)

    @model_validator(mode="after")
    def _fits(self):
        if self.min_valid_frames > self.frames_per_sample:
            raise ValueError("min_valid_frames exceeds frames_per_sample")
        if (self.frames_per_sample - 1) * self.frame_interval >= self.cadence:
            raise ValueError("frames of one sample overrun the sample cadence")
        return self


class SweepSection(_Strict):
    n_points: int = Field(256, ge=8)
    paths: dict[str, PathConfig] = Field(default_factory=dict)
    # also sweep the two interferometer arms with their own stretchers
    plant_arms: bool = True
    fit_tol: float = Field(1e-9, gt=0)

    @field_validator("paths")
    @classmethod
    def _actuated(cls, v):
        for name, p in v.items():
            if p.actuator is None:
                raise ValueError(f"path {name!r} has no actuator to sweep")
        return v

    @model_validator(mode="after")
    def _nonempty(self):
        if not self.paths and not self.plant_arms:
            raise ValueError("nothing to sweep: no paths and plant_arms is false")
        return self


class OutputSection(_Strict):
    dir: str = "runs"
    prefix: str = ""


class ScenarioConfig(_Strict):
    seed: int = Field(ge=0, lt=2**64)
    scenario: Literal["drift", "reset", "sweep"] = "drift"
    plant: PlantSection = Field(default_factory=PlantSection)
    controller: ControllerSection = Field(default_factory=ControllerSection)
    run: RunSection = Field(default_factory=RunSection)
    sweep: SweepSection = Field(default_factory=SweepSection)
    output: OutputSection = Field(default_factory=OutputSection)

    def config_hash(self) -> str:
        """sha256 of the canonical JSON form; stable across key order and YAML layout."""
        blob = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


class ConfigError(ValueError):
    """Validation failure with a list of ``{"path", "message"}`` entries."""

    def __init__(self, errors: list[dict]):
        self.errors = errors
        super().__init__("; ".join(f"{e['path']}: {e['message']}" for e in errors))

    def to_json(self) -> str:
        return json.dumps({"error": "config_validation", "details": self.errors})


def _format(exc: ValidationError) -> list[dict]:
    return [{"path": ".".join(str(p) for p in e["loc"]) or "<root>", "message": e["msg"]}
            for e in exc.errors()]


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def validate_config(data: dict, overrides: Optional[dict] = None) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError([{"path": "<root>", "message": "config must be a mapping"}])
    if overrides:
        data = _merge(data, overrides)
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format(exc)) from None


def load_config(path: Union[str, Path], overrides: Optional[dict] = None) -> ScenarioConfig:
    """Read a YAML file. ``path`` may also name a packaged config (drift, reset, sweep)."""
    if str(path) in PACKAGED_CONFIGS:
        text = resources.files("cccpol.configs").joinpath(f"{path}.yaml").read_text()
    else:
        text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([{"path": "<file>", "message": f"YAML parse error: {exc}"}]) from None
    return validate_config(data, overrides)
