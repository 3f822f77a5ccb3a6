"""Scenario configuration: strict INI files with one section per subsystem.

Example::

    [run]
    mode = arc
    seed = 1

    [filter]
    sigma_p = 0.2
    sigma_theta_deg = 10

Unknown sections or keys are errors. ``overrides`` use ``section.key=value``.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import get_type_hints

import numpy as np

from .estimator import ExtrinsicState, InitialStd, NoiseParams
from .geometry import Pose, rotmat_to_quat, yaw_quat
from .landmarks import MeasurementNoise
from .mission import InspectionPlan
from .poet_sim import PoETNoiseModel, SceneConfig, calibrate_from_table


class ConfigError(ValueError):
    pass


def _floats(text: str, n: int | None = None) -> list[float]:
    vals = [float(v) for v in text.replace(",", " ").split()]
    if n is not None and len(vals) != n:
        raise ConfigError(f"expected {n} numbers, got {text!r}")
    return vals


# camera: z forward, x right, y down; IMU: x forward, y left, z up
_R_IC_DEFAULT = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
_Q_IC_DEFAULT = " ".join(f"{v:.17g}" for v in rotmat_to_quat(_R_IC_DEFAULT))


@dataclass
class SceneSection:
    # "x y z yaw_deg" per object, separated by ';'
    objects: str = "0 0 2.0 0; 0 0.7 1.6 0; 0 -0.7 1.6 0"
    range_min: float = 0.5
    range_max: float = 8.0
    fov_half_h_deg: float = 69.0
    fov_half_v_deg: float = 52.0


@dataclass
class PlanSection:
    d: float = 3.3
    h: float = 2.0
    sweep_deg: float = 50.0
    step_deg: float = 10.0
    hover_duration: float = 10.0


@dataclass
class ImuSection:
    rate: float = 200.0
    accel_noise: float = 0.02
    gyro_noise: float = 0.002
    accel_bias_walk: float = 1e-4
    gyro_bias_walk: float = 1e-4
    accel_bias: str = "0 0 0"
    gyro_bias: str = "0 0 0"
    noise_enabled: bool = True


@dataclass
class CameraSection:
    rate: float = 15.0
    p_ic: str = "0.1 0 -0.05"
    q_ic: str = _Q_IC_DEFAULT


@dataclass
class PoetSection:
    avg_te: float = 0.057
    avg_re_deg: float = 2.72
    p_dropout: float = 0.04
    distance_scaling: bool = False
    bias_t: str = "0 0 0"


@dataclass
class FilterSection:
    sigma_p: float = 0.1
    sigma_theta_deg: float = 5.0
    alpha: float = 0.05
    gating: bool = True
    verify_batches: int = 5
    anchor: str = "highest"
    use_anchor: bool = True
    new_landmark_cost: float = 1.0
    init_std_p: float = 0.1
    init_std_v: float = 0.1
    init_std_theta_deg: float = 2.0
    init_std_bw: float = 0.005
    init_std_ba: float = 0.05


@dataclass
class GlobalSection:
    rate: float = 10.0
    sigma_p: float = 0.05
    sigma_theta_deg: float = 2.0
    noise_enabled: bool = True


@dataclass
class RunSection:
    mode: str = "arc"
    seed: int = 0
    duration: float = 120.0
    start_angle_deg: float = 0.0
    object_relative_duration: float = 30.0
    retreat_distance: float = 1.0
    return_duration: float = 2.0
    waypoint_tolerance: float = 0.15
    v_max: float = 0.5
    yaw_rate_max: float = 0.5
    accel_max: float = 1.0
    divergence_limit: float = 5.0
    initial_error: bool = True


_SECTIONS = {
    "scene": SceneSection,
    "plan": PlanSection,
    "imu": ImuSection,
    "camera": CameraSection,
    "poet": PoetSection,
    "filter": FilterSection,
    "global": GlobalSection,
    "run": RunSection,
}


@dataclass
class ScenarioConfig:
    scene: SceneSection = field(default_factory=SceneSection)
    plan: PlanSection = field(default_factory=PlanSection)
    imu: ImuSection = field(default_factory=ImuSection)
    camera: CameraSection = field(default_factory=CameraSection)
    poet: PoetSection = field(default_factory=PoetSection)
    filter: FilterSection = field(default_factory=FilterSection)
    global_: GlobalSection = field(default_factory=GlobalSection)
    run: RunSection = field(default_factory=RunSection)

    def __post_init__(self) -> None:
        self.validate()

    def section(self, name: str):
        return getattr(self, "global_" if name == "global" else name)

    def validate(self) -> None:
        if self.run.mode not in ("hover", "arc"):
            raise ConfigError(f"run.mode must be 'hover' or 'arc', not {self.run.mode!r}")
        if not (self.imu.rate > 0 and self.camera.rate > 0 and self.global_.rate > 0):
            raise ConfigError("sensor rates must be positive")
        if self.imu.rate < self.camera.rate:
            raise ConfigError("imu.rate must be at least camera.rate")
        if self.filter.verify_batches < 1:
            raise ConfigError("filter.verify_batches must be >= 1")
        if self.filter.anchor != "highest":
            try:
                int(self.filter.anchor)
            except ValueError:
                raise ConfigError("filter.anchor must be 'highest' or an index") from None
        try:
            self.scene_config()
            self.extrinsics()
            self.inspection_plan()
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def replace(self, overrides: dict[str, str] | None = None, **sections) -> ScenarioConfig:
        """Copy with whole sections replaced and/or ``section.key`` string overrides."""
        parts = {f.name: dataclasses.replace(getattr(self, f.name)) for f in dataclasses.fields(self)}
        for name, value in sections.items():
            parts[name] = value
        cfg = ScenarioConfig.__new__(ScenarioConfig)
        for k, v in parts.items():
            setattr(cfg, k, v)
        for dotted, value in (overrides or {}).items():
            if "." not in dotted:
                raise ConfigError(f"override {dotted!r} must look like section.key")
            sec, key = dotted.split(".", 1)
            _set_field(cfg, sec, key, value)
        cfg.validate()
        return cfg

    # domain objects

    def scene_config(self) -> SceneConfig:
        objects = []
        for chunk in self.scene.objects.split(";"):
            if not chunk.strip():
                continue
            x, y, z, yaw = _floats(chunk, 4)
            objects.append(Pose([x, y, z], yaw_quat(math.radians(yaw))))
        return SceneConfig(
            objects,
            self.scene.range_min,
            self.scene.range_max,
            math.radians(self.scene.fov_half_h_deg),
            math.radians(self.scene.fov_half_v_deg),
        )

    def inspection_plan(self) -> InspectionPlan:
        p = self.plan
        return InspectionPlan(p.d, p.h, math.radians(p.sweep_deg), math.radians(p.step_deg), p.hover_duration)

    def imu_noise(self) -> NoiseParams:
        i = self.imu
        return NoiseParams(i.accel_noise, i.gyro_noise, i.accel_bias_walk, i.gyro_bias_walk)

    def extrinsics(self) -> ExtrinsicState:
        return ExtrinsicState(_floats(self.camera.p_ic, 3), _floats(self.camera.q_ic, 4))

    def poet_model(self) -> PoETNoiseModel:
        p = self.poet
        return calibrate_from_table(
            p.avg_te,
            p.avg_re_deg,
            p_dropout=p.p_dropout,
            rate=self.camera.rate,
            seed=self.run.seed,
            distance_scaling=p.distance_scaling,
            reference_distance=self.plan.d,
            bias_t=np.array(_floats(p.bias_t, 3)),
        )

    def landmark_noise(self) -> MeasurementNoise:
        return MeasurementNoise.isotropic(self.filter.sigma_p, self.filter.sigma_theta_deg)

    def global_noise(self) -> MeasurementNoise:
        return MeasurementNoise.isotropic(self.global_.sigma_p, self.global_.sigma_theta_deg)

    def initial_std(self) -> InitialStd:
        f = self.filter
        return InitialStd(
            p=f.init_std_p,
            v=f.init_std_v,
            theta=math.radians(f.init_std_theta_deg),
            b_w=f.init_std_bw,
            b_a=f.init_std_ba,
        )

    def anchor_rule(self) -> str | int:
        return "highest" if self.filter.anchor == "highest" else int(self.filter.anchor)

    def to_ini(self) -> str:
        lines = []
        for name in _SECTIONS:
            lines.append(f"[{name}]")
            sec = self.section(name)
            for f in dataclasses.fields(sec):
                v = getattr(sec, f.name)
                if isinstance(v, bool):
                    v = "true" if v else "false"
                elif isinstance(v, float):
                    v = repr(v)
                lines.append(f"{f.name} = {v}")
            lines.append("")
        return "\n".join(lines)


def _convert(value: str, typ, where: str):
    value = value.strip()
    try:
        if typ is bool:
            low = value.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if typ is int:
            return int(value)
        if typ is float:
            return float(value)
        return value
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {value!r} as {typ.__name__}") from None


def _set_field(cfg: ScenarioConfig, section: str, key: str, value: str) -> None:
    if section not in _SECTIONS:
        raise ConfigError(f"unknown section [{section}]")
    sec = cfg.section(section)
    hints = get_type_hints(type(sec))
    if key not in hints:
        raise ConfigError(f"unknown key {key!r} in [{section}]")
    setattr(sec, key, _convert(value, hints[key], f"{section}.{key}"))


def parse_config(text: str, overrides: dict[str, str] | None = None) -> ScenarioConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    cfg = ScenarioConfig.__new__(ScenarioConfig)
    for name, cls in _SECTIONS.items():
        setattr(cfg, "global_" if name == "global" else name, cls())
    for section in parser.sections():
        for key, value in parser.items(section):
            _set_field(cfg, section, key, value)
    for dotted, value in (overrides or {}).items():
        if "." not in dotted:
            raise ConfigError(f"override {dotted!r} must look like section.key")
        sec, key = dotted.split(".", 1)
        _set_field(cfg, sec, key, value)
    cfg.validate()
    return cfg


def load_config(path: str | Path, overrides: dict[str, str] | None = None) -> ScenarioConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(), overrides)


def hover_config(**overrides: str) -> ScenarioConfig:
    """Hover defaults: filter tuned to 10 cm / 5 deg."""
    return parse_config("[run]\nmode = hover\n", {k.replace("__", "."): v for k, v in overrides.items()})


def arc_config(**overrides: str) -> ScenarioConfig:
    """Closed-loop arc defaults: filter tuned to 20 cm / 10 deg."""
    base = "[run]\nmode = arc\n[filter]\nsigma_p = 0.2\nsigma_theta_deg = 10\n"
    return parse_config(base, {k.replace("__", "."): v for k, v in overrides.items()})
