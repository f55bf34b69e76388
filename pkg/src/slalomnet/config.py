"""Experiment configuration loaded from TOML."""
from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .controller import PdGains
from .expert import DriverPreset, ExpertConfig
from .nn.training import TrainConfig
from .sim import CourseConfig, VehicleParams, build_course


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    trials: int = 17
    profile: str = "random"
    compare_expert: bool = True
    compare_preset: str = "steady"
    max_time: float = 120.0


def _default_train() -> TrainConfig:
    # every 5th frame (6 Hz) keeps the full 18-epoch recipe within a desktop budget
    return TrainConfig(frame_stride=5)


@dataclass
class ExperimentConfig:
    seed: int = 0
    control_rate_hz: float = 30.0
    course: CourseConfig = field(default_factory=CourseConfig)
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    expert: ExpertConfig = field(default_factory=ExpertConfig)
    train: TrainConfig = field(default_factory=_default_train)
    controller: PdGains = field(default_factory=PdGains)
    run: RunConfig = field(default_factory=RunConfig)

    @property
    def dt(self) -> float:
        return 1.0 / self.control_rate_hz

    def build_course(self):
        return build_course(self.course)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return dataclasses.replace(
            self, seed=seed, expert=dataclasses.replace(self.expert, seed=seed),
            train=dataclasses.replace(self.train, seed=seed))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _build(cls, data: dict, section: str):
    if not isinstance(data, dict):
        raise ConfigError(f"[{section}] must be a table")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}]: {exc}") from exc


def _table(data: dict, section: str) -> dict:
    value = data.pop(section, {})
    if not isinstance(value, dict):
        raise ConfigError(f"[{section}] must be a table")
    return dict(value)


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data)
    seed = data.pop("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
    rate = data.pop("control_rate_hz", 30.0)
    if not isinstance(rate, (int, float)) or isinstance(rate, bool) or rate <= 0:
        raise ConfigError("control_rate_hz must be positive")
    course = _build(CourseConfig, _table(data, "course"), "course")
    vehicle = _build(VehicleParams, _table(data, "vehicle"), "vehicle")
    expert_d = _table(data, "expert")
    if "presets" in expert_d:
        expert_d["presets"] = tuple(_build(DriverPreset, p, "expert.presets")
                                    for p in expert_d["presets"])
    expert_d.setdefault("seed", seed)
    expert = _build(ExpertConfig, expert_d, "expert")
    train_d = _table(data, "train")
    train_d.setdefault("frame_stride", 5)
    train_d.setdefault("seed", seed)
    train = _build(TrainConfig, train_d, "train")
    ctrl_d = _table(data, "controller")
    if "schedule" in ctrl_d:
        ctrl_d["schedule"] = tuple(tuple(k) for k in ctrl_d["schedule"])
    controller = _build(PdGains, ctrl_d, "controller")
    run = _build(RunConfig, _table(data, "run"), "run")
    if data:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(data))}")
    cfg = ExperimentConfig(seed, float(rate), course, vehicle, expert, train, controller, run)
    try:
        cfg.build_course()
    except ValueError as exc:
        raise ConfigError(f"[course]: {exc}") from exc
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(data)
