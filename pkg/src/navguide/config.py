"""Run configuration: nested dataclasses loaded from JSON with strict key checking."""

from __future__ import annotations

import json
import types
import typing
from dataclasses import dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Any

from .costmap import CostMapConfig
from .costs import CostConfig
from .denoiser import Architecture
from .diffusion import DEFAULT_GUIDANCE_SCALE, DEFAULT_SCHEDULE, GuidanceConfig, TrainConfig, make_schedule
from .errors import ConfigError
from .geometry import NormSpec
from .planner import PlannerConfig
from .selection import SelectionConfig
from .sim.expert import ExpertConfig
from .sim.trial import SUITES, TrialConfig
from .sim.world import SensorConfig


@dataclass(frozen=True)
class DiffusionSection:
    T: int = 10
    schedule: str = DEFAULT_SCHEDULE
    beta_start: float = 1e-4
    beta_end: float = 0.5
    guidance_scale: float | tuple[float, ...] = DEFAULT_GUIDANCE_SCALE
    grad_clip: float = 0.2
    grad_at_x0: bool = False
    clip_denoised: bool = True

    def __post_init__(self) -> None:
        make_schedule(self.T, self.schedule, self.beta_start, self.beta_end)


@dataclass(frozen=True)
class SimSection:
    kind: str = "outdoor"
    time_limit: float = 120.0
    goal_radius: float = 0.5
    control_dt: float = 0.1
    replan_period: int = 3
    num_candidates: int = 16
    expert: ExpertConfig = field(default_factory=ExpertConfig)

    def __post_init__(self) -> None:
        if self.kind not in ("indoor", "outdoor"):
            raise ValueError(f"kind must be indoor or outdoor, got {self.kind!r}")


@dataclass(frozen=True)
class EvalSection:
    suites: tuple[str, ...] = ("obstacle",)
    trials: int = 50
    seed: int = 0

    def __post_init__(self) -> None:
        bad = [s for s in self.suites if s not in SUITES]
        if bad:
            raise ValueError(f"unknown suites {bad}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


@dataclass(frozen=True)
class Config:
    geometry: NormSpec = field(default_factory=NormSpec)
    costmap: CostMapConfig = field(default_factory=CostMapConfig)
    costs: CostConfig = field(default_factory=CostConfig)
    denoiser: Architecture = field(default_factory=Architecture)
    diffusion: DiffusionSection = field(default_factory=DiffusionSection)
    train: TrainConfig = field(default_factory=TrainConfig)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    sensor: SensorConfig = field(default_factory=SensorConfig)
    sim: SimSection = field(default_factory=SimSection)
    eval: EvalSection = field(default_factory=EvalSection)

    def guidance(self, scale: float | tuple[float, ...] | None = None) -> GuidanceConfig:
        d = self.diffusion
        s = d.guidance_scale if scale is None else scale
        return GuidanceConfig(s, self.costs, d.grad_clip, d.grad_at_x0)

    def planner(self, scale: float | tuple[float, ...] | None = None) -> PlannerConfig:
        return PlannerConfig(self.costmap, self.guidance(scale), self.selection,
                             self.sim.num_candidates, self.diffusion.clip_denoised)

    def trial(self, suite: str, guided: bool, seed: int) -> TrialConfig:
        s = self.sim
        return TrialConfig(suite=suite, kind=s.kind, time_limit=s.time_limit, goal_radius=s.goal_radius,
                           control_dt=s.control_dt, replan_period=s.replan_period,
                           num_candidates=s.num_candidates, guided=guided, seed=seed)

    def to_dict(self) -> dict:
        return _to_plain(self)


def _to_plain(obj):
    if is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, tuple):
        return [_to_plain(v) for v in obj]
    return obj


def _check_scalar(value, tp, path: str):
    """Coerce a JSON value to the annotated type or raise with its path."""
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        for arm in typing.get_args(tp):
            try:
                return _check_scalar(value, arm, path)
            except ConfigError:
                pass
        raise ConfigError(f"{path}: value {value!r} matches none of {tp}")
    if tp is type(None):
        if value is None:
            return None
        raise ConfigError(f"{path}: expected null")
    if origin is tuple:
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list, got {type(value).__name__}")
        arm = typing.get_args(tp)[0]
        return tuple(_check_scalar(v, arm, f"{path}[{i}]") for i, v in enumerate(value))
    if tp is bool:
        if isinstance(value, bool):
            return value
    elif tp is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif tp is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    elif tp is str:
        if isinstance(value, str):
            return value
    elif is_dataclass(tp):
        return _build(tp, value, path)
    raise ConfigError(f"{path}: expected {getattr(tp, '__name__', tp)}, got {value!r}")


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or '<root>'}: expected an object")
    hints = typing.get_type_hints(cls)
    known = {f.name for f in fields(cls) if f.init}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown config key {_join(path, key)}")
    kwargs = {k: _check_scalar(v, hints[k], _join(path, k)) for k, v in data.items()}
    base = cls()
    try:
        return replace(base, **kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or '<root>'}: {exc}") from None


def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def config_from_dict(data: dict) -> Config:
    return _build(Config, data, "")


def load_config(path) -> Config:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    return config_from_dict(data)


def with_overrides(cfg: Config, overrides: dict[str, Any]) -> Config:
    """Apply dotted-path overrides such as ``{"train.seed": 3}`` (flags win over files)."""
    data = cfg.to_dict()
    for dotted, value in overrides.items():
        node = data
        *parents, leaf = dotted.split(".")
        for p in parents:
            if not isinstance(node.get(p), dict):
                raise ConfigError(f"unknown config key {dotted}")
            node = node[p]
        if leaf not in node:
            raise ConfigError(f"unknown config key {dotted}")
        node[leaf] = list(value) if isinstance(value, tuple) else value
    return config_from_dict(data)


__all__ = ["Config", "DiffusionSection", "EvalSection", "SimSection", "config_from_dict",
           "load_config", "with_overrides"]
