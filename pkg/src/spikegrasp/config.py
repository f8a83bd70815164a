"""
Experiment configuration: nested dataclasses loaded from a YAML file.

Unknown keys are rejected, and every error names the file and line of the
offending entry.  ``snapshot`` writes the fully resolved configuration so a
run can be reproduced from its output directory alone.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .env import ACTION_DIM, OBS_DIM, EnvConfig
from .policy import NetworkSpec
from .ppo import PPOConfig
from .reward import STAGE_ONE, STAGE_TWO, CurriculumSchedule, DeadZoneParams, RewardScales, RewardWeightSet
from .snn import LIFParams, NLIFParams, SurrogateSpec


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class WeightsConfig:
    alpha: tuple
    beta: tuple
    gamma: float
    delta: tuple

    def to_weights(self) -> RewardWeightSet:
        return RewardWeightSet(np.array(self.alpha), np.array(self.beta), np.array(self.gamma), np.array(self.delta))

    @classmethod
    def of(cls, w: RewardWeightSet) -> "WeightsConfig":
        return cls(tuple(w.alpha.tolist()), tuple(w.beta.tolist()), float(w.gamma), tuple(w.delta.tolist()))

    def __post_init__(self):
        if len(self.alpha) != 4 or len(self.beta) != 3 or len(self.delta) != 2:
            raise ValueError("weights need 4 alpha, 3 beta and 2 delta entries")
        self.to_weights()


@dataclass(frozen=True)
class CurriculumConfig:
    t1: int = 2000
    stage_one: WeightsConfig = field(default_factory=lambda: WeightsConfig.of(STAGE_ONE))
    stage_two: WeightsConfig = field(default_factory=lambda: WeightsConfig.of(STAGE_TWO))
    vanilla: WeightsConfig = field(default_factory=lambda: WeightsConfig.of(STAGE_TWO))


@dataclass(frozen=True)
class DeadZoneConfig:
    enabled: bool = True
    hysteresis: float = 0.02
    window: int = 50
    k_up: float = 1.5
    k_down: float = 0.5

    def params(self) -> DeadZoneParams:
        return DeadZoneParams(self.hysteresis, self.window, self.k_up, self.k_down)


@dataclass(frozen=True)
class NetworkConfig:
    n1: int = 256
    T: int = 8
    encoder: str = "current"
    init_scale: float = 5.0
    lif: LIFParams = field(default_factory=LIFParams)
    nlif: NLIFParams = field(default_factory=NLIFParams)
    surrogate: SurrogateSpec = field(default_factory=SurrogateSpec)

    def spec(self, n0: int = OBS_DIM, n2: int = ACTION_DIM) -> NetworkSpec:
        return NetworkSpec(n0, self.n1, n2, self.T, self.encoder, self.lif, self.nlif, self.surrogate, self.init_scale)


@dataclass(frozen=True)
class EvalConfig:
    episodes: int = 10
    every: int = 25

    def __post_init__(self):
        if self.episodes < 1 or self.every < 1:
            raise ValueError("eval episodes and interval must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "snn"
    training: str = "crl"
    seed: int = 0
    out_dir: str = "runs/default"
    checkpoint_every: int = 100
    network: NetworkConfig = field(default_factory=NetworkConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    ppo: PPOConfig = field(default_factory=PPOConfig)
    curriculum: CurriculumConfig = field(default_factory=CurriculumConfig)
    scales: RewardScales = field(default_factory=RewardScales)
    deadzone: DeadZoneConfig = field(default_factory=DeadZoneConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self):
        if self.model not in ("snn", "ann"):
            raise ValueError(f"model must be 'snn' or 'ann', got {self.model!r}")
        if self.training not in ("crl", "vanilla"):
            raise ValueError(f"training must be 'crl' or 'vanilla', got {self.training!r}")

    def schedule(self) -> CurriculumSchedule:
        c = self.curriculum
        if self.training == "vanilla":
            return CurriculumSchedule.constant(c.vanilla.to_weights())
        return CurriculumSchedule(c.t1, c.stage_one.to_weights(), c.stage_two.to_weights())

    def deadzone_params(self) -> Optional[DeadZoneParams]:
        if self.training == "vanilla" or not self.deadzone.enabled:
            return None
        return self.deadzone.params()

    def network_spec(self) -> NetworkSpec:
        return self.network.spec()

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


# -- YAML <-> dataclasses ---------------------------------------------------------


def _line(node) -> int:
    return node.start_mark.line + 1


def _build(cls, node, where: str, source: str):
    if not isinstance(node, yaml.MappingNode):
        raise ConfigError(f"{source}:{_line(node)}: section '{where}' must be a mapping")
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs: dict[str, Any] = {}
    for key_node, value_node in node.value:
        key = key_node.value
        path = f"{where}.{key}" if where else key
        if key not in known:
            raise ConfigError(f"{source}:{_line(key_node)}: unknown key '{path}'")
        kwargs[key] = _convert(known[key], value_node, path, source)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}:{_line(node)}: invalid section '{where or '<root>'}': {exc}") from exc


def _nested_type(f: dataclasses.Field):
    if dataclasses.is_dataclass(f.type):
        return f.type
    default = f.default_factory() if f.default_factory is not dataclasses.MISSING else f.default
    if dataclasses.is_dataclass(default):
        return type(default)
    return None


def _convert(f: dataclasses.Field, node, path: str, source: str):
    sub = _nested_type(f)
    if sub is not None:
        return _build(sub, node, path, source)
    value = yaml.safe_load(yaml.serialize(node))
    if isinstance(value, list):
        value = tuple(value)
    default = f.default if f.default is not dataclasses.MISSING else None
    if isinstance(default, bool) and not isinstance(value, bool):
        raise ConfigError(f"{source}:{_line(node)}: '{path}' must be true/false")
    if isinstance(default, int) and not isinstance(default, bool):
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"{source}:{_line(node)}: '{path}' must be an integer")
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{source}:{_line(node)}: '{path}' must be a number")
        value = float(value)
    if isinstance(default, str) and not isinstance(value, str):
        raise ConfigError(f"{source}:{_line(node)}: '{path}' must be a string")
    if isinstance(default, tuple):
        if not isinstance(value, tuple):
            raise ConfigError(f"{source}:{_line(node)}: '{path}' must be a list")
        value = tuple(float(v) for v in value)
    return value


def loads(text: str, source: str = "<string>") -> ExperimentConfig:
    try:
        node = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else 0
        raise ConfigError(f"{source}:{line}: YAML syntax error: {exc}") from exc
    if node is None:
        return ExperimentConfig()
    return _build(ExperimentConfig, node, "", source)


def load(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    return loads(path.read_text(), str(path))


def to_dict(obj) -> Any:
    if dataclasses.is_dataclass(obj):
        return {f.name: to_dict(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (tuple, list)):
        return [to_dict(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def dumps(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False, default_flow_style=None)


def snapshot(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(dumps(cfg))
