"""Experiment configuration: one JSON file per experiment.

Task presets carry the MPPI horizon and rollout count, the search box for
``(lambda, sigma_eps)`` and the known good setting used as the fixed value in
one-axis sweeps.  The ``synthetic`` task is a 1-D generative benchmark with a
closed-form objective and input-dependent noise.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Optional

from ..bayesopt import BoConfig
from ..cmaes import CmaConfig
from ..env import PLANT_NAMES, make_plant

SYNTHETIC = "synthetic"
TASKS = PLANT_NAMES + (SYNTHETIC,)
AXES = ("lambda", "sigma_eps")


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass(frozen=True)
class TaskPreset:
    horizon: int
    rollouts: int
    lower: tuple
    upper: tuple
    optimum: tuple
    names: tuple = AXES


PRESETS = {
    "acrobot": TaskPreset(8, 30, (1e-10, 1e-10), (1.2, 10.0), (0.063, 8.421)),
    "cartpole": TaskPreset(10, 100, (1e-10, 1e-10), (1.2, 3.0), (0.757, 0.158)),
    "pendulum": TaskPreset(10, 10, (1e-10, 1e-10), (1.2, 3.0), (0.694, 1.579)),
    # horizon/rollouts are unused; the optimum is the argmax of the benchmark mean
    SYNTHETIC: TaskPreset(0, 0, (0.0,), (1.0,), (0.2,), ("x",)),
}


@dataclass(frozen=True)
class ExperimentConfig:
    task: str = "pendulum"
    horizon: Optional[int] = None
    rollouts: Optional[int] = None
    episode_length: Optional[int] = None
    lower: Optional[tuple] = None
    upper: Optional[tuple] = None
    optimum: Optional[tuple] = None
    bo: BoConfig = field(default_factory=BoConfig)
    cmaes: CmaConfig = field(default_factory=CmaConfig)
    master_seed: int = 0
    seeds: tuple = (0,)
    output_dir: str = "runs"
    record_wall_time: bool = False

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; expected one of {TASKS}")
        p = PRESETS[self.task]
        fill = dict(horizon=p.horizon, rollouts=p.rollouts, lower=p.lower, upper=p.upper, optimum=p.optimum)
        if self.task != SYNTHETIC:
            fill["episode_length"] = make_plant(self.task).episode_length
        else:
            fill["episode_length"] = 1
        for k, v in fill.items():
            if getattr(self, k) is None:
                object.__setattr__(self, k, v)
        for k in ("lower", "upper", "optimum", "seeds"):
            object.__setattr__(self, k, tuple(getattr(self, k)))
        if isinstance(self.bo, dict):
            object.__setattr__(self, "bo", _build(BoConfig, self.bo))
        if isinstance(self.cmaes, dict):
            object.__setattr__(self, "cmaes", _build(CmaConfig, self.cmaes))
        if not (len(self.lower) == len(self.upper) == len(self.optimum) == len(p.names)):
            raise ConfigError("box bounds and optimum must match the task dimension")
        if any(not hi > lo for lo, hi in zip(self.lower, self.upper)):
            raise ConfigError(f"degenerate search box {self.lower} .. {self.upper}")
        if self.task != SYNTHETIC and (self.horizon < 1 or self.rollouts < 1 or self.episode_length < 1):
            raise ConfigError("horizon, rollouts and episode length must be positive")
        if not self.seeds:
            raise ConfigError("at least one seed index is required")

    @property
    def names(self) -> tuple:
        return PRESETS[self.task].names

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k in ("lower", "upper", "optimum", "seeds"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d) -> "ExperimentConfig":
        d = dict(d)
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def loads(cls, text: str) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def _build(cls, d):
    unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys {sorted(unknown)}")
    try:
        return cls(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return ExperimentConfig.loads(fh.read())


def preset(task: str, **overrides) -> ExperimentConfig:
    return ExperimentConfig(task=task, **overrides)
