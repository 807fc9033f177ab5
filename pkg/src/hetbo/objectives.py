"""Black-box objectives shared by the BO loop and CMA-ES.

An objective maps a design point ``x`` to the returns of independent
episodes.  Each episode draws from its own generator, supplied by the caller.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import mppi
from .env import Plant


@dataclass(frozen=True)
class Box:
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    names: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(float(v) for v in np.atleast_1d(self.lower)))
        object.__setattr__(self, "upper", tuple(float(v) for v in np.atleast_1d(self.upper)))
        if len(self.lower) != len(self.upper):
            raise ValueError("box bounds differ in length")
        if any(not hi > lo for lo, hi in zip(self.lower, self.upper)):
            raise ValueError(f"degenerate box {self.lower} .. {self.upper}")
        if not self.names:
            object.__setattr__(self, "names", tuple(f"x{i + 1}" for i in range(len(self.lower))))

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.lower)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.upper)

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    def to_unit(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.lo) / self.width

    def from_unit(self, U) -> np.ndarray:
        return np.clip(self.lo + np.asarray(U, dtype=np.float64) * self.width, self.lo, self.hi)

    def clip(self, X) -> np.ndarray:
        return np.clip(X, self.lo, self.hi)

    def contains(self, X) -> bool:
        X = np.asarray(X)
        return bool(np.all(X >= self.lo) and np.all(X <= self.hi))


class Objective:
    box: Box

    def evaluate(self, x, rngs: Sequence[np.random.Generator]) -> tuple[np.ndarray, int]:
        """Returns of ``len(rngs)`` episodes at ``x`` and the number truncated."""
        raise NotImplementedError


@dataclass
class ControllerObjective(Objective):
    """Episode return of MPPI with temperature ``x[0]`` and noise std ``x[1]``."""

    plant: Plant
    box: Box
    horizon: int
    rollouts: int
    episode_length: int

    def config(self, x) -> mppi.MppiConfig:
        lam, sigma = (float(v) for v in x)
        return mppi.MppiConfig(lam, sigma, self.horizon, self.rollouts)

    def evaluate(self, x, rngs):
        cfg = self.config(x)
        out = []
        truncated = 0
        for rng in rngs:
            res = mppi.run_episode(self.plant, cfg, self.episode_length, rng)
            out.append(res.ret)
            truncated += res.truncated
        return np.asarray(out), truncated


@dataclass
class SyntheticObjective(Objective):
    """``g = f(x) + noise_std(x) * N(0, 1)``, with ``f`` and ``noise_std`` known."""

    f: Callable
    noise_std: Callable
    box: Box

    def evaluate(self, x, rngs):
        x = np.asarray(x, dtype=np.float64)
        mean = float(self.f(x))
        sd = float(self.noise_std(x))
        return np.array([mean + sd * rng.standard_normal() for rng in rngs]), 0
