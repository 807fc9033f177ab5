"""Simulated control plants: pendulum, cart-pole and acrobot.

Every plant is integrated with a fixed-step RK4 scheme.  The dynamics and
reward functions accept either a single state of shape ``(n,)`` or a batch of
states of shape ``(..., n)`` so that the MPPI rollouts can share them.

Angle conventions:

* pendulum and cart-pole pole: 0 is upright, pi is hanging down;
* acrobot: both angles measured from the hanging rest position, the second
  angle relative to the first link.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

PLANT_NAMES = ("pendulum", "cartpole", "acrobot")

#: integer ids shared with the compiled rollout kernel
PLANT_IDS = {"pendulum": 0, "cartpole": 1, "acrobot": 2}


class DivergenceError(FloatingPointError):
    """Raised when a plant is asked to integrate a non-finite state."""


@dataclass(frozen=True)
class Plant:
    """An immutable plant description.

    ``constants`` holds the physical constants in the order expected by the
    dynamics function (see ``DEFAULT_CONSTANTS``).  The initial state is drawn
    uniformly from ``init_center +/- init_halfwidth``.
    """

    name: str
    constants: Mapping[str, float]
    dt: float = 0.05
    action_low: float = -1.0
    action_high: float = 1.0
    init_center: tuple[float, ...] = ()
    init_halfwidth: tuple[float, ...] = ()
    episode_length: int = 200
    reward_upper: float = 0.0

    def __post_init__(self):
        if self.name not in PLANT_NAMES:
            raise ValueError(f"unknown plant {self.name!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not (np.isfinite(self.action_low) and np.isfinite(self.action_high)):
            raise ValueError("action bounds must be finite")
        if not self.action_low < self.action_high:
            raise ValueError("action_low must be below action_high")
        missing = set(DEFAULT_CONSTANTS[self.name]) - set(self.constants)
        if missing:
            raise ValueError(f"missing constants for {self.name}: {sorted(missing)}")
        n = STATE_DIM[self.name]
        if len(self.init_center) != n or len(self.init_halfwidth) != n:
            raise ValueError(f"initial distribution must have {n} entries")

    @property
    def state_dim(self) -> int:
        return STATE_DIM[self.name]

    @property
    def plant_id(self) -> int:
        return PLANT_IDS[self.name]

    def param_vector(self) -> np.ndarray:
        """Constants as a float array in the canonical order."""
        return np.array(
            [float(self.constants[k]) for k in DEFAULT_CONSTANTS[self.name]],
            dtype=np.float64,
        )

    def clamp(self, a):
        return np.clip(a, self.action_low, self.action_high)

    def replace(self, **changes) -> "Plant":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "constants": dict(self.constants),
            "dt": self.dt,
            "action_low": self.action_low,
            "action_high": self.action_high,
            "init_center": list(self.init_center),
            "init_halfwidth": list(self.init_halfwidth),
            "episode_length": self.episode_length,
            "reward_upper": self.reward_upper,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Plant":
        d = dict(d)
        d["constants"] = dict(d["constants"])
        d["init_center"] = tuple(float(v) for v in d["init_center"])
        d["init_halfwidth"] = tuple(float(v) for v in d["init_halfwidth"])
        return cls(**d)


STATE_DIM = {"pendulum": 2, "cartpole": 4, "acrobot": 4}

DEFAULT_CONSTANTS = {
    # uniform rod pivoting at one end: inertia m l^2 / 3
    "pendulum": {"mass": 1.0, "length": 1.0, "gravity": 9.81, "damping": 0.0},
    # pole_length is the full pole length; the pole is a uniform rod
    "cartpole": {"cart_mass": 1.0, "pole_mass": 1.0, "pole_length": 1.0, "gravity": 9.81},
    "acrobot": {
        "mass1": 1.0,
        "mass2": 1.0,
        "length1": 1.0,
        "com1": 0.5,
        "com2": 0.5,
        "inertia1": 1.0,
        "inertia2": 1.0,
        "gravity": 9.81,
    },
}


def make_plant(name: str, **overrides) -> Plant:
    """Build a plant with the library defaults, optionally overridden.

    ``constants`` overrides are merged into the defaults rather than replacing
    them.
    """
    if name not in PLANT_NAMES:
        raise ValueError(f"unknown plant {name!r}; expected one of {PLANT_NAMES}")
    constants = dict(DEFAULT_CONSTANTS[name])
    constants.update(overrides.pop("constants", {}) or {})
    kwargs = dict(_PLANT_DEFAULTS[name])
    kwargs.update(overrides)
    return Plant(name=name, constants=constants, **kwargs)


_PLANT_DEFAULTS = {
    "pendulum": dict(
        action_low=-2.0,
        action_high=2.0,
        init_center=(np.pi, 0.0),
        init_halfwidth=(0.1, 0.0),
        episode_length=200,
        reward_upper=4000.0,
    ),
    "cartpole": dict(
        action_low=-10.0,
        action_high=10.0,
        init_center=(0.0, 0.0, 0.0, 0.0),
        init_halfwidth=(0.05, 0.05, 0.05, 0.05),
        episode_length=200,
        reward_upper=0.0,
    ),
    "acrobot": dict(
        action_low=-5.0,
        action_high=5.0,
        init_center=(0.0, 0.0, 0.0, 0.0),
        init_halfwidth=(0.1, 0.1, 0.1, 0.1),
        episode_length=400,
        reward_upper=2.0,
    ),
}


# -- continuous-time dynamics -------------------------------------------------
#
# Each function maps (state[..., n], action[...]) -> d state / dt.


def pendulum_deriv(p: np.ndarray, s: np.ndarray, a) -> np.ndarray:
    m, l, g, b = p
    th = s[..., 0]
    w = s[..., 1]
    inertia = m * l * l / 3.0
    dw = (0.5 * m * g * l * np.sin(th) + a - b * w) / inertia
    return np.stack([w, dw], axis=-1)


def cartpole_deriv(p: np.ndarray, s: np.ndarray, a) -> np.ndarray:
    mc, mp, length, g = p
    half = 0.5 * length
    total = mc + mp
    xd = s[..., 1]
    th = s[..., 2]
    thd = s[..., 3]
    sin = np.sin(th)
    cos = np.cos(th)
    tmp = (a + mp * half * thd * thd * sin) / total
    thdd = (g * sin - cos * tmp) / (half * (4.0 / 3.0 - mp * cos * cos / total))
    xdd = tmp - mp * half * thdd * cos / total
    return np.stack([xd, xdd, thd, thdd], axis=-1)


def acrobot_deriv(p: np.ndarray, s: np.ndarray, a) -> np.ndarray:
    m1, m2, l1, lc1, lc2, i1, i2, g = p
    th1 = s[..., 0]
    th2 = s[..., 1]
    w1 = s[..., 2]
    w2 = s[..., 3]
    cos2 = np.cos(th2)
    sin2 = np.sin(th2)
    d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * cos2) + i1 + i2
    d2 = m2 * (lc2 * lc2 + l1 * lc2 * cos2) + i2
    phi2 = m2 * lc2 * g * np.sin(th1 + th2)
    phi1 = (
        -m2 * l1 * lc2 * w2 * w2 * sin2
        - 2.0 * m2 * l1 * lc2 * w2 * w1 * sin2
        + (m1 * lc1 + m2 * l1) * g * np.sin(th1)
        + phi2
    )
    dd2 = (a + d2 / d1 * phi1 - m2 * l1 * lc2 * w1 * w1 * sin2 - phi2) / (
        m2 * lc2 * lc2 + i2 - d2 * d2 / d1
    )
    dd1 = -(d2 * dd2 + phi1) / d1
    return np.stack([w1, w2, dd1, dd2], axis=-1)


DERIVATIVES: dict[str, Callable] = {
    "pendulum": pendulum_deriv,
    "cartpole": cartpole_deriv,
    "acrobot": acrobot_deriv,
}


def rk4(deriv, p, s, a, dt):
    k1 = deriv(p, s, a)
    k2 = deriv(p, s + 0.5 * dt * k1, a)
    k3 = deriv(p, s + 0.5 * dt * k2, a)
    k4 = deriv(p, s + dt * k3, a)
    return s + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step(plant: Plant, s, a) -> np.ndarray:
    """Advance ``s`` by one ``plant.dt`` under action ``a`` (clamped)."""
    s = np.asarray(s, dtype=np.float64)
    if s.shape[-1] != plant.state_dim:
        raise ValueError(f"{plant.name} state must have {plant.state_dim} entries, got {s.shape}")
    if not np.all(np.isfinite(s)):
        raise DivergenceError(f"non-finite {plant.name} state {s}")
    a = np.asarray(a, dtype=np.float64)
    if a.ndim and a.shape[-1] == 1 and a.ndim == s.ndim:
        a = a[..., 0]
    if not np.all(np.isfinite(a)):
        raise DivergenceError(f"non-finite action {a}")
    a = plant.clamp(a)
    return rk4(DERIVATIVES[plant.name], plant.param_vector(), s, a, plant.dt)


def reward(plant: Plant, s, a=None) -> np.ndarray | float:
    """Instant reward of ``s``.  None of the three rewards uses the action."""
    s = np.asarray(s, dtype=np.float64)
    if s.shape[-1] != plant.state_dim:
        raise ValueError(f"{plant.name} state must have {plant.state_dim} entries, got {s.shape}")
    if plant.name == "pendulum":
        th = s[..., 0]
        w = s[..., 1]
        r = -(50.0 * (np.cos(th) - 1.0) ** 2 + w * w) + 4000.0
    elif plant.name == "cartpole":
        r = -(s[..., 0] ** 2 + 500.0 * np.sin(s[..., 2]) ** 2 + s[..., 1] ** 2 + s[..., 3] ** 2)
    else:
        r = np.cos(s[..., 0]) - np.cos(s[..., 0] + s[..., 1])
    return float(r) if np.ndim(r) == 0 else r


def cost(plant: Plant, s) -> np.ndarray | float:
    """Non-negative instant cost: the reward's analytic upper bound minus the reward."""
    return plant.reward_upper - reward(plant, s)


def sample_initial_state(plant: Plant, rng: np.random.Generator) -> np.ndarray:
    center = np.asarray(plant.init_center, dtype=np.float64)
    half = np.asarray(plant.init_halfwidth, dtype=np.float64)
    return center + rng.uniform(-1.0, 1.0, size=center.shape) * half


def pendulum_energy(plant: Plant, s) -> float:
    """Mechanical energy with the potential zeroed at the hanging position."""
    m, l, g, _ = plant.param_vector()
    th, w = np.asarray(s, dtype=np.float64)
    return 0.5 * (m * l * l / 3.0) * w * w + 0.5 * m * g * l * (1.0 + np.cos(th))
