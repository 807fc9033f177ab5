"""Model predictive path integral (MPPI) control.

The controller keeps a rolling sequence of ``T`` optimal actions.  At every
control step it samples ``M`` Gaussian perturbations of that sequence, scores
each perturbed sequence on the plant model, and moves the sequence by the
exponentially weighted average of the perturbations.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from . import env
from ._backend import rollout_costs as _rollout_costs
from .env import Plant

log = logging.getLogger(__name__)

#: cost assigned to rollouts whose state leaves the finite reals
DIVERGENCE_PENALTY = 1e9


@dataclass(frozen=True)
class MppiConfig:
    lam: float
    sigma_eps: float
    horizon: int
    rollouts: int
    random_tail: bool = False

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"temperature must be positive, got {self.lam}")
        if not self.sigma_eps > 0:
            raise ValueError(f"sigma_eps must be positive, got {self.sigma_eps}")
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ValueError("horizon must be a positive integer")
        if int(self.rollouts) != self.rollouts or self.rollouts < 1:
            raise ValueError("rollouts must be a positive integer")


@dataclass
class ControllerState:
    """Rolling optimal action sequence ``a*_t .. a*_{t+T-1}``; starts at zero."""

    actions: np.ndarray

    @classmethod
    def zeros(cls, horizon: int) -> "ControllerState":
        return cls(np.zeros(horizon))


def rollout_cost(plant: Plant, model_state, controls) -> float:
    """Cost of one control sequence: terminal cost plus running costs."""
    controls = np.asarray(controls, dtype=np.float64).reshape(1, -1)
    return float(batch_rollout_costs(plant, model_state, controls)[0])


def batch_rollout_costs(plant: Plant, model_state, controls) -> np.ndarray:
    """Costs of the ``M`` sequences in the ``(M, T)`` array ``controls``."""
    s0 = np.asarray(model_state, dtype=np.float64)
    if s0.shape != (plant.state_dim,):
        raise ValueError(f"expected a {plant.state_dim}-dim state, got {s0.shape}")
    return _rollout_costs(
        plant.plant_id,
        plant.param_vector(),
        plant.dt,
        plant.action_low,
        plant.action_high,
        plant.reward_upper,
        DIVERGENCE_PENALTY,
        s0,
        np.ascontiguousarray(controls, dtype=np.float64),
    )


def compute_weights(costs, coupling, cfg: MppiConfig) -> np.ndarray:
    """Normalised rollout weights.

    The exponent of rollout j is ``-(C_j + lam / sigma^2 * coupling_j) / lam``
    where ``coupling_j = sum_i a*_i . v_i``.  The largest exponent is
    subtracted before exponentiating.  If no exponent is finite the weights
    fall back to uniform and a warning is logged.
    """
    costs = np.asarray(costs, dtype=np.float64)
    coupling = np.asarray(coupling, dtype=np.float64)
    with np.errstate(over="ignore", invalid="ignore"):
        expo = -(costs + cfg.lam / cfg.sigma_eps**2 * coupling) / cfg.lam
    finite = np.isfinite(expo)
    if not finite.any():
        log.warning("all %d rollout exponents are non-finite; using uniform weights", len(expo))
        return np.full(len(expo), 1.0 / len(expo))
    expo = np.where(finite, expo, -np.inf)
    w = np.exp(expo - expo.max())
    return w / w.sum()


def update_actions(actions, weights, perturbations) -> np.ndarray:
    """``a*_i + sum_j w_j eps_i^j`` for every step i of the sequence."""
    return np.asarray(actions, dtype=np.float64) + np.asarray(weights) @ np.asarray(perturbations)


def mpc_step(state: ControllerState, plant: Plant, s, cfg: MppiConfig, rng: np.random.Generator):
    """One receding-horizon step.

    Returns the clamped action to apply and the shifted controller state.  The
    input ``state`` is left untouched.
    """
    a_star = state.actions
    eps = rng.normal(0.0, cfg.sigma_eps, size=(cfg.rollouts, cfg.horizon))
    v = a_star + eps
    costs = batch_rollout_costs(plant, s, v)
    coupling = v @ a_star
    w = compute_weights(costs, coupling, cfg)
    a_star = update_actions(a_star, w, eps)
    action = float(plant.clamp(a_star[0]))
    tail = rng.normal(0.0, cfg.sigma_eps) if cfg.random_tail else 0.0
    shifted = np.empty_like(a_star)
    shifted[:-1] = a_star[1:]
    shifted[-1] = tail
    return action, ControllerState(shifted)


@dataclass
class Trajectory:
    states: np.ndarray  # (n+1, state_dim), initial state first
    actions: np.ndarray  # (n,)
    rewards: np.ndarray  # (n,)
    dt: float

    def to_csv(self, path, state_labels=None):
        """One row per control step: time, state before the action, action, reward."""
        n = len(self.actions)
        dim = self.states.shape[1]
        labels = state_labels or [f"s{i + 1}" for i in range(dim)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "time", *labels, "action", "reward"])
            for i in range(n):
                w.writerow([i, repr(round(i * self.dt, 10)), *map(repr, map(float, self.states[i])),
                            repr(float(self.actions[i])), repr(float(self.rewards[i]))])


@dataclass
class EpisodeResult:
    ret: float
    trajectory: Trajectory
    truncated: bool = False
    steps: int = field(default=0)


def run_episode(plant: Plant, cfg: MppiConfig, n_steps: int, rng: np.random.Generator,
                initial_state=None) -> EpisodeResult:
    """Closed-loop episode: the plant model used by MPPI is the plant itself.

    The return is the sum of rewards of the states reached after each action.
    If the plant diverges the episode stops early and ``truncated`` is set.
    """
    if n_steps < 1:
        raise ValueError("an episode needs at least one step")
    s = env.sample_initial_state(plant, rng) if initial_state is None else np.asarray(initial_state, float)
    ctrl = ControllerState.zeros(cfg.horizon)
    states = [s]
    actions, rewards = [], []
    truncated = False
    for _ in range(n_steps):
        a, ctrl = mpc_step(ctrl, plant, s, cfg, rng)
        with np.errstate(all="ignore"):
            s_next = env.step(plant, s, a)
        if not np.all(np.isfinite(s_next)):
            truncated = True
            break
        r = env.reward(plant, s_next)
        s = s_next
        states.append(s)
        actions.append(a)
        rewards.append(r)
    traj = Trajectory(np.array(states), np.array(actions), np.array(rewards), plant.dt)
    return EpisodeResult(float(np.sum(rewards)), traj, truncated, len(rewards))
