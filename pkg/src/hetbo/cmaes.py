"""A small (mu/mu_w, lambda)-CMA-ES used as the non-BO baseline.

Minimises; the tuning runner hands it the negated scaled return.  Learning
rates follow Hansen's standard defaults for the given dimension and
population size.  Candidates are clipped into the search box and the clipped
points are what the update sees.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import seeding
from .bayesopt import PilotData, RewardScaler, collect_pilot, observe, start_point
from .objectives import Box, Objective

log = logging.getLogger(__name__)

EIGEN_FLOOR = 1e-12


@dataclass
class CmaState:
    mean: np.ndarray
    sigma: float
    cov: np.ndarray
    p_sigma: np.ndarray
    p_c: np.ndarray
    generation: int = 0
    popsize: int = 2
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    best_f: float = np.inf
    best_x: Optional[np.ndarray] = None
    # derived strategy parameters
    weights: np.ndarray = field(default=None, repr=False)
    mu_eff: float = 1.0
    c_sigma: float = 0.0
    d_sigma: float = 0.0
    c_c: float = 0.0
    c_1: float = 0.0
    c_mu: float = 0.0
    chi_n: float = 0.0

    @property
    def dim(self) -> int:
        return len(self.mean)

    @property
    def mu(self) -> int:
        return len(self.weights)


def init_state(mean, sigma0: float = 1.0, popsize: int = 2, box: Optional[Box] = None) -> CmaState:
    mean = np.asarray(mean, dtype=np.float64).copy()
    n = len(mean)
    mu = popsize // 2
    w = np.log((popsize + 1) / 2.0) - np.log(np.arange(1, mu + 1))
    w = w / w.sum()
    mu_eff = 1.0 / np.sum(w**2)
    c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0)
    d_sigma = 1.0 + 2.0 * max(0.0, np.sqrt((mu_eff - 1.0) / (n + 1.0)) - 1.0) + c_sigma
    c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n)
    # small populations get a damped rank-one rate, as in the reference implementation
    c_1 = 2.0 / ((n + 1.3) ** 2 + mu_eff) * min(1.0, popsize / 6.0)
    c_mu = min(1.0 - c_1, 2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0) ** 2 + mu_eff))
    chi_n = np.sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n))
    return CmaState(
        mean=mean, sigma=float(sigma0), cov=np.eye(n), p_sigma=np.zeros(n), p_c=np.zeros(n),
        popsize=popsize,
        lower=None if box is None else box.lo, upper=None if box is None else box.hi,
        weights=w, mu_eff=mu_eff, c_sigma=c_sigma, d_sigma=d_sigma, c_c=c_c, c_1=c_1,
        c_mu=max(c_mu, 0.0), chi_n=chi_n,
    )


def _eig(cov):
    vals, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
    return np.maximum(vals, EIGEN_FLOOR), vecs


def ask(state: CmaState, rng: np.random.Generator) -> np.ndarray:
    """``popsize`` candidates from N(mean, sigma^2 C), clipped into the box."""
    vals, vecs = _eig(state.cov)
    if not np.all(np.isfinite(vals)):
        log.warning("degenerate CMA-ES covariance; resetting to identity")
        state.cov = np.eye(state.dim)
        vals, vecs = np.ones(state.dim), np.eye(state.dim)
    z = rng.standard_normal((state.popsize, state.dim))
    X = state.mean + state.sigma * (z * np.sqrt(vals)) @ vecs.T
    if state.lower is not None:
        X = np.clip(X, state.lower, state.upper)
    return X


def tell(state: CmaState, candidates, fitnesses) -> CmaState:
    """Rank-based update of mean, paths, covariance and step size (in place)."""
    X = np.asarray(candidates, dtype=np.float64)
    f = np.asarray(fitnesses, dtype=np.float64)
    if len(f) != len(X) or not np.all(np.isfinite(f)):
        raise ValueError("need one finite fitness per candidate")
    order = np.argsort(f, kind="stable")
    if f[order[0]] < state.best_f:
        state.best_f = float(f[order[0]])
        state.best_x = X[order[0]].copy()
    n = state.dim
    sel = X[order[: state.mu]]
    old = state.mean
    y = (sel - old) / state.sigma
    y_w = state.weights @ y
    state.mean = old + state.sigma * y_w

    vals, vecs = _eig(state.cov)
    inv_sqrt = vecs @ np.diag(1.0 / np.sqrt(vals)) @ vecs.T
    cs = state.c_sigma
    state.p_sigma = (1 - cs) * state.p_sigma + np.sqrt(cs * (2 - cs) * state.mu_eff) * inv_sqrt @ y_w
    gen = state.generation + 1
    norm_ps = np.linalg.norm(state.p_sigma)
    h_sigma = norm_ps / np.sqrt(1 - (1 - cs) ** (2 * gen)) < (1.4 + 2.0 / (n + 1)) * state.chi_n
    cc = state.c_c
    state.p_c = (1 - cc) * state.p_c + h_sigma * np.sqrt(cc * (2 - cc) * state.mu_eff) * y_w
    delta = (1 - h_sigma) * cc * (2 - cc)
    rank_mu = (y.T * state.weights) @ y
    state.cov = (
        (1 - state.c_1 - state.c_mu + state.c_1 * delta) * state.cov
        + state.c_1 * np.outer(state.p_c, state.p_c)
        + state.c_mu * rank_mu
    )
    vals, vecs = _eig(state.cov)
    cov = (vecs * vals) @ vecs.T
    state.cov = 0.5 * (cov + cov.T)
    state.sigma *= float(np.exp((cs / state.d_sigma) * (norm_ps / state.chi_n - 1)))
    state.generation = gen
    return state


# -- tuning runner -------------------------------------------------------------


@dataclass(frozen=True)
class CmaConfig:
    sigma0: float = 1.0
    popsize: int = 2
    n_evals: int = 30
    n_repeats: int = 5
    start: str = "lower"


@dataclass
class CmaResult:
    x_best: np.ndarray
    y_best: float
    trace: list
    scaler: RewardScaler

    @property
    def best_observed(self) -> np.ndarray:
        return np.maximum.accumulate([r.y for r in self.trace])


def run_cmaes(objective: Objective, cfg: CmaConfig, tree, pilot: Optional[PilotData] = None,
              scaler: Optional[RewardScaler] = None, n_pilot: int = 20) -> CmaResult:
    """Maximise the scaled return with CMA-ES from the predefined start point.

    The pilot sample only fixes the reward scaling, so traces are comparable
    with the BO runs.  Evaluation ``t`` (the start point is ``t = 0``) uses
    the same episode streams as BO iteration ``t``.
    """
    box = objective.box
    if scaler is None:
        if pilot is None:
            pilot = collect_pilot(objective, n_pilot, cfg.n_repeats, tree)
        scaler = RewardScaler.from_values(pilot.means)

    def streams(t):
        return lambda j: tree.rng(seeding.OBSERVE, t, j)

    x0 = start_point(box, cfg.start)
    trace = [observe(objective, x0, cfg.n_repeats, streams(0), scaler, 0)]
    state = init_state(x0, cfg.sigma0, cfg.popsize, box)
    t = 1
    while t <= cfg.n_evals:
        X = ask(state, tree.rng(seeding.CMAES, state.generation))
        fit = []
        for x in X[: cfg.n_evals - t + 1]:
            rec = observe(objective, x, cfg.n_repeats, streams(t), scaler, t)
            trace.append(rec)
            fit.append(-rec.y)
            t += 1
        if len(fit) < len(X):
            break
        tell(state, X, fit)
    best = int(np.argmax([r.y for r in trace]))
    return CmaResult(np.array(trace[best].x), trace[best].y, trace, scaler)
