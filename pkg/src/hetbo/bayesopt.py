"""Bayesian optimisation of controller hyper-parameters.

The loop works in the unit cube of the search box.  An offline pilot sample
fixes the reward scaling, the GP hyper-parameters and (heteroscedastic mode)
the noise model; the online loop then starts from a single predefined point
and only re-conditions the GP on new data.
"""
from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from . import gp as gplib
from . import noise_model as nm
from . import seeding
from .gp import HETEROSCEDASTIC, HOMOSCEDASTIC, GaussianProcess, GpHyperparams
from .objectives import Box, Objective

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BoConfig:
    kappa: float = 1.2
    n_iter: int = 30
    n_repeats: int = 5
    n_pilot: int = 20
    mode: str = HETEROSCEDASTIC
    acq_starts: int = 32
    prior_mean: float = 50.0
    degree: int = 10
    features: str = nm.POLYNOMIAL
    start: str = "lower"

    def __post_init__(self):
        if self.kappa < 0:
            raise ValueError("kappa must be non-negative")
        if self.n_iter < 0 or self.n_repeats < 1 or self.n_pilot < 2 or self.acq_starts < 1:
            raise ValueError("iteration, repeat, pilot and start counts must be positive")
        if self.mode not in gplib.MODES:
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class ObservationRecord:
    iteration: int
    x: tuple
    returns: tuple  # raw per-episode returns
    y: float  # mean scaled return
    mu: float = float("nan")  # posterior mean at the query, before observing it
    sigma: float = float("nan")
    truncated: int = 0
    wall_time: float = 0.0

    @property
    def raw_mean(self) -> float:
        return float(np.mean(self.returns))


@dataclass(frozen=True)
class RewardScaler:
    """Affine map of returns onto [0, 100] fixed by the pilot sample's range."""

    low: float
    high: float

    @classmethod
    def from_values(cls, values) -> "RewardScaler":
        lo, hi = float(np.min(values)), float(np.max(values))
        if not hi > lo:
            hi = lo + 1.0
        return cls(lo, hi)

    def __call__(self, g):
        return 100.0 * (np.asarray(g, dtype=np.float64) - self.low) / (self.high - self.low)

    def inverse(self, y):
        return self.low + np.asarray(y, dtype=np.float64) * (self.high - self.low) / 100.0


@dataclass
class PilotData:
    X: np.ndarray  # (n, d) raw points
    returns: np.ndarray  # (n, n_repeats) raw episode returns

    @property
    def means(self) -> np.ndarray:
        return self.returns.mean(axis=1)


def observe(objective: Objective, x, n_repeats: int, streams, scaler: Optional[RewardScaler] = None,
            iteration: int = 0) -> ObservationRecord:
    """Average of ``n_repeats`` independent episodes at ``x``.

    ``streams(j)`` must return the generator for episode ``j``.  Without a
    scaler ``y`` is the raw mean return.
    """
    x = np.asarray(x, dtype=np.float64)
    if not objective.box.contains(x):
        raise ValueError(f"query {x} outside the search box")
    t0 = time.perf_counter()
    g, truncated = objective.evaluate(x, [streams(j) for j in range(n_repeats)])
    y = float(np.mean(scaler(g))) if scaler is not None else float(np.mean(g))
    return ObservationRecord(iteration, tuple(map(float, x)), tuple(map(float, g)), y,
                             truncated=truncated, wall_time=time.perf_counter() - t0)


def pilot_design(box: Box, n_points: int, rng) -> np.ndarray:
    """Box corners followed by scrambled Sobol points, ``n_points`` in total (unit cube)."""
    corners = np.array(np.meshgrid(*[[0.0, 1.0]] * box.dim, indexing="ij")).reshape(box.dim, -1).T
    corners = corners[:n_points]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # non power-of-two Sobol sizes
        fill = qmc.Sobol(box.dim, scramble=True, seed=rng).random(n_points - len(corners))
    return np.vstack([corners, fill])


def collect_pilot(objective: Objective, n_points: int, n_repeats: int, tree) -> PilotData:
    """Offline sample: corners plus Sobol points, each observed ``n_repeats`` times."""
    box = objective.box
    X = box.from_unit(pilot_design(box, n_points, tree.rng(seeding.PILOT, 0)))
    R = np.empty((n_points, n_repeats))
    for i, x in enumerate(X):
        R[i], _ = objective.evaluate(x, [tree.rng(seeding.PILOT, 1, i, j) for j in range(n_repeats)])
    return PilotData(X, R)


def start_point(box: Box, start) -> np.ndarray:
    if isinstance(start, str):
        if start == "lower":
            return box.lo.copy()
        if start == "upper":
            return box.hi.copy()
        if start == "center":
            return 0.5 * (box.lo + box.hi)
        raise ValueError(f"unknown start {start!r}")
    return box.clip(np.asarray(start, dtype=np.float64))


# -- acquisition ---------------------------------------------------------------


def ucb(model: GaussianProcess, x, kappa: float) -> np.ndarray | float:
    """mu(x) + kappa * sigma(x) of the latent function."""
    x = np.asarray(x, dtype=np.float64)
    post = model.posterior(x)
    val = post.mean + kappa * np.sqrt(post.var)
    return float(val[0]) if x.ndim <= 1 and model.kernel.dim == x.size else val


def _neg_ucb_and_grad(u, model, kappa):
    mu, var, dmu, dvar = model.posterior_with_grad(u)
    sd = np.sqrt(var)
    dsd = dvar / (2.0 * sd) if sd > 1e-12 else np.zeros_like(dvar)
    return -(mu + kappa * sd), -(dmu + kappa * dsd)


def maximize_acquisition(model: GaussianProcess, kappa: float, rng: np.random.Generator,
                         n_starts: int = 32, dim: Optional[int] = None) -> np.ndarray:
    """Multi-start bounded maximisation of UCB over the unit cube.

    Each of ``n_starts`` uniform starts is refined with L-BFGS-B on the
    analytic gradient.  The best of all starts and refined points is returned,
    ties going to the lowest start index.
    """
    d = model.kernel.dim if dim is None else dim
    starts = rng.uniform(0.0, 1.0, size=(n_starts, d))
    start_vals = np.atleast_1d(ucb(model, starts, kappa))
    best_u, best_v = starts[0], -np.inf
    bounds = [(0.0, 1.0)] * d
    for s, sv in zip(starts, start_vals):
        cand, cv = s, sv
        res = minimize(_neg_ucb_and_grad, s, args=(model, kappa), jac=True, method="L-BFGS-B",
                       bounds=bounds)
        u = np.clip(res.x, 0.0, 1.0)
        v = float(np.atleast_1d(ucb(model, u[None, :], kappa))[0])
        if v > cv:
            cand, cv = u, v
        if cv > best_v:
            best_u, best_v = cand, cv
    return np.array(best_u, dtype=np.float64)


# -- model fitting -------------------------------------------------------------


@dataclass
class SurrogateSetup:
    mode: str
    theta: GpHyperparams
    noise_model: Optional[nm.NoiseModel]
    trend: Optional[nm.TrendModel]
    scaler: RewardScaler
    fit_improved: bool = True


def fit_surrogate(pilot: PilotData, box: Box, cfg: BoConfig, tree, theta: Optional[GpHyperparams] = None,
                  noise_model: Optional[nm.NoiseModel] = None) -> SurrogateSetup:
    """Scale the pilot returns and fit the GP (and noise model) on them.

    Supplying ``theta`` skips the marginal-likelihood fit; supplying
    ``noise_model`` skips the trend/residual fit.
    """
    scaler = RewardScaler.from_values(pilot.means)
    U = box.to_unit(pilot.X)
    y = scaler(pilot.means)
    G = scaler(pilot.returns)
    n_r = pilot.returns.shape[1]
    trend = None
    if cfg.mode == HETEROSCEDASTIC and noise_model is None:
        unit = (0.0,) * box.dim, (1.0,) * box.dim
        Ur = np.repeat(U, n_r, axis=0)
        if cfg.features == nm.KERNEL:
            fmap = nm.kernel_map(*unit, Ur, rng=tree.rng(seeding.FIT, 1))
        else:
            fmap = nm.polynomial_map(*unit, cfg.degree)
        trend = nm.fit_trend(Ur, G.ravel(), fmap)
        noise_model = nm.fit_noise(Ur, G.ravel(), trend)
    improved = True
    if theta is None:
        spread = float(np.std(y)) or 1.0
        noise0 = noise_model.z if cfg.mode == HETEROSCEDASTIC else max(float(np.mean(np.std(G, axis=1))), 1e-3)
        if cfg.mode == HETEROSCEDASTIC and noise0 <= 0:
            noise0 = 1e-3
        theta0 = GpHyperparams(spread, (0.3,) * box.dim, noise0)
        fit = gplib.fit_hyperparams(U, y, theta0, cfg.mode, noise_model, cfg.prior_mean, 1.0 / n_r,
                                    rng=tree.rng(seeding.FIT, 0))
        theta, improved = fit.theta, fit.improved
    if cfg.mode == HETEROSCEDASTIC:
        noise_model = noise_model.with_scale(theta.noise)
    return SurrogateSetup(cfg.mode, theta, noise_model, trend, scaler, improved)


# -- main loop -----------------------------------------------------------------


@dataclass
class BoResult:
    x_best: np.ndarray
    g_best: float  # posterior mean (scaled) at the incumbent
    trace: list
    setup: SurrogateSetup
    model: GaussianProcess
    aborted: Optional[str] = None

    @property
    def best_observed(self) -> np.ndarray:
        return np.maximum.accumulate([r.y for r in self.trace])


def _gp_for(records: Sequence[ObservationRecord], box: Box, setup: SurrogateSetup, cfg: BoConfig):
    U = box.to_unit(np.array([r.x for r in records]))
    y = np.array([r.y for r in records])
    return gplib.build_gp(setup.theta, U, y, setup.mode, setup.noise_model, cfg.prior_mean,
                          1.0 / cfg.n_repeats)


def run_bo(objective: Objective, cfg: BoConfig, tree, pilot: Optional[PilotData] = None,
           theta: Optional[GpHyperparams] = None, noise_model: Optional[nm.NoiseModel] = None,
           setup: Optional[SurrogateSetup] = None) -> BoResult:
    """Pilot fit, then ``cfg.n_iter`` UCB queries from the predefined start point.

    ``tree`` addresses the random streams (see :mod:`hetbo.seeding`).  The
    incumbent is the queried point with the highest posterior mean.
    """
    box = objective.box
    if setup is None:
        if pilot is None:
            pilot = collect_pilot(objective, cfg.n_pilot, cfg.n_repeats, tree)
        setup = fit_surrogate(pilot, box, cfg, tree, theta, noise_model)
    if setup.mode != cfg.mode:
        raise ValueError("surrogate setup and config disagree on the noise mode")

    def streams(t):
        return lambda j: tree.rng(seeding.OBSERVE, t, j)

    x0 = start_point(box, cfg.start)
    prior = GaussianProcess(setup.theta.kernel, cfg.prior_mean)
    first = observe(objective, x0, cfg.n_repeats, streams(0), setup.scaler, 0)
    post0 = prior.posterior(box.to_unit(x0)[None, :])
    first.mu, first.sigma = float(post0.mean[0]), float(np.sqrt(post0.var[0]))
    trace = [first]
    aborted = None
    model = _gp_for(trace, box, setup, cfg)
    for t in range(1, cfg.n_iter + 1):
        try:
            model = _gp_for(trace, box, setup, cfg)
        except gplib.IllConditionedError as exc:
            aborted = f"GP failure at iteration {t}: {exc}"
            log.error(aborted)
            break
        u = maximize_acquisition(model, cfg.kappa, tree.rng(seeding.ACQUISITION, t), cfg.acq_starts)
        post = model.posterior(u[None, :])
        rec = observe(objective, box.from_unit(u), cfg.n_repeats, streams(t), setup.scaler, t)
        rec.mu, rec.sigma = float(post.mean[0]), float(np.sqrt(post.var[0]))
        trace.append(rec)
    if aborted is None:
        model = _gp_for(trace, box, setup, cfg)
    U = box.to_unit(np.array([r.x for r in trace]))
    mu = model.posterior(U).mean
    best = int(np.argmax(mu))
    return BoResult(np.array(trace[best].x), float(mu[best]), trace, setup, model, aborted)
