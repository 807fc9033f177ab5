"""Experiment runners: one-axis sweeps, method comparisons, noise-model plots."""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .. import bayesopt as bo
from .. import cmaes as cma
from .. import noise_model as nm
from .. import seeding
from ..env import make_plant
from ..gp import HETEROSCEDASTIC, HOMOSCEDASTIC
from ..objectives import Box, ControllerObjective, SyntheticObjective
from . import artifacts
from .config import AXES, SYNTHETIC, ConfigError, ExperimentConfig

log = logging.getLogger(__name__)

BO_HETERO = "bo_hetero"
BO_HOMO = "bo_homo"
CMAES = "cmaes"
METHODS = (BO_HETERO, BO_HOMO, CMAES)


# -- synthetic benchmark -------------------------------------------------------
#
# A tall narrow peak in the quiet part of the box and a lower, wider bump where
# the noise is large.  A surrogate that underestimates the noise on the right
# is easily lured by lucky draws from the second bump.


def synthetic_mean(x) -> np.ndarray | float:
    x = np.asarray(x, dtype=np.float64)
    x = x[..., 0] if x.ndim and x.shape[-1] == 1 else x
    out = 30.0 * np.exp(-((x - 0.2) ** 2) / (2 * 0.1**2)) + 20.0 * np.exp(-((x - 0.75) ** 2) / (2 * 0.15**2))
    return float(out) if np.ndim(out) == 0 else out


def synthetic_noise_std(x) -> np.ndarray | float:
    x = np.asarray(x, dtype=np.float64)
    x = x[..., 0] if x.ndim and x.shape[-1] == 1 else x
    out = 1.0 + 30.0 * x**2
    return float(out) if np.ndim(out) == 0 else out


def synthetic_optimum(resolution: int = 100001) -> tuple[float, float]:
    grid = np.linspace(0.0, 1.0, resolution)
    v = synthetic_mean(grid)
    k = int(np.argmax(v))
    return float(grid[k]), float(v[k])


# -- objectives ----------------------------------------------------------------


def make_box(cfg: ExperimentConfig) -> Box:
    return Box(cfg.lower, cfg.upper, cfg.names)


def make_objective(cfg: ExperimentConfig, box: Optional[Box] = None):
    box = box or make_box(cfg)
    if cfg.task == SYNTHETIC:
        return SyntheticObjective(synthetic_mean, synthetic_noise_std, box)
    plant = make_plant(cfg.task)
    return ControllerObjective(plant, box, cfg.horizon, cfg.rollouts, cfg.episode_length)


def true_value(cfg: ExperimentConfig, x) -> float:
    """Noise-free objective where it is known in closed form, else NaN."""
    return synthetic_mean(x) if cfg.task == SYNTHETIC else float("nan")


def simple_regret(cfg: ExperimentConfig, x) -> float:
    if cfg.task != SYNTHETIC:
        return float("nan")
    return synthetic_optimum()[1] - synthetic_mean(x)


# -- grid sweep ----------------------------------------------------------------


@dataclass
class SweepPoint:
    index: int
    x: tuple
    returns: tuple = ()
    error: str = ""

    @property
    def mean(self) -> float:
        return float(np.mean(self.returns)) if self.returns else float("nan")

    @property
    def std(self) -> float:
        return float(np.std(self.returns, ddof=1)) if len(self.returns) > 1 else float("nan")


def _axis_index(cfg, axis) -> int:
    if axis in cfg.names:
        return cfg.names.index(axis)
    raise ConfigError(f"axis {axis!r} not in {cfg.names}")


def sweep_points(cfg: ExperimentConfig, axis: str, grid_size: int) -> np.ndarray:
    """Uniform grid on ``axis``; the other coordinates sit at the task optimum."""
    if grid_size < 1:
        raise ConfigError("grid size must be positive")
    k = _axis_index(cfg, axis)
    lo, hi = cfg.lower[k], cfg.upper[k]
    values = np.array([0.5 * (lo + hi)]) if grid_size == 1 else np.linspace(lo, hi, grid_size)
    X = np.tile(np.asarray(cfg.optimum, dtype=np.float64), (grid_size, 1))
    X[:, k] = values
    return X


def run_grid_sweep(cfg: ExperimentConfig, axis: str, grid_size: int, repeats: int,
                   out_path: Optional[str] = None) -> list[SweepPoint]:
    """Episode returns on a one-axis grid; per-point failures are recorded and skipped."""
    if repeats < 1:
        raise ConfigError("repeats must be positive")
    obj = make_objective(cfg)
    tree = seeding.SeedTree(cfg.master_seed)
    k = _axis_index(cfg, axis)
    points = []
    for i, x in enumerate(sweep_points(cfg, axis, grid_size)):
        try:
            g, _ = obj.evaluate(x, [tree.rng(seeding.EPISODE, k, i, j) for j in range(repeats)])
            points.append(SweepPoint(i, tuple(map(float, x)), tuple(map(float, g))))
        except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            log.warning("sweep point %d failed: %s", i, exc)
            points.append(SweepPoint(i, tuple(map(float, x)), error=f"{type(exc).__name__}: {exc}"))
    if out_path:
        write_sweep(out_path, cfg, points, repeats)
    return points


def write_sweep(path, cfg, points, repeats):
    header = ["index", *cfg.names, "mean", "std", "n", *[f"g{j + 1}" for j in range(repeats)], "error"]
    rows = []
    for p in points:
        g = list(p.returns) + [""] * (repeats - len(p.returns))
        rows.append([p.index, *p.x, p.mean, p.std, len(p.returns), *g, p.error])
    artifacts.write_csv(path, header, rows)
    stem = os.path.splitext(path)[0]
    ok = [p for p in points if p.returns]
    if ok:
        axis_k = int(np.argmax(np.ptp([p.x for p in ok], axis=0))) if len(ok) > 1 else 0
        x = np.array([p.x[axis_k] for p in ok])
        m = np.array([p.mean for p in ok])
        s = np.nan_to_num(np.array([p.std for p in ok]))
        scatter = (np.repeat(x, [len(p.returns) for p in ok]), np.concatenate([p.returns for p in ok]))
        artifacts.band_plot(stem + ".svg", x, [("mean +/- 2 std", m, m - 2 * s, m + 2 * s)],
                            title=f"{cfg.task} sweep", xlabel=cfg.names[axis_k], ylabel="return",
                            scatter=scatter)


# -- comparisons ---------------------------------------------------------------


@dataclass
class MethodRun:
    method: str
    seed: int
    trace: list
    x_best: np.ndarray
    incumbent_y: float
    regret: float

    @property
    def best_observed(self) -> np.ndarray:
        return np.maximum.accumulate([r.y for r in self.trace])


@dataclass
class Comparison:
    labels: list
    runs: dict  # label -> list[MethodRun]
    failures: list = field(default_factory=list)

    def curves(self, label) -> np.ndarray:
        runs = self.runs[label]
        n = min(len(r.trace) for r in runs)
        return np.array([r.best_observed[:n] for r in runs])

    def summary(self, label):
        c = self.curves(label)
        m = c.mean(axis=0)
        s = c.std(axis=0, ddof=1) if len(c) > 1 else np.zeros_like(m)
        return m, s


def _labels(methods):
    seen, out = {}, []
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}; expected one of {METHODS}")
        seen[m] = seen.get(m, 0) + 1
        out.append(m if seen[m] == 1 else f"{m}_{seen[m]}")
    return out


def run_method(cfg: ExperimentConfig, method: str, seed: int, pilot: Optional[bo.PilotData] = None,
               objective=None) -> MethodRun:
    objective = objective or make_objective(cfg)
    tree = seeding.SeedTree(cfg.master_seed).child(seed)
    if pilot is None:
        pilot = bo.collect_pilot(objective, cfg.bo.n_pilot, cfg.bo.n_repeats, tree)
    if method == CMAES:
        ccfg = replace(cfg.cmaes, n_repeats=cfg.bo.n_repeats, n_evals=cfg.bo.n_iter)
        res = cma.run_cmaes(objective, ccfg, tree, pilot=pilot)
        return MethodRun(method, seed, res.trace, res.x_best, res.y_best, simple_regret(cfg, res.x_best))
    mode = HETEROSCEDASTIC if method == BO_HETERO else HOMOSCEDASTIC
    res = bo.run_bo(objective, replace(cfg.bo, mode=mode), tree, pilot=pilot)
    if res.aborted:
        raise RuntimeError(res.aborted)
    return MethodRun(method, seed, res.trace, res.x_best, res.g_best, simple_regret(cfg, res.x_best))


def run_comparison(cfg: ExperimentConfig, methods: Sequence[str], seeds: Optional[Sequence[int]] = None,
                   out_dir: Optional[str] = None) -> Comparison:
    """Run every method on every seed index with shared pilot data and episode streams."""
    seeds = tuple(cfg.seeds if seeds is None else seeds)
    if not methods or not seeds:
        raise ConfigError("need at least one method and one seed")
    labels = _labels(methods)
    objective = make_objective(cfg)
    runs = {lab: [] for lab in labels}
    failures = []
    for seed in seeds:
        tree = seeding.SeedTree(cfg.master_seed).child(seed)
        pilot = bo.collect_pilot(objective, cfg.bo.n_pilot, cfg.bo.n_repeats, tree)
        for lab, m in zip(labels, methods):
            try:
                runs[lab].append(run_method(cfg, m, seed, pilot, objective))
            except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
                log.warning("%s failed on seed %d: %s", lab, seed, exc)
                failures.append((lab, seed, f"{type(exc).__name__}: {exc}"))
    runs = {k: v for k, v in runs.items() if v}
    comp = Comparison([lab for lab in labels if lab in runs], runs, failures)
    if out_dir:
        write_comparison(out_dir, cfg, comp)
    return comp


def write_comparison(out_dir, cfg, comp: Comparison):
    for lab in comp.labels:
        for r in comp.runs[lab]:
            artifacts.write_trace(os.path.join(out_dir, f"trace_{lab}_seed{r.seed}.csv"), r.trace, cfg.names,
                                  cfg.record_wall_time)
    rows, series = [], []
    x = None
    for lab in comp.labels:
        m, s = comp.summary(lab)
        n = len(comp.runs[lab])
        x = np.arange(len(m))
        rows += [[lab, t, m[t], s[t], m[t] - 2 * s[t], m[t] + 2 * s[t], n] for t in range(len(m))]
        series.append((lab, m, m - 2 * s, m + 2 * s))
    artifacts.write_csv(os.path.join(out_dir, "summary.csv"),
                        ["method", "iteration", "mean_best", "std_best", "lower", "upper", "n_seeds"], rows)
    final = [[r.method, lab, r.seed, *r.x_best, r.incumbent_y, r.best_observed[-1], r.regret]
             for lab in comp.labels for r in comp.runs[lab]]
    artifacts.write_csv(os.path.join(out_dir, "final.csv"),
                        ["method", "label", "seed", *cfg.names, "incumbent_y", "best_observed", "regret"], final)
    artifacts.write_csv(os.path.join(out_dir, "failures.csv"), ["label", "seed", "error"], comp.failures)
    if series:
        artifacts.band_plot(os.path.join(out_dir, "summary.svg"), x, series, title=f"{cfg.task}: best observed",
                            xlabel="iteration", ylabel="scaled return")


# -- noise model plots ---------------------------------------------------------


@dataclass
class NoiseFit:
    X: np.ndarray  # (n, 1) sample locations
    g: np.ndarray  # (n,) per-episode returns
    trend: nm.TrendModel
    model: nm.NoiseModel


def fit_noise_samples(X, g, lower, upper, degree=10, features=nm.POLYNOMIAL, rng=None) -> NoiseFit:
    X = np.asarray(X, dtype=np.float64).reshape(len(g), -1)
    g = np.asarray(g, dtype=np.float64)
    if features == nm.KERNEL:
        fmap = nm.kernel_map(lower, upper, X, rng=rng)
    else:
        fmap = nm.polynomial_map(lower, upper, degree)
    trend = nm.fit_trend(X, g, fmap)
    return NoiseFit(X, g, trend, nm.fit_noise(X, g, trend))


def noise_from_sweep(cfg: ExperimentConfig, points: Sequence[SweepPoint], axis: str, degree=10,
                     features=nm.POLYNOMIAL) -> NoiseFit:
    k = _axis_index(cfg, axis)
    ok = [p for p in points if p.returns]
    if len(ok) < 2:
        raise ConfigError("too few successful sweep points to fit a noise model")
    X = np.concatenate([[p.x[k]] * len(p.returns) for p in ok])[:, None]
    g = np.concatenate([p.returns for p in ok])
    rng = seeding.SeedTree(cfg.master_seed).rng(seeding.FIT, 2)
    return fit_noise_samples(X, g, (cfg.lower[k],), (cfg.upper[k],), degree, features, rng)


def export_noise_plot(model: nm.NoiseModel, trend: nm.TrendModel, samples, prefix: str, lower=None,
                      upper=None, grid_size: int = 200, label: str = "x") -> dict:
    """Grid of trend and trend +/- 2 sigma, plus the raw samples, as CSV and SVG.

    ``samples`` is ``(X, g)``; either may be empty.  The grid spans the feature
    map's box unless ``lower``/``upper`` are given (1-D models only).
    """
    fmap = model.feature_map
    lo = float(np.ravel(fmap.lower if lower is None else lower)[0])
    hi = float(np.ravel(fmap.upper if upper is None else upper)[0])
    if len(np.ravel(fmap.lower)) != 1:
        raise ConfigError("noise plots are only defined for one-dimensional inputs")
    x = np.linspace(lo, hi, grid_size)
    centre = trend.predict(x[:, None])
    sd = model.noise_std(x[:, None])
    paths = {
        "grid": artifacts.write_csv(prefix + "_grid.csv", [label, "trend", "sigma", "lower", "upper"],
                                    zip(x, centre, sd, centre - 2 * sd, centre + 2 * sd)),
    }
    Xs, gs = (np.ravel(samples[0]), np.ravel(samples[1])) if samples is not None else (np.array([]), np.array([]))
    paths["samples"] = artifacts.write_csv(prefix + "_samples.csv", [label, "g"], zip(Xs, gs))
    paths["svg"] = artifacts.band_plot(prefix + ".svg", x, [("trend +/- 2 sigma", centre, centre - 2 * sd,
                                                              centre + 2 * sd)],
                                       title="noise model", xlabel=label, ylabel="return",
                                       scatter=(Xs, gs) if len(Xs) else None)
    return paths
