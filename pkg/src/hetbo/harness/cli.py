"""Command-line entry point.

Every subcommand writes CSV artifacts (plus an SVG where a plot makes sense)
into ``--out``.  On failure a single JSON line ``{"error": <category>,
"message": ...}`` goes to stderr and the exit code identifies the category.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from dataclasses import replace

import numpy as np

from .. import bayesopt as bo
from .. import mppi, seeding
from ..env import DivergenceError, make_plant
from ..gp import IllConditionedError
from . import artifacts
from .config import SYNTHETIC, TASKS, ConfigError, ExperimentConfig, load_config
from .experiments import (METHODS, export_noise_plot, make_objective, noise_from_sweep, run_comparison,
                          run_grid_sweep, run_method)

EXIT_CODES = {
    "usage": 2,
    "config": 3,
    "io": 4,
    "numerical": 5,
    "runtime": 1,
}


class CliError(Exception):
    def __init__(self, category, message):
        super().__init__(message)
        self.category = category


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message)


def _common(p):
    p.add_argument("--config", help="experiment config (JSON); flags override it")
    p.add_argument("--task", choices=TASKS)
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--wall-time", action="store_true", help="record wall time in traces (not reproducible)")


def _loop_flags(p):
    p.add_argument("--iterations", type=int)
    p.add_argument("--repeats", type=int, help="episodes per observation")
    p.add_argument("--pilot", type=int, help="pilot sample size")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="hetbo", description="Tune MPPI hyper-parameters with heteroscedastic BO.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sweep", help="one-axis grid sweep of episode returns")
    _common(p)
    p.add_argument("--axis", default=None, help="lambda or sigma_eps (x for the synthetic task)")
    p.add_argument("--grid", type=int, default=15)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--rollouts", type=int, help="override the task's MPPI rollout count")

    p = sub.add_parser("compare", help="compare methods over paired seeds")
    _common(p)
    _loop_flags(p)
    p.add_argument("--methods", default=",".join(METHODS), help="comma-separated subset of " + ",".join(METHODS))
    p.add_argument("--seeds", type=int, help="number of seed indices (0..n-1)")

    p = sub.add_parser("fit-noise", help="fit trend and noise model on a sweep and export the band")
    _common(p)
    p.add_argument("--axis", default=None)
    p.add_argument("--grid", type=int, default=15)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--degree", type=int, default=10)
    p.add_argument("--features", choices=("polynomial", "kernel"), default="polynomial")
    p.add_argument("--samples", help="CSV with columns x,g to fit instead of running a sweep")

    for name, helptext in (("bo", "one BO run"), ("cmaes", "one CMA-ES run")):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        _loop_flags(p)
        p.add_argument("--seed-index", type=int, default=0)
        if name == "bo":
            p.add_argument("--mode", choices=("heteroscedastic", "homoscedastic"), default="heteroscedastic")

    p = sub.add_parser("episode", help="one MPPI episode, trajectory as CSV")
    _common(p)
    p.add_argument("--lam", type=float)
    p.add_argument("--sigma-eps", type=float)
    p.add_argument("--steps", type=int)
    return ap


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig(task=args.task or "pendulum")
    if args.task and args.task != cfg.task:
        d = cfg.to_dict()
        for k in ("horizon", "rollouts", "episode_length", "lower", "upper", "optimum"):
            d[k] = None
        d["task"] = args.task
        cfg = ExperimentConfig.from_dict(d)
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.out:
        changes["output_dir"] = args.out
    if args.wall_time:
        changes["record_wall_time"] = True
    bo_changes = {}
    for flag, key in (("iterations", "n_iter"), ("pilot", "n_pilot")):
        v = getattr(args, flag, None)
        if v is not None:
            bo_changes[key] = v
    if args.command in ("compare", "bo", "cmaes") and args.repeats is not None:
        bo_changes["n_repeats"] = args.repeats
    if getattr(args, "mode", None):
        bo_changes["mode"] = args.mode
    if bo_changes:
        try:
            changes["bo"] = replace(cfg.bo, **bo_changes)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if getattr(args, "seeds", None) is not None:
        changes["seeds"] = tuple(range(args.seeds))
    if getattr(args, "rollouts", None) is not None:
        changes["rollouts"] = args.rollouts
    return cfg.replace(**changes) if changes else cfg


def _write_config(cfg, out):
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "config.json"), "w") as fh:
        fh.write(cfg.dumps())


def cmd_sweep(args, cfg):
    axis = args.axis or cfg.names[0]
    path = os.path.join(cfg.output_dir, f"sweep_{cfg.task}_{axis}.csv")
    points = run_grid_sweep(cfg, axis, args.grid, args.repeats, path)
    failed = sum(1 for p in points if p.error)
    return {"csv": path, "points": len(points), "failed": failed}


def cmd_compare(args, cfg):
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    comp = run_comparison(cfg, methods, out_dir=cfg.output_dir)
    out = {"summary": os.path.join(cfg.output_dir, "summary.csv"), "failures": len(comp.failures)}
    for lab in comp.labels:
        m, _ = comp.summary(lab)
        out[lab] = float(m[-1])
    return out


def _read_samples(path):
    header, rows = artifacts.read_csv(path)
    if len(header) < 2:
        raise ConfigError("samples CSV needs two columns: x, g")
    data = np.array([[float(r[0]), float(r[1])] for r in rows if r])
    if len(data) < 2:
        raise ConfigError("samples CSV has fewer than two rows")
    return data[:, :1], data[:, 1]


def cmd_fit_noise(args, cfg):
    from .experiments import fit_noise_samples

    axis = args.axis or ("x" if args.samples else cfg.names[0])
    stem = "noise_samples" if args.samples else f"noise_{cfg.task}_{axis}"
    prefix = os.path.join(cfg.output_dir, stem)
    if args.samples:
        X, g = _read_samples(args.samples)
        lo, hi = float(X.min()), float(X.max())
        if not hi > lo:
            raise ConfigError("samples span a single input value")
        fit = fit_noise_samples(X, g, (lo,), (hi,), args.degree, args.features,
                                seeding.SeedTree(cfg.master_seed).rng(seeding.FIT, 2))
    else:
        points = run_grid_sweep(cfg, axis, args.grid, args.repeats, prefix + "_sweep.csv")
        fit = noise_from_sweep(cfg, points, axis, args.degree, args.features)
    paths = export_noise_plot(fit.model, fit.trend, (fit.X, fit.g), prefix, label=axis)
    with open(prefix + "_model.json", "w") as fh:
        json.dump({"noise_model": fit.model.to_dict(), "trend": fit.trend.to_dict()}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return {"grid": paths["grid"], "z": fit.model.z, "zeta": fit.model.zeta}


def cmd_bo(args, cfg):
    method = "bo_hetero" if cfg.bo.mode == "heteroscedastic" else "bo_homo"
    objective = make_objective(cfg)
    tree = seeding.SeedTree(cfg.master_seed).child(args.seed_index)
    pilot = bo.collect_pilot(objective, cfg.bo.n_pilot, cfg.bo.n_repeats, tree)
    res = bo.run_bo(objective, cfg.bo, tree, pilot=pilot)
    path = os.path.join(cfg.output_dir, f"trace_{method}_seed{args.seed_index}.csv")
    artifacts.write_trace(path, res.trace, cfg.names, cfg.record_wall_time)
    snap = {
        "setup": {
            "mode": res.setup.mode,
            "theta": res.setup.theta.to_dict(),
            "noise_model": res.setup.noise_model.to_dict() if res.setup.noise_model else None,
            "scaler": {"low": res.setup.scaler.low, "high": res.setup.scaler.high},
        },
        "gp": res.model.to_dict(),
        "x_best": list(map(float, res.x_best)),
        "aborted": res.aborted,
    }
    with open(os.path.join(cfg.output_dir, f"snapshot_{method}_seed{args.seed_index}.json"), "w") as fh:
        json.dump(snap, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if res.aborted:
        raise CliError("numerical", res.aborted)
    return {"trace": path, "x_best": list(map(float, res.x_best)), "g_best": res.g_best}


def cmd_cmaes(args, cfg):
    run = run_method(cfg, "cmaes", args.seed_index)
    path = os.path.join(cfg.output_dir, f"trace_cmaes_seed{args.seed_index}.csv")
    artifacts.write_trace(path, run.trace, cfg.names, cfg.record_wall_time)
    return {"trace": path, "x_best": list(map(float, run.x_best)), "best_y": run.incumbent_y}


def cmd_episode(args, cfg):
    if cfg.task == SYNTHETIC:
        raise ConfigError("episodes need a control task")
    plant = make_plant(cfg.task)
    lam = cfg.optimum[0] if args.lam is None else args.lam
    sig = cfg.optimum[1] if args.sigma_eps is None else args.sigma_eps
    try:
        mcfg = mppi.MppiConfig(lam, sig, cfg.horizon, cfg.rollouts)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    steps = args.steps or cfg.episode_length
    res = mppi.run_episode(plant, mcfg, steps, seeding.SeedTree(cfg.master_seed).rng(seeding.EPISODE, 0))
    os.makedirs(cfg.output_dir, exist_ok=True)
    path = os.path.join(cfg.output_dir, f"episode_{cfg.task}.csv")
    res.trajectory.to_csv(path)
    return {"csv": path, "return": res.ret, "truncated": res.truncated, "steps": res.steps}


COMMANDS = {
    "sweep": cmd_sweep,
    "compare": cmd_compare,
    "fit-noise": cmd_fit_noise,
    "bo": cmd_bo,
    "cmaes": cmd_cmaes,
    "episode": cmd_episode,
}


def _fail(category, message) -> int:
    print(json.dumps({"error": category, "message": str(message)}), file=sys.stderr)
    return EXIT_CODES[category]


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except CliError as exc:
        return _fail(exc.category, exc)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore")
    try:
        cfg = _config(args)
        _write_config(cfg, cfg.output_dir)
        result = COMMANDS[args.command](args, cfg)
    except CliError as exc:
        return _fail(exc.category, exc)
    except ConfigError as exc:
        return _fail("config", exc)
    except OSError as exc:
        return _fail("io", exc)
    except (IllConditionedError, DivergenceError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return _fail("numerical", exc)
    except Exception as exc:  # noqa: BLE001 - last-resort category for the caller
        return _fail("runtime", f"{type(exc).__name__}: {exc}")
    print(json.dumps(result, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
