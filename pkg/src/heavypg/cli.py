"""Experiment harness: structured configs, seeded batch execution, CSV artifacts.

One JSON config file fully describes an experiment; re-running a saved config
reproduces every artifact byte-for-byte except wall-clock columns and the
timestamps kept in ``metadata.json``.  Subcommands:

    train        policy-gradient training curves over a seed list
    tail-trace   training plus a tail-index trace of the gradient coordinates
    exit-time    Levy exit-time sweep over jump coefficients and tail indices
    transition   inter-well transition statistics against the arrival law
    occupancy    state-visitation histogram of test episodes under a policy
    compare      aligned mean curves with bootstrap bands across run dirs

Artifacts per run directory: ``config_echo.json`` (normalized config),
``metadata.json`` (timestamps, version), per-seed CSVs, an aggregate CSV, and
``plotdata/`` holding one two-column text file per curve plus a manifest.
All CSV headers name units.  Seeds execute independently (optionally in a
process pool); every per-seed output depends only on that seed's value.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from heavypg import __version__
from heavypg.environments import EnvConfig, occupancy_histogram
from heavypg.estimator import rollout
from heavypg.metastability import (
    Landscape,
    fit_brownian_law,
    fit_scaling_exponent,
    make_landscape,
    measure_exit_time,
    measure_transition,
)
from heavypg.policies import PolicyConfig, PolicyParams
from heavypg.stable_random import SeededStream
from heavypg.tail_index import gradient_tail_trace
from heavypg.trainer import StepSchedule, TrainConfig, TrainLog, train

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "LandscapeConfig",
    "MetastabilityConfig",
    "load_config",
    "run",
    "compare",
    "main",
]

OUT_ROOT_ENV = "HEAVYPG_OUT_ROOT"

EXPERIMENTS = ("train", "tail_trace", "exit_time", "transition", "occupancy")


class ConfigError(ValueError):
    """Invalid experiment config; the message names the offending field."""


@dataclass
class LandscapeConfig:
    kind: str = "double_well"
    depth: float = 3.0
    maxima: tuple[float, ...] | None = None
    symmetric_width: float = 1.25
    dim: int = 1
    box: tuple[float, float] | None = None
    perp_curvature: float = 1.0

    def build(self) -> Landscape:
        kwargs: dict = {"depth": self.depth, "dim": self.dim}
        if self.box is not None:
            kwargs["box"] = tuple(self.box)
        if self.kind == "double_well":
            if self.maxima is not None:
                kwargs["maxima"] = tuple(self.maxima)
            kwargs["perp_curvature"] = self.perp_curvature
        elif self.kind == "triple_well":
            kwargs.pop("dim")
            if self.maxima is not None:
                kwargs["maxima"] = tuple(self.maxima)
            else:
                kwargs["symmetric_width"] = self.symmetric_width
        elif self.kind == "single_well":
            kwargs = {"curvature": self.depth, "dim": self.dim}
            if self.box is not None:
                kwargs["box"] = tuple(self.box)
        return make_landscape(self.kind, **kwargs)


@dataclass
class ExitCell:
    """One (alpha, eta) sweep cell; depth and cap may override the common block."""

    alpha: float
    eta: float
    depth: float | None = None
    cap: int | None = None


@dataclass
class MetastabilityConfig:
    landscape: LandscapeConfig = field(default_factory=LandscapeConfig)
    a: float = 0.5
    runs: int = 550
    cap: int = 2_000_000
    epsilons: tuple[float, ...] = (0.05, 0.1, 0.2)
    well_index: int = 1
    cells: tuple[ExitCell, ...] = (
        ExitCell(alpha=1.0, eta=0.0026),
        ExitCell(alpha=1.5, eta=0.0026),
        ExitCell(alpha=2.0, eta=0.2, depth=0.04, cap=4_000_000),
    )
    min_uncensored: int = 200
    # transition-experiment fields
    transition_alpha: float = 1.0
    transition_epsilon: float = 0.05
    transition_eta: float = 0.0024
    transition_runs: int = 2000
    transition_cap: int = 1_000_000
    start_well: int | None = None


@dataclass
class OccupancyConfig:
    episodes: int = 20
    bins: int = 100
    params_file: str | None = None


@dataclass
class ExperimentConfig:
    experiment: str
    seeds: tuple[int, ...] = (0,)
    out_dir: str | None = None
    workers: int = 1
    env: EnvConfig = field(default_factory=EnvConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    metastability: MetastabilityConfig = field(default_factory=MetastabilityConfig)
    occupancy: OccupancyConfig = field(default_factory=OccupancyConfig)
    tail_window: int = 50

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(
                f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}"
            )
        if not self.seeds:
            raise ConfigError("seeds must be a non-empty list")

    def resolved_out_dir(self) -> Path:
        if self.out_dir:
            return Path(self.out_dir)
        root = os.environ.get(OUT_ROOT_ENV, "runs")
        return Path(root) / self.experiment

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _build(cls, data: dict, path: str):
    """Construct a (nested) dataclass from a dict, naming bad fields."""
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object, got {type(data).__name__}")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(names)
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}: unknown field")
    kwargs = {}
    for key, value in data.items():
        sub = f"{path}.{key}" if path else key
        f = names[key]
        if f.type in ("EnvConfig",) or f.name == "env":
            kwargs[key] = _build(EnvConfig, value, sub)
        elif f.name == "policy":
            kwargs[key] = _build(PolicyConfig, value, sub)
        elif f.name == "train":
            kwargs[key] = _build(TrainConfig, value, sub)
        elif f.name == "schedule":
            kwargs[key] = _build(StepSchedule, value, sub)
        elif f.name == "metastability":
            kwargs[key] = _build(MetastabilityConfig, value, sub)
        elif f.name == "landscape":
            kwargs[key] = _build(LandscapeConfig, value, sub)
        elif f.name == "occupancy" and isinstance(value, dict):
            kwargs[key] = _build(OccupancyConfig, value, sub)
        elif f.name == "cells":
            kwargs[key] = tuple(
                _build(ExitCell, cell, f"{sub}[{i}]") for i, cell in enumerate(value)
            )
        elif isinstance(value, list):
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{path or cls.__name__}: {err}") from err


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: not valid JSON ({err})") from err
    if "experiment" not in raw:
        raise ConfigError("experiment: required field is missing")
    if raw["experiment"] in ("train", "tail_trace"):
        train_block = raw.get("train")
        if train_block is None:
            raise ConfigError("train: block is required for training experiments")
        if "gamma" not in train_block:
            raise ConfigError("train.gamma: required field is missing")
    return _build(ExperimentConfig, raw, "")


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.10g}"
    return str(x)


def _write_csv(path: Path, header: tuple[str, ...], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_xy(path: Path, xs, ys) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for x, y in zip(xs, ys):
            fh.write(f"{_fmt(float(x))} {_fmt(float(y))}\n")


class _Manifest:
    def __init__(self, out_dir: Path):
        self.dir = out_dir / "plotdata"
        self.entries: list[str] = []

    def add(self, name: str, xs, ys, xlabel: str, ylabel: str) -> None:
        _write_xy(self.dir / f"{name}.xy", xs, ys)
        self.entries.append(f"{name}.xy\tx={xlabel}\ty={ylabel}")

    def write(self) -> None:
        self.dir.mkdir(parents=True, exist_ok=True)
        (self.dir / "manifest.txt").write_text("\n".join(self.entries) + "\n")


def _echo_config(config: ExperimentConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config_echo.json").write_text(
        json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n"
    )


def _write_metadata(out: Path, started: float) -> None:
    meta = {
        "started_unix_s": started,
        "finished_unix_s": time.time(),
        "heavypg_version": __version__,
    }
    (out / "metadata.json").write_text(json.dumps(meta, indent=2) + "\n")


TRAIN_HEADER = (
    "iteration",
    "mean_return (undiscounted per episode)",
    "grad_norm (euclidean)",
    "eta (step size)",
    "wallclock_ms",
)


def _train_one_seed(args) -> tuple[int, str]:
    config, seed, out_dir = args
    cfg = dataclasses.replace(config.train, seed=seed,
                              record_coords=config.experiment == "tail_trace")
    env = config.env.build()
    params, log = train(env, config.policy, cfg)
    out = Path(out_dir)
    _write_csv(out / f"train_seed{seed}.csv", TRAIN_HEADER, log.to_rows())
    (out / f"params_seed{seed}.json").write_text(
        json.dumps({"x": params.x.tolist(), "y": params.y}, indent=2) + "\n"
    )
    rolling = log.rolling_mean_return()
    _write_csv(
        out / f"rolling_seed{seed}.csv",
        ("iteration", f"rolling_mean_return (window {cfg.eval_window} episodes)"),
        zip(log.iterations.tolist(), rolling.tolist()),
    )
    if config.experiment == "tail_trace":
        trace = gradient_tail_trace(log.gradient_coords, window=config.tail_window)
        _write_csv(
            out / f"tailtrace_seed{seed}.csv",
            ("episode", "alpha_hat (tail index, blank = gap)"),
            ((k, "" if a is None else a) for k, a in trace),
        )
    summary = f"seed {seed}: final rolling return {rolling[-1]:.2f}"
    return seed, summary


def _run_train(config: ExperimentConfig, out: Path) -> None:
    jobs = [(config, seed, str(out)) for seed in config.seeds]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_train_one_seed, jobs))
    else:
        results = [_train_one_seed(j) for j in jobs]
    for _, summary in results:
        print(summary)

    curves = []
    for seed in config.seeds:
        rows = _read_csv(out / f"rolling_seed{seed}.csv")
        curves.append(np.array([float(r[1]) for r in rows]))
    stack = np.stack(curves)
    iters = np.arange(stack.shape[1])
    mean = stack.mean(axis=0)
    _write_csv(
        out / "aggregate.csv",
        ("iteration", "rolling_return_mean (over seeds)", "rolling_return_min", "rolling_return_max"),
        zip(iters.tolist(), mean.tolist(), stack.min(0).tolist(), stack.max(0).tolist()),
    )
    manifest = _Manifest(out)
    manifest.add("rolling_return_mean", iters, mean, "iteration", "rolling mean return")
    for seed, curve in zip(config.seeds, curves):
        manifest.add(f"rolling_return_seed{seed}", iters, curve, "iteration", "rolling mean return")
    manifest.write()

    if config.experiment == "tail_trace":
        for seed in config.seeds:
            rows = _read_csv(out / f"tailtrace_seed{seed}.csv")
            pts = [(int(r[0]), float(r[1])) for r in rows if r[1] != ""]
            if pts:
                xs, ys = zip(*pts)
                manifest.add(f"tailtrace_seed{seed}", xs, ys, "episode", "alpha_hat")
        manifest.write()


def _run_exit_time(config: ExperimentConfig, out: Path) -> None:
    meta = config.metastability
    rows, fit_rows, brownian_rows = [], [], []
    manifest = _Manifest(out)
    for seed in config.seeds:
        for cell in meta.cells:
            land_cfg = meta.landscape
            if cell.depth is not None:
                land_cfg = dataclasses.replace(land_cfg, depth=cell.depth)
            landscape = land_cfg.build()
            study = measure_exit_time(
                landscape,
                meta.well_index,
                cell.alpha,
                a=meta.a,
                runs=meta.runs,
                cap=cell.cap if cell.cap is not None else meta.cap,
                seed=seed,
                epsilons=list(meta.epsilons),
                eta=cell.eta,
            )
            rows.extend(
                (seed, r.alpha, r.epsilon, r.a, r.eta, r.run, r.exit_step, int(r.censored))
                for r in study.records
            )
            fit = fit_scaling_exponent(study, min_uncensored=meta.min_uncensored)
            fit_rows.append((seed, cell.alpha, fit.slope, fit.stderr, fit.r2))
            if cell.alpha == 2.0:
                bfit = fit_brownian_law(study, min_uncensored=meta.min_uncensored)
                brownian_rows.append((seed, cell.alpha, bfit.slope, bfit.intercept, bfit.r2))
            manifest.add(
                f"exit_mean_alpha{cell.alpha}_seed{seed}",
                fit.epsilons,
                fit.mean_exit_time,
                "epsilon (jump coefficient)",
                "mean exit time (steps * eta)",
            )
            print(
                f"seed {seed} alpha {cell.alpha}: slope {fit.slope:.3f} "
                f"(stderr {fit.stderr:.3f}, r2 {fit.r2:.4f})"
            )
    _write_csv(
        out / "exit_times.csv",
        ("seed", "alpha (tail index)", "epsilon (jump coefficient)",
         "a (exit radius)", "eta (step size)", "run", "exit_step (iterations)", "censored (0/1)"),
        rows,
    )
    _write_csv(
        out / "fit_summary.csv",
        ("seed", "alpha (tail index)", "slope (log mean time vs log 1/eps)",
         "stderr", "r2"),
        fit_rows,
    )
    if brownian_rows:
        _write_csv(
            out / "brownian_fit.csv",
            ("seed", "alpha (tail index)", "slope (log mean time vs 1/eps^2)",
             "intercept", "r2"),
            brownian_rows,
        )
    manifest.write()


def _run_transition(config: ExperimentConfig, out: Path) -> None:
    meta = config.metastability
    landscape = meta.landscape.build()
    rows, agg = [], []
    for seed in config.seeds:
        study = measure_transition(
            landscape,
            meta.transition_alpha,
            a=meta.a,
            epsilon=meta.transition_epsilon,
            eta=meta.transition_eta,
            runs=meta.transition_runs,
            cap=meta.transition_cap,
            seed=seed,
            start_well=meta.start_well,
        )
        rows.extend(
            (seed, r.start_well, r.arrival_well, r.transition_step,
             int(r.censored), r.direction_sign)
            for r in study.records
        )
        agg.append(
            (seed, study.right_probability, study.theory_right_probability(),
             study.censored_fraction)
        )
        print(
            f"seed {seed}: right-transition probability "
            f"{study.right_probability:.4f} (theory {study.theory_right_probability():.4f})"
        )
    _write_csv(
        out / "transitions.csv",
        ("seed", "start_well (index)", "arrival_well (index, -1 censored)",
         "transition_step (iterations)", "censored (0/1)", "direction_sign (+1 right)"),
        rows,
    )
    _write_csv(
        out / "transition_summary.csv",
        ("seed", "right_probability (empirical)", "right_probability (theory)",
         "censored_fraction"),
        agg,
    )
    manifest = _Manifest(out)
    manifest.add(
        "right_probability",
        [a[0] for a in agg],
        [a[1] for a in agg],
        "seed",
        "right-transition probability",
    )
    manifest.write()


def _run_occupancy(config: ExperimentConfig, out: Path) -> None:
    env = config.env.build()
    occ = config.occupancy
    if occ.params_file:
        data = json.loads(Path(occ.params_file).read_text())
        params = PolicyParams(np.array(data["x"], dtype=float), float(data["y"]))
    else:
        params = config.policy.params()
    kind = config.policy.kind()
    features = config.policy.features()
    lo, hi = env.LOW, env.HIGH
    for seed in config.seeds:
        episodes = []
        for ep in range(occ.episodes):
            state = env.reset(stream=None)
            visited = [state.s]
            stream = SeededStream(seed, ep)
            while not state.done:
                from heavypg.policies import sample_action

                a = sample_action(kind, params, features(state.s), stream)
                state = env.step(state, a).next_state
                visited.append(state.s)
            episodes.append(np.array(visited))
        hist = occupancy_histogram(episodes, occ.bins, lo, hi)
        edges = np.linspace(lo, hi, occ.bins + 1)
        _write_csv(
            out / f"occupancy_seed{seed}.csv",
            ("bin_low (state)", "bin_high (state)", "visit_frequency (fraction)"),
            zip(edges[:-1].tolist(), edges[1:].tolist(), hist.tolist()),
        )
        print(f"seed {seed}: occupancy over {occ.episodes} episodes, peak bin {hist.max():.3f}")
    manifest = _Manifest(out)
    centers = 0.5 * (edges[:-1] + edges[1:])
    manifest.add("occupancy_last_seed", centers, hist, "state", "visit frequency")
    manifest.write()


def _read_csv(path: Path) -> list[list[str]]:
    with path.open() as fh:
        reader = csv.reader(fh)
        next(reader)
        return [row for row in reader]


def run(
    config: ExperimentConfig | str | Path,
    seed_override: list[int] | None = None,
    workers: int | None = None,
    out_dir: str | None = None,
    cap: int | None = None,
) -> Path:
    """Execute an experiment config; returns the run directory."""
    if not isinstance(config, ExperimentConfig):
        config = load_config(config)
    if seed_override:
        config = dataclasses.replace(config, seeds=tuple(seed_override))
    if workers is not None:
        config = dataclasses.replace(config, workers=workers)
    if out_dir is not None:
        config = dataclasses.replace(config, out_dir=out_dir)
    if cap is not None:
        meta = dataclasses.replace(config.metastability, cap=cap, transition_cap=cap)
        config = dataclasses.replace(config, metastability=meta)

    out = config.resolved_out_dir()
    started = time.time()
    _echo_config(config, out)
    if config.experiment in ("train", "tail_trace"):
        _run_train(config, out)
    elif config.experiment == "exit_time":
        _run_exit_time(config, out)
    elif config.experiment == "transition":
        _run_transition(config, out)
    elif config.experiment == "occupancy":
        _run_occupancy(config, out)
    _write_metadata(out, started)
    return out


def compare(run_dirs: list[str | Path], metric: str = "rolling_return", n_boot: int = 2000) -> list[tuple]:
    """Align per-iteration seed means across run dirs with bootstrap bands.

    Requires every run to use the same environment block; mismatches raise
    and name the differing field.
    """
    dirs = [Path(d) for d in run_dirs]
    configs = [json.loads((d / "config_echo.json").read_text()) for d in dirs]
    base_env = configs[0]["env"]
    for d, cfg in zip(dirs[1:], configs[1:]):
        for key, val in cfg["env"].items():
            if base_env.get(key) != val:
                raise ConfigError(
                    f"env.{key}: differs between {dirs[0]} ({base_env.get(key)}) "
                    f"and {d} ({val})"
                )
    rng = np.random.default_rng(0)
    per_dir = []
    for d, cfg in zip(dirs, configs):
        seeds = cfg["seeds"]
        curves = []
        for seed in seeds:
            name = "rolling" if metric == "rolling_return" else "train"
            rows = _read_csv(d / f"{name}_seed{seed}.csv")
            col = 1
            curves.append(np.array([float(r[col]) for r in rows]))
        per_dir.append(np.stack(curves))
    n_iter = min(c.shape[1] for c in per_dir)
    rows = []
    for it in range(n_iter):
        row: list = [it]
        for stack in per_dir:
            vals = stack[:, it]
            boots = rng.choice(vals, size=(n_boot, vals.size)).mean(axis=1)
            row.extend([vals.mean(), float(np.quantile(boots, 0.025)),
                        float(np.quantile(boots, 0.975))])
        if len(per_dir) == 2:
            row.append(row[1] - row[4])
        rows.append(tuple(row))
    return rows


def _write_compare(run_dirs, metric, out_path) -> None:
    rows = compare(run_dirs, metric)
    header: list[str] = ["iteration"]
    for d in run_dirs:
        label = Path(d).name
        header.extend(
            [f"{label}_mean ({metric})", f"{label}_ci_low (bootstrap 2.5%)",
             f"{label}_ci_high (bootstrap 97.5%)"]
        )
    if len(run_dirs) == 2:
        header.append(f"mean_difference ({metric})")
    _write_csv(Path(out_path), tuple(header), rows)
    print(f"wrote {out_path} ({len(rows)} iterations)")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="heavypg",
        description="Heavy-tailed policy search and metastability experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("train", "tail-trace", "exit-time", "transition", "occupancy"):
        p = sub.add_parser(name, help=f"run a {name} experiment from a config file")
        p.add_argument("--config", required=True, help="path to the JSON experiment config")
        p.add_argument("--seed-override", default=None,
                       help="comma-separated seed list replacing the config's")
        p.add_argument("--workers", type=int, default=None, help="parallel seed workers")
        p.add_argument("--out-dir", default=None, help="output directory override")
        p.add_argument("--cap", type=int, default=None,
                       help="step-cap override for metastability runs")
    pc = sub.add_parser("compare", help="aggregate comparison across run directories")
    pc.add_argument("dirs", nargs="+", help="run directories to compare")
    pc.add_argument("--metric", default="rolling_return",
                    choices=("rolling_return", "mean_return"))
    pc.add_argument("--out", default="comparison.csv", help="output CSV path")
    args = parser.parse_args(argv)

    try:
        if args.command == "compare":
            _write_compare(args.dirs, args.metric, args.out)
            return 0
        config = load_config(args.config)
        expected = args.command.replace("-", "_")
        if config.experiment != expected:
            raise ConfigError(
                f"experiment: config says {config.experiment!r} but the "
                f"{args.command} subcommand was invoked"
            )
        seeds = (
            [int(s) for s in args.seed_override.split(",")]
            if args.seed_override
            else None
        )
        out = run(config, seed_override=seeds, workers=args.workers,
                  out_dir=args.out_dir, cap=args.cap)
        print(f"artifacts in {out}")
        return 0
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
