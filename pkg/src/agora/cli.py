"""Command line: ``agora run | validate | sweep | acceptance``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import itertools
import logging
import os
import re
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from .acceptance import format_table, run_all
from .harness import plot_csv, run_comparison
from .scenario import ScenarioConfig, ScenarioError, load_scenario, validate_file

log = logging.getLogger("agora")

LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
SUMMARY_METRICS = ("accuracy", "U_final_epis", "COI", "UAPS", "total_cost", "relative_cost",
                   "total_pflops", "cost_performance_ratio", "trades_per_task", "constraint_violations",
                   "reported_accuracy", "cost_performance_ratio_at_reported")
TABLE_COLUMNS = ("accuracy", "total_pflops", "cost_performance_ratio", "relative_cost", "COI", "UAPS")
# Shown only when some strategy in the run carries a quoted accuracy.
REPORTED_COLUMNS = ("reported_accuracy", "cost_performance_ratio_at_reported")
SWEEP_PARAMS = {
    "pool_size": int,
    "tau_trade": float,
    "tau_benefit": float,
    "gamma_decay": float,
    "lambda_dist": float,
    "eta_synergy": float,
    "omega_strategic": float,
}


def parse_seeds(text: str) -> list[int]:
    """``1,2,3`` or ``0-4`` (inclusive), or a mix."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        m = re.fullmatch(r"(-?\d+)-(-?\d+)", part)
        try:
            if m:
                seeds.extend(range(int(m[1]), int(m[2]) + 1))
            else:
                seeds.append(int(part))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad seed {part!r}") from None
    if not seeds:
        raise argparse.ArgumentTypeError("at least one seed is required")
    return seeds


def parse_grid(items: list[str]) -> dict[str, list]:
    grid = {}
    for item in items or []:
        if "=" not in item:
            raise ValueError(f"grid entry {item!r} must look like name=v1,v2")
        name, values = item.split("=", 1)
        name = name.strip()
        if name not in SWEEP_PARAMS:
            raise ValueError(f"unknown sweep parameter {name!r}; known: {', '.join(SWEEP_PARAMS)}")
        grid[name] = [SWEEP_PARAMS[name](v) for v in values.split(",") if v.strip()]
    return grid


def apply_params(config: ScenarioConfig, params: dict) -> ScenarioConfig:
    market, broker, pool = config.market, config.broker, config.pool
    for name, value in params.items():
        if name == "pool_size":
            if not 1 <= value <= len(config.pool):
                raise ValueError(f"pool_size {value} outside 1..{len(config.pool)}")
            pool = config.pool[:value]
        elif name == "tau_trade":
            market = dataclasses.replace(market, tau_trade=value)
        elif name == "tau_benefit":
            market = dataclasses.replace(market, tau_benefit=value)
        else:
            broker = dataclasses.replace(broker, **{name: value})
    return dataclasses.replace(config, market=market, broker=broker, pool=pool)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return "unattainable" if np.isinf(value) else repr(value)
    return str(value)


def summary_rows(reports_by_strategy: dict[str, list]) -> list[tuple]:
    rows = []
    for strategy, reports in reports_by_strategy.items():
        for metric in SUMMARY_METRICS:
            values = [r.aggregate.get(metric) for r in reports]
            if any(v is None for v in values):
                continue
            arr = np.array(values, dtype=float)
            if np.isinf(arr).any():
                rows.append((strategy, metric, "unattainable", "", len(values)))
                continue
            rows.append((strategy, metric, repr(float(arr.mean())), repr(float(arr.std())), len(values)))
    return rows


def summary_table(reports_by_strategy: dict[str, list]) -> str:
    lines = []
    cols = TABLE_COLUMNS
    if any(m in r.aggregate for reps in reports_by_strategy.values() for r in reps for m in REPORTED_COLUMNS):
        cols = cols + REPORTED_COLUMNS
    width = max(26, *(len(c) + 2 for c in cols))
    lines.append(f"{'strategy':24s}" + "".join(f"{c:>{width}s}" for c in cols))
    for strategy, reports in reports_by_strategy.items():
        cells = []
        for metric in cols:
            values = [r.aggregate.get(metric) for r in reports]
            if any(v is None for v in values):
                cells.append("-")
                continue
            arr = np.array(values, dtype=float)
            if np.isinf(arr).any():
                cells.append("unattainable")
            else:
                cells.append(f"{arr.mean():.4f} ± {arr.std():.4f}")
        lines.append(f"{strategy:24s}" + "".join(f"{c:>{width}s}" for c in cells))
    return "\n".join(lines) + "\n"


def _write_outputs(out: Path, config: ScenarioConfig, seeds: list[int], fmt: str, kernel: str | None) -> None:
    by_strategy: dict[str, list] = {}
    for seed in seeds:
        cfg = dataclasses.replace(config, seed=seed)
        reports = run_comparison(cfg, kernel_backend=kernel)
        for rep in reports:
            by_strategy.setdefault(rep.strategy, []).append(rep)
            stem = f"{config.name}__{rep.strategy}__seed{seed}".replace(":", "-")
            if fmt in ("json", "both"):
                (out / f"{stem}.json").write_text(rep.to_json(), encoding="utf-8")
            if fmt in ("csv", "both"):
                (out / f"{stem}.per_task.csv").write_text(rep.per_task_csv(), encoding="utf-8")
                (out / f"{stem}.aggregate.csv").write_text(rep.aggregate_csv(), encoding="utf-8")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("strategy", "metric", "mean", "std", "n_seeds"))
    w.writerows(summary_rows(by_strategy))
    (out / "summary.csv").write_text(buf.getvalue(), encoding="utf-8")
    table = summary_table(by_strategy)
    (out / "summary.txt").write_text(table, encoding="utf-8")
    (out / "plot.csv").write_text(plot_csv([r for reps in by_strategy.values() for r in reps]), encoding="utf-8")
    sys.stdout.write(table)


def _staged(out: Path, work) -> None:
    """Build outputs in a scratch directory and move them in only on success."""
    out.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".agora-", dir=out))
    try:
        work(stage)
        for f in sorted(stage.iterdir()):
            os.replace(f, out / f.name)
    finally:
        shutil.rmtree(stage, ignore_errors=True)


def _load(path: str) -> ScenarioConfig | None:
    try:
        return load_scenario(path)
    except ScenarioError as exc:
        for d in exc.diagnostics:
            print(f"error: {d}", file=sys.stderr)
    except OSError as exc:
        print(f"error: cannot read {path}: {exc}", file=sys.stderr)
    return None


def cmd_run(args) -> int:
    config = _load(args.scenario)
    if config is None:
        return 2
    try:
        _staged(Path(args.out), lambda d: _write_outputs(d, config, args.seeds, args.format, args.kernel))
    except Exception as exc:  # partial outputs already discarded by _staged
        log.error("run failed: %s", exc)
        return 1
    return 0


def cmd_validate(args) -> int:
    try:
        diags = validate_file(args.scenario)
    except OSError as exc:
        print(f"error: cannot read {args.scenario}: {exc}", file=sys.stderr)
        return 2
    for d in diags:
        print(d)
    if not diags:
        print("ok")
    return 1 if diags else 0


def _sweep(out: Path, config: ScenarioConfig, grid: dict, seeds: list[int], kernel: str | None) -> None:
    names = list(grid)
    combos = list(itertools.product(*(grid[n] for n in names))) or [()]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header_done = False
    for combo in combos:
        params = dict(zip(names, combo))
        cfg = apply_params(config, params)
        for seed in seeds:
            rep = run_comparison(dataclasses.replace(cfg, seed=seed), kernel_backend=kernel)[0]
            metrics = [k for k in rep.aggregate if k not in ("reported_accuracy",)]
            if not header_done:
                w.writerow((*names, "seed", "strategy", *metrics))
                header_done = True
            w.writerow((*[_fmt(v) for v in combo], seed, rep.strategy, *[_fmt(rep.aggregate[k]) for k in metrics]))
    (out / "sweep.csv").write_text(buf.getvalue(), encoding="utf-8")


def cmd_sweep(args) -> int:
    config = _load(args.scenario)
    if config is None:
        return 2
    try:
        grid = parse_grid(args.grid)
        for n in grid.get("pool_size", []):
            apply_params(config, {"pool_size": n})
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    # Comparisons are skipped in sweeps; only the scenario's own strategy runs.
    config = dataclasses.replace(config, comparisons=())
    try:
        _staged(Path(args.out), lambda d: _sweep(d, config, grid, args.seeds, args.kernel))
    except Exception as exc:
        log.error("sweep failed: %s", exc)
        return 1
    return 0


def cmd_acceptance(args) -> int:
    results = run_all(only=args.only)
    sys.stdout.write(format_table(results))
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="agora", description="Uncertainty-market agent coordination simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--scenario", required=True, help="scenario JSON path or bundled name")
        if out:
            sp.add_argument("--out", required=True, help="output directory")
            sp.add_argument("--seeds", type=parse_seeds, default=[0], help="e.g. 1,2,3 or 0-9")
            sp.add_argument("--kernel", choices=("cython", "python"), default=None,
                            help="trade-search backend (default: compiled when available)")

    run = sub.add_parser("run", help="run a scenario for each seed and write reports")
    common(run)
    run.add_argument("--format", choices=("json", "csv", "both"), default="both")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="check a scenario file without running it")
    common(val, out=False)
    val.set_defaults(func=cmd_validate)

    sw = sub.add_parser("sweep", help="run a parameter grid and write a long-form CSV")
    common(sw)
    sw.add_argument("--grid", action="append", default=[], metavar="NAME=V1,V2",
                    help=f"repeatable; names: {', '.join(SWEEP_PARAMS)}")
    sw.set_defaults(func=cmd_sweep)

    acc = sub.add_parser("acceptance", help="run the acceptance suite and print a pass/fail table")
    acc.add_argument("--only", type=int, action="append", help="criterion number (repeatable)")
    acc.set_defaults(func=cmd_acceptance)
    return p


def main(argv: list[str] | None = None) -> int:
    level = LOG_LEVELS.get(os.environ.get("AGORA_LOG_LEVEL", "warn").lower(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
