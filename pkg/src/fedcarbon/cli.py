"""Command line front end.

Subcommands: estimate, simulate, partition, optimize, compare, plot.
Exit codes: 0 success, 1 validation problem, 2 I/O problem, 3 the run
never reached its accuracy target.  Output files are written atomically
(temp file then rename) and contain no timestamps, so reruns with the
same config and seed are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any

import numpy as np

from .carbon import (
    estimate_centralized,
    estimate_fl,
    schedule_from_dict,
    schedule_to_dict,
    to_co2e,
    training_energy_fl,
    schedule_prefix,
)
from .optimize import (
    CellResult,
    default_grid,
    grid_search,
    make_simulation_runner,
    make_table_runner,
    pareto_front,
)
from .partition import assign_samples, lda_partition
from .profiles import ConfigError, ExperimentConfig, config_digest, load_config
from .sim import (
    _STREAM_ASSIGN,
    _STREAM_PARTITION,
    _resolve_prior,
    make_task,
    rounds_to_target,
    run_experiment,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_NOT_REACHED = 3


def _atomic_write(path: str | Path, text: str) -> None:
    p = Path(path)
    tmp = p.with_name(p.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, p)


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        _atomic_write(out, text)


def _json_text(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _load_json(path: str) -> Any:
    try:
        text = Path(path).read_text()
    except OSError:
        raise
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from exc


def _load(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def cmd_estimate(args: argparse.Namespace) -> int:
    cfg = _load(args)
    if cfg.mode == "centralized":
        report = estimate_centralized(cfg)
    else:
        if args.fixtures:
            schedule = schedule_from_dict(_load_json(args.fixtures))
        else:
            _, schedule, _ = run_experiment(cfg)
            assert cfg.fl is not None
            cfg = replace(cfg, fl=replace(cfg.fl, rounds=schedule.rounds))
        report = estimate_fl(cfg, schedule)
    _emit(_json_text(report.to_json_dict()), args.out)
    return EXIT_OK


def _trace_csv(cfg: ExperimentConfig, trace, schedule) -> str:
    per_round = np.zeros(schedule.rounds)
    for e in schedule.participation:
        per_round[e.round_index] += e.wall_time_s * e.hardware.active_power_w / 3600.0
    buf = io.StringIO()
    buf.write(f"# config_digest={config_digest(cfg)} seed={cfg.seed}\n")
    buf.write("round,accuracy,cumulative_wh\n")
    running = 0.0
    for i, acc in enumerate(trace.accuracies):
        running += float(per_round[i])
        buf.write(f"{i + 1},{acc!r},{running!r}\n")
    return buf.getvalue()


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _load(args)
    trace, schedule, _ = run_experiment(cfg)
    base = args.out or "fl_run"
    if base.endswith(".csv"):
        base = base[:-4]
    _atomic_write(f"{base}.csv", _trace_csv(cfg, trace, schedule))
    _atomic_write(f"{base}.schedule.json", _json_text(schedule_to_dict(schedule)))
    assert cfg.sim is not None
    if rounds_to_target(trace, cfg.sim.target_accuracy) is None:
        sys.stderr.write(
            f"target accuracy {cfg.sim.target_accuracy} not reached in "
            f"{trace.rounds} rounds\n")
        return EXIT_NOT_REACHED
    return EXIT_OK


def cmd_partition(args: argparse.Namespace) -> int:
    cfg = _load(args)
    if cfg.fl is None or cfg.sim is None:
        raise ConfigError("partition needs a config with 'fl' and 'sim' objects")
    sim = cfg.sim
    alpha = args.alpha if args.alpha is not None else sim.alpha
    dataset = make_task(sim.classes, sim.features, sim.n_samples,
                        seed=cfg.seed, separation=sim.separation)
    prior = _resolve_prior(sim.prior, dataset)
    spc = sim.samples_per_client or len(dataset.train_idx) // cfg.fl.pool_size
    part = lda_partition(prior, alpha, cfg.fl.pool_size, spc,
                         np.random.SeedSequence([cfg.seed, _STREAM_PARTITION]))
    assignment = assign_samples(dataset.train_labels(), part,
                                np.random.SeedSequence([cfg.seed, _STREAM_ASSIGN]))
    deviation = float(np.abs(part.per_client - np.asarray(prior.proportions)).max())
    if alpha >= 100.0 and deviation > 0.05:
        sys.stderr.write(
            f"warning: alpha={alpha} but some client is {deviation:.3f} "
            "away from the prior\n")
    out = {
        "config_digest": config_digest(cfg),
        "seed": cfg.seed,
        "alpha": alpha,
        "prior": list(prior.proportions),
        "per_client": [[float(v) for v in row] for row in part.per_client],
        "assignments": [[int(i) for i in shard] for shard in assignment.per_client],
        "exhaustion_warnings": assignment.exhaustion_warnings,
        "max_abs_deviation_from_prior": deviation,
    }
    _emit(_json_text(out), args.out)
    return EXIT_OK


def _cost_point_dict(p) -> Any:
    if p is None:
        return None
    return {
        "rounds": p.rounds,
        "co2e_g": p.co2e_g,
        "accuracy": p.accuracy,
        "carbon_cost": p.carbon_cost,
    }


def _cell_dict(c: CellResult) -> dict[str, Any]:
    return {
        "clients_per_round": c.clients_per_round,
        "local_epochs": c.local_epochs,
        "partition_alpha": c.partition_alpha,
        "at_target": _cost_point_dict(c.at_target),
        "stable": _cost_point_dict(c.stable),
    }


def _optimize_csv(cells: list[CellResult]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["clients_per_round", "local_epochs", "partition_alpha",
                     "target_rounds", "target_co2e_g", "target_carbon_cost",
                     "stable_accuracy", "stable_rounds", "stable_co2e_g",
                     "stable_carbon_cost"])
    for c in cells:
        t = c.at_target
        writer.writerow([
            c.clients_per_round, c.local_epochs, repr(c.partition_alpha),
            "" if t is None else t.rounds,
            "" if t is None else repr(t.co2e_g),
            "" if t is None else repr(t.carbon_cost),
            repr(c.stable.accuracy), c.stable.rounds,
            repr(c.stable.co2e_g), repr(c.stable.carbon_cost),
        ])
    return buf.getvalue()


def cmd_optimize(args: argparse.Namespace) -> int:
    cfg = _load(args)
    if args.fixtures:
        table = _load_json(args.fixtures)
        runner = make_table_runner(table)
        cells = [(int(row["clients"]), int(block["local_epochs"]), float(block["alpha"]))
                 for block in table["blocks"] for row in block["rows"]]
        target = float(table.get("target_accuracy", 0.0)) or \
            (cfg.sim.target_accuracy if cfg.sim else 0.5)
    else:
        if cfg.fl is None or cfg.sim is None:
            raise ConfigError("optimize needs 'fl' and 'sim' objects, or --fixtures")
        runner = make_simulation_runner(cfg)
        cells = default_grid(max_clients=min(10, cfg.fl.pool_size))
        target = cfg.sim.target_accuracy
    ranked = grid_search(cells, runner, target)
    front = pareto_front([c.stable for c in ranked])
    front_keys = [[p.clients_per_round, p.local_epochs, p.partition_alpha]
                  for p in front]
    if args.out and args.out.endswith(".csv"):
        _emit(_optimize_csv(ranked), args.out)
    else:
        payload = {
            "config_digest": config_digest(cfg),
            "seed": cfg.seed,
            "target_accuracy": target,
            "cells": [_cell_dict(c) for c in ranked],
            "pareto_stable": front_keys,
            "winner": _cell_dict(ranked[0]) if ranked else None,
        }
        _emit(_json_text(payload), args.out)
    if not any(c.reached_target for c in ranked):
        sys.stderr.write("no grid cell reached the accuracy target\n")
        return EXIT_NOT_REACHED
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    paths = args.config
    if len(paths) < 2:
        raise ConfigError("compare needs at least two --config paths")
    fixtures = args.fixtures or []
    if fixtures and len(fixtures) != len(paths):
        raise ConfigError("give one --fixtures per --config, or none")
    rows = []
    regions: list[str] | None = None
    for i, path in enumerate(paths):
        cfg = load_config(path)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        names = [g.region for g in cfg.grids]
        if regions is None:
            regions = names
        elif names != regions:
            raise ConfigError(
                f"{path}: grid regions {names} differ from {regions}")
        if cfg.mode == "centralized":
            report = estimate_centralized(cfg)
        else:
            if fixtures:
                schedule = schedule_from_dict(_load_json(fixtures[i]))
            else:
                _, schedule, _ = run_experiment(cfg)
                assert cfg.fl is not None
                cfg = replace(cfg, fl=replace(cfg.fl, rounds=schedule.rounds))
            report = estimate_fl(cfg, schedule)
        row: dict[str, Any] = {
            "label": Path(path).stem,
            "mode": cfg.mode,
            "total_wh": report.energy.total_wh,
        }
        for g in cfg.grids:
            row[f"co2e_g:{g.region}"] = to_co2e(report.energy.total_wh, g)
        rows.append(row)
    assert regions is not None
    buf = io.StringIO()
    writer = csv.writer(buf)
    header = ["label", "mode", "total_wh"] + [f"co2e_g:{r}" for r in regions]
    writer.writerow(header)
    for row in rows:
        writer.writerow([row["label"], row["mode"], repr(row["total_wh"])]
                        + [repr(row[f"co2e_g:{r}"]) for r in regions])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def _plot_from_trace(path: str, cfg: ExperimentConfig | None) -> str:
    lines = Path(path).read_text().splitlines()
    body = [ln for ln in lines if ln and not ln.startswith("#")]
    if not body:
        raise ConfigError(f"{path}: empty trace")
    reader = csv.DictReader(body)
    rate = cfg.grid.c_rate_kg_per_kwh if cfg is not None else None
    out = ["# round cumulative_g" if rate is not None else "# round cumulative_wh"]
    rows = 0
    for rec in reader:
        wh = float(rec["cumulative_wh"])
        y = wh * rate if rate is not None else wh
        out.append(f"{int(rec['round'])} {y!r}")
        rows += 1
    if rows == 0:
        raise ConfigError(f"{path}: no data rows")
    return "\n".join(out) + "\n"


def _plot_from_json(raw: Any) -> str:
    if isinstance(raw, dict) and "cells" in raw:
        out = ["# co2e_g accuracy"]
        for cell in raw["cells"]:
            stable = cell["stable"]
            out.append(f"{stable['co2e_g']!r} {stable['accuracy']!r}")
        if len(out) == 1:
            raise ConfigError("grid output holds no cells")
        return "\n".join(out) + "\n"
    reports = raw if isinstance(raw, list) else [raw]
    if not reports or not all(isinstance(r, dict) and "co2e_g" in r for r in reports):
        raise ConfigError("input is neither a grid output nor emission reports")
    out = ["# series co2e_g"]
    for i, rep in enumerate(reports, start=1):
        out.append(f"{i} {rep['co2e_g']!r}")
    return "\n".join(out) + "\n"


def cmd_plot(args: argparse.Namespace) -> int:
    if not args.fixtures:
        raise ConfigError("plot needs --fixtures pointing at a trace, grid or report file")
    path = args.fixtures
    if path.endswith(".csv"):
        cfg = load_config(args.config) if args.config else None
        text = _plot_from_trace(path, cfg)
    else:
        text = _plot_from_json(_load_json(path))
    _emit(text, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedcarbon",
        description="Energy and CO2e accounting for federated and centralized training.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str, multi_config: bool = False,
            multi_fixtures: bool = False, config_required: bool = True):
        p = sub.add_parser(name, help=help_text)
        if multi_config:
            p.add_argument("--config", action="append", required=True,
                           help="experiment config JSON (repeatable)")
        else:
            p.add_argument("--config", required=config_required,
                           help="experiment config JSON")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--out", default=None, help="output path")
        if multi_fixtures:
            p.add_argument("--fixtures", action="append", default=None,
                           help="schedule fixture JSON (repeatable)")
        else:
            p.add_argument("--fixtures", default=None,
                           help="fixture file (schedule, results table, or plot input)")
        return p

    add("estimate", "price one run as an emission report")
    add("simulate", "run federated rounds; write trace CSV and schedule JSON")
    p = add("partition", "draw per-client class mixes and sample assignments")
    p.add_argument("--alpha", type=float, default=None,
                   help="override the concentration parameter")
    add("optimize", "rank a design grid by carbon cost")
    add("compare", "emission table across several configs", multi_config=True,
        multi_fixtures=True)
    add("plot", "turn a trace/grid/report file into plain plot columns",
        config_required=False)
    return parser


_COMMANDS = {
    "estimate": cmd_estimate,
    "simulate": cmd_simulate,
    "partition": cmd_partition,
    "optimize": cmd_optimize,
    "compare": cmd_compare,
    "plot": cmd_plot,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ValueError, KeyError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_VALIDATION
    except OSError as exc:
        sys.stderr.write(f"i/o error: {exc}\n")
        return EXIT_IO


def entrypoint() -> None:
    sys.exit(main())
