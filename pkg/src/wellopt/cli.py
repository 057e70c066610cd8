"""Command-line entry point.

    wellopt run <config> [--seed N] [--workers N] [--out DIR] [--dump]
    wellopt validate <config>
    wellopt simulate <solution> <config> [--out DIR]
    wellopt bruteforce <config> [--workers N] [--out DIR]

Configs are JSON documents (see README for the schema); results are written
as CSV series and JSON solution files. Initialization samples (Latin
hypercube designs) count against the evaluation budget. Set WELLOPT_LOG to
DEBUG/INFO/WARNING to control verbosity.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import economics, problem as problemmod, simulator as simmod, wells as wellsmod
from .config import (
    ConfigError,
    ExperimentConfig,
    build_model,
    build_problem_spec,
    load_config,
    solution_to_dict,
    well_from_dict,
)
from .problem import Evaluator, ReservoirObjective, encode, rank_better
from .strategies import convergence_series, run_experiment
from .wells import VerticalShape

log = logging.getLogger("wellopt")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _setup_logging() -> None:
    level = os.environ.get("WELLOPT_LOG", "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


def _write_csv(path: Path, rows: list[dict], columns: list[str]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, restval="")
        writer.writeheader()
        writer.writerows(rows)


def _error_report(path: Path, kind: str, message: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump({"error": kind, "message": message}, fh, indent=2)


def _resolve_out(cfg: ExperimentConfig, args) -> Path:
    out = Path(args.out if args.out else (cfg.output_dir or "wellopt_out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_solution(path: Path, cfg, spec, record, algorithm, seed) -> None:
    wells, schedule = problemmod.decode(record.vector, spec)
    doc = solution_to_dict(
        wells,
        schedule.bhp,
        schedule.interval_days,
        record.evaluation,
        algorithm,
        seed,
        vector=record.vector,
    )
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.base_seed = args.seed
    workers = args.workers or os.cpu_count() or 1
    out = _resolve_out(cfg, args)

    spec = build_problem_spec(cfg)
    log.info(
        "running %s on %s: %d repeats, budget %d, %d workers",
        cfg.algorithm, cfg.name, cfg.n_repeats, cfg.budget, workers,
    )
    summary = run_experiment(
        spec, cfg.algorithm, cfg.n_repeats, cfg.base_seed, workers, cfg.settings
    )

    _write_csv(
        out / "summary.csv",
        [
            {
                "algorithm": summary.algorithm,
                "case": cfg.name,
                "best": summary.best,
                "worst": summary.worst,
                "mean": summary.mean,
                "stdev": summary.stdev,
                "n_runs": summary.n_runs,
                "single_run": summary.single_run,
                "failures": len(summary.failures),
            }
        ],
        ["algorithm", "case", "best", "worst", "mean", "stdev", "n_runs", "single_run", "failures"],
    )
    for i, run in enumerate(summary.runs):
        rows = convergence_series(run.records)
        _write_csv(
            out / f"convergence_run{i}.csv",
            rows,
            ["record", "best_feasible_npv", "best_h"],
        )
        if run.iterations:
            columns: list[str] = []
            for row in run.iterations:
                for key in row:
                    if key not in columns:
                        columns.append(key)
            _write_csv(out / f"iterations_run{i}.csv", run.iterations, columns)

    if not summary.runs:
        _error_report(out / "error.json", "runtime", "every run failed to find a valid point")
        return EXIT_RUNTIME

    overall = None
    overall_seed = None
    for run in summary.runs:
        if overall is None or rank_better(run.best.evaluation, overall.evaluation):
            overall = run.best
            overall_seed = run.seed
    _write_solution(
        out / "best_solution.json", cfg, spec, overall, summary.algorithm, overall_seed
    )

    if args.dump:
        _dump_rates(out, spec, overall)
    log.info(
        "done: best %.6g, worst %.6g, mean %.6g, stdev %.6g",
        summary.best, summary.worst, summary.mean, summary.stdev,
    )
    return EXIT_OK


def _dump_rates(out: Path, spec, record) -> None:
    wells, schedule = problemmod.decode(record.vector, spec)
    completed = [
        wellsmod.complete_well(w, spec.model.grid, spec.model.rock, spec.r_well)
        for w in wells
    ]
    result = simmod.simulate(
        spec.model, completed, schedule, spec.production_years, spec.sim_options
    )
    rows = []
    for s in range(result.times.size):
        row = {"day": result.times[s]}
        for w, label in enumerate(result.producer_labels):
            row[f"q_o_{label}"] = result.q_o_prod[w, s]
            row[f"q_w_{label}"] = result.q_w_prod[w, s]
        for w, label in enumerate(result.injector_labels):
            row[f"q_w_{label}"] = result.q_w_inj[w, s]
        rows.append(row)
    _write_csv(out / "rates.csv", rows, list(rows[0].keys()))


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    build_problem_spec(cfg)  # builds the model; catches inconsistent bounds
    print(f"{cfg.name}: configuration valid")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    with open(args.solution) as fh:
        sol = json.load(fh)

    model = build_model(cfg)
    wells = [well_from_dict(d) for d in sol["wells"]]
    bhp = np.asarray(sol["schedule"]["bhp"], dtype=float)
    schedule = simmod.ControlSchedule(sol["schedule"]["interval_days"], bhp)
    schedule.validate_bounds(
        [w.role for w in wells], cfg.injector_bhp, cfg.producer_bhp
    )
    completed = [
        wellsmod.complete_well(w, model.grid, model.rock, cfg.well_radius)
        for w in wells
    ]
    result = simmod.simulate(
        model, completed, schedule, cfg.production_years, cfg.sim_options
    )
    value = economics.npv(result, wells, cfg.econ, cfg.production_years)
    h = economics.constraint_violation(result, cfg.limits)

    out = _resolve_out(cfg, args)
    rows = []
    for s in range(result.times.size):
        row = {"day": result.times[s]}
        for w, label in enumerate(result.producer_labels):
            row[f"q_o_{label}"] = result.q_o_prod[w, s]
            row[f"q_w_{label}"] = result.q_w_prod[w, s]
        for w, label in enumerate(result.injector_labels):
            row[f"q_w_{label}"] = result.q_w_inj[w, s]
        rows.append(row)
    _write_csv(out / "simulated_rates.csv", rows, list(rows[0].keys()))
    perf_rows = [row for cw in completed for row in wellsmod.perforation_rows(cw)]
    _write_csv(
        out / "perforations.csv",
        perf_rows,
        ["well", "i", "j", "k", "segment_m", "well_index"],
    )

    report = {
        "npv": value,
        "h": h,
        "balance_error": result.cum_balance_error,
        "recorded_npv": sol.get("npv"),
    }
    print(json.dumps(report))
    return EXIT_OK


def _bruteforce_positions(cfg: ExperimentConfig):
    """All distinct vertical-well placements: combinations within each role,
    product across roles, no shared cells."""
    n_cells = cfg.grid.nx * cfg.grid.ny
    cells = range(n_cells)
    inj_sets = itertools.combinations(cells, cfg.n_injectors)
    for inj in inj_sets:
        taken = set(inj)
        for prod in itertools.combinations(cells, cfg.n_producers):
            if taken.isdisjoint(prod):
                yield inj, prod


def cmd_bruteforce(args) -> int:
    cfg = load_config(args.config)
    if cfg.well_kind != "vertical":
        raise ConfigError("wells.kind", "bruteforce requires vertical wells")
    if cfg.fixed_controls is None:
        raise ConfigError("controls.fixed", "bruteforce requires fixed controls")
    workers = args.workers or os.cpu_count() or 1
    out = _resolve_out(cfg, args)

    spec = build_problem_spec(cfg)
    combos = list(_bruteforce_positions(cfg))
    if len(combos) > args.max_candidates:
        raise ConfigError(
            "wells", f"{len(combos)} placements exceed --max-candidates "
            f"{args.max_candidates}; bruteforce is for small grids",
        )
    log.info("bruteforce over %d placements", len(combos))

    nx = cfg.grid.nx
    vectors = []
    for inj, prod in combos:
        wells = []
        for w, cell in enumerate(list(inj) + list(prod)):
            role_templates = spec.wells_template[w]
            wells.append(
                wellsmod.WellSpec(
                    role=role_templates.role,
                    shape=VerticalShape(cell % nx, cell // nx),
                    label=role_templates.label,
                )
            )
        vectors.append(encode(wells, np.zeros((0,)), spec))

    with Evaluator(
        ReservoirObjective(spec), budget=len(vectors), workers=workers
    ) as evaluator:
        records = []
        chunk = 512
        for start in range(0, len(vectors), chunk):
            records.extend(evaluator.evaluate_batch(vectors[start : start + chunk]))

    rows = []
    best = None
    for (inj, prod), rec in zip(combos, records):
        ev = rec.evaluation
        rows.append(
            {
                "injector_cells": " ".join(map(str, inj)),
                "producer_cells": " ".join(map(str, prod)),
                "valid": ev.valid,
                "npv": ev.npv if ev.valid else math.nan,
                "h": ev.h if ev.valid else math.nan,
                "feasible": ev.feasible,
            }
        )
        if ev.valid and (best is None or rank_better(ev, best.evaluation)):
            best = rec
    _write_csv(
        out / "bruteforce.csv",
        rows,
        ["injector_cells", "producer_cells", "valid", "npv", "h", "feasible"],
    )
    if best is None:
        _error_report(out / "error.json", "runtime", "no valid placement exists")
        return EXIT_RUNTIME
    _write_solution(out / "best_solution.json", cfg, spec, best, "bruteforce", 0)
    log.info("bruteforce best npv %.6g", best.evaluation.npv)
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wellopt",
        description="Joint well placement and control optimization over an "
        "embedded waterflood simulator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an optimization experiment")
    run.add_argument("config")
    run.add_argument("--seed", type=int, default=None, help="override base seed")
    run.add_argument(
        "--workers", type=int, default=None,
        help="parallel evaluators (default: available cores); results do not "
        "depend on this value",
    )
    run.add_argument("--out", default=None, help="output directory")
    run.add_argument(
        "--dump", action="store_true",
        help="also dump rate series of the best solution",
    )
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="validate a config without running")
    val.add_argument("config")
    val.set_defaults(func=cmd_validate)

    sim = sub.add_parser("simulate", help="forward-simulate a solution JSON")
    sim.add_argument("solution")
    sim.add_argument("config")
    sim.add_argument("--out", default=None)
    sim.set_defaults(func=cmd_simulate)

    bf = sub.add_parser(
        "bruteforce", help="enumerate all vertical placements (small grids)"
    )
    bf.add_argument("config")
    bf.add_argument("--workers", type=int, default=None)
    bf.add_argument("--out", default=None)
    bf.add_argument("--max-candidates", type=int, default=200000)
    bf.set_defaults(func=cmd_bruteforce)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # runtime failure: machine-readable report
        log.exception("run failed")
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
