"""Top-level drivers: simultaneous MADS, PSO, the MADS-PSO hybrid, the
two-stage sequential procedures, and the repeated-run experiment harness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import mads as madsmod
from . import pso as psomod
from .mads import BarrierState, MadsOptions, MeshState, project_to_mesh
from .problem import (
    BudgetExhausted,
    EvaluationRecord,
    Evaluator,
    NoValidPointFound,
    ProblemSpec,
    ReservoirObjective,
    decode,
    encode,
    latin_hypercube,
)
from .pso import PsoOptions, SwarmState, update_bests, velocity_position_update
from .wells import INJECTOR, PRODUCER

ALGORITHMS = ("mads", "pso", "mads-pso", "sequential-i", "sequential-ii")


@dataclass
class RunResult:
    algorithm: str
    seed: int
    best: EvaluationRecord
    records: list[EvaluationRecord]
    iterations: list[dict]
    fresh_evaluations: int
    stage_marks: dict = field(default_factory=dict)


@dataclass(frozen=True)
class StrategySettings:
    """Algorithm knobs shared by all drivers; see ExperimentConfig."""

    mads: MadsOptions = MadsOptions()
    pso: PsoOptions = PsoOptions()
    stage_budgets: tuple[int, int] = (4000, 8000)
    stage2_initial_delta_p: float = 0.1
    stage1_injector_bhp: float = 425.0
    stage1_producer_bhp: float = 150.0


def hybrid_mads_pso_run(
    evaluator: Evaluator,
    seed,
    mads_options: MadsOptions = MadsOptions(),
    pso_options: PsoOptions = PsoOptions(),
) -> RunResult:
    """MADS with a persistent swarm as its search step.

    Each iteration advances the swarm once, projects the particles onto the
    current mesh and evaluates them; polling around the incumbent happens
    only when that search fails. After any successful iteration the swarm's
    global best is the MADS incumbent, keeping the two methods coupled.
    """
    rng = np.random.default_rng(seed)
    n = evaluator.n_vars
    mesh = MeshState(
        delta_p=mads_options.initial_delta_p,
        max_improving_streak=mads_options.max_improving_streak,
    )
    barrier = BarrierState()

    records = madsmod.initialize_incumbent(
        evaluator, barrier, rng, mads_options.lhs_count
    )
    if barrier.incumbent is None:
        raise NoValidPointFound("every initial point was invalid")

    # Seed the swarm from the initialization sample (topped up if needed).
    swarm_records = records[: pso_options.size]
    positions = [r.vector for r in swarm_records]
    pbest: list[Optional[EvaluationRecord]] = [
        r if r.evaluation.valid else None for r in swarm_records
    ]
    missing = pso_options.size - len(positions)
    if missing > 0:
        extra = latin_hypercube(missing, n, rng)
        positions.extend(extra)
        pbest.extend([None] * missing)
        try:
            extra_records = evaluator.evaluate_batch(list(extra))
            records.extend(extra_records)
            barrier.consider(extra_records)
            for offset, rec in enumerate(extra_records):
                if rec.evaluation.valid:
                    pbest[pso_options.size - missing + offset] = rec
        except BudgetExhausted:
            pass

    state = SwarmState(
        positions=np.array(positions),
        velocities=np.zeros((pso_options.size, n)),
        personal_best=pbest,
        global_best=barrier.incumbent,
        rng=rng,
        iota=pso_options.iota,
        mu=pso_options.mu,
        nu=pso_options.nu,
    )

    iterations: list[dict] = []
    while mesh.delta_p >= mads_options.delta_min:
        if mads_options.max_iterations is not None and mesh.k >= mads_options.max_iterations:
            break
        center = barrier.incumbent.vector

        velocity_position_update(state)
        projected = np.array(
            [project_to_mesh(x, center, mesh.delta_m) for x in state.positions]
        )
        state.positions = projected
        try:
            search_records = evaluator.evaluate_batch(list(projected))
        except BudgetExhausted:
            break
        records.extend(search_records)
        update_bests(state, search_records)
        outcome = barrier.consider(search_records)

        if outcome != madsmod.DOMINATING:
            directions = madsmod.ortho_directions(mesh, n)
            points = []
            for frame in barrier.poll_centers():
                points.extend(madsmod.poll_points(frame.vector, mesh, n, directions))
            try:
                poll_records = evaluator.evaluate_batch(points)
            except BudgetExhausted:
                break
            records.extend(poll_records)
            outcome = max(outcome, barrier.consider(poll_records))

        if outcome == madsmod.DOMINATING:
            state.global_best = barrier.incumbent
        mesh.halton_index += 1
        mesh.update(outcome)
        inc = barrier.incumbent
        iterations.append(
            {
                "k": mesh.k,
                "delta_m": mesh.delta_m,
                "delta_p": mesh.delta_p,
                "incumbent_npv": inc.evaluation.npv if inc else math.nan,
                "h_max": barrier.h_max,
            }
        )

    best = barrier.incumbent
    if best is None:
        raise NoValidPointFound("no valid point found")
    return RunResult(
        algorithm="mads-pso",
        seed=seed,
        best=best,
        records=records,
        iterations=iterations,
        fresh_evaluations=evaluator.fresh_count,
    )


def sequential_run(
    spec: ProblemSpec,
    variant: str,
    seed,
    stage_budgets: tuple[int, int],
    workers: int = 1,
    settings: StrategySettings = StrategySettings(),
) -> RunResult:
    """Two-stage procedure: PSO over well positions under a fixed control
    scheme, then MADS over all variables warm-started from the stage-1 best.

    Variant I pins injectors at their maximum BHP and producers at their
    minimum; variant II pins them at interior values (defaults 425/150 bar).
    Unused stage-1 budget rolls into stage 2.
    """
    b1, b2 = stage_budgets
    if b1 + b2 > spec.budget:
        raise ValueError("stage budgets exceed the problem budget")
    if variant not in ("i", "ii"):
        raise ValueError("variant must be 'i' or 'ii'")

    if variant == "i":
        fixed = {
            INJECTOR: spec.injector_bhp[1],
            PRODUCER: spec.producer_bhp[0],
        }
    else:
        fixed = {
            INJECTOR: settings.stage1_injector_bhp,
            PRODUCER: settings.stage1_producer_bhp,
        }

    spec1 = spec.positional_subproblem(fixed)
    stage1_best: Optional[EvaluationRecord] = None
    stage1_records: list[EvaluationRecord] = []
    stage1_iters: list[dict] = []
    used1 = 0
    with Evaluator(ReservoirObjective(spec1), budget=b1, workers=workers, stage_tag="stage1") as ev1:
        try:
            res1 = psomod.pso_run(ev1, seed, settings.pso)
            stage1_best = res1.best
            stage1_records = res1.records
            stage1_iters = res1.iterations
        except NoValidPointFound:
            stage1_best = None
            stage1_records = list(ev1.records)
        used1 = ev1.fresh_count

    budget2 = b2 + (b1 - used1)
    mads_options = replace(
        settings.mads, initial_delta_p=settings.stage2_initial_delta_p
    )
    with Evaluator(ReservoirObjective(spec), budget=budget2, workers=workers, stage_tag="stage2") as ev2:
        initial = None
        if stage1_best is not None:
            wells1, schedule1 = decode(stage1_best.vector, spec1)
            full_vector = encode(wells1, schedule1.bhp, spec)
            ev2.seed_cache(full_vector, stage1_best.evaluation)
            initial = EvaluationRecord(
                vector=full_vector,
                evaluation=stage1_best.evaluation,
                eval_index=-1,
                stage_tag="stage2-init",
            )
        else:
            # Stage 1 produced nothing valid: stage 2 cold-starts from LHS.
            mads_options = replace(mads_options, initial_delta_p=settings.mads.initial_delta_p)
        res2 = madsmod.mads_run(ev2, seed, mads_options, initial=initial)
        used2 = ev2.fresh_count

    offset = len(stage1_records)
    merged = stage1_records + [
        replace_record_index(r, offset) for r in res2.records if r.eval_index >= 0
    ]
    marks = {
        "stage1_fresh": used1,
        "stage2_fresh": used2,
        "stage1_best_npv": (
            stage1_best.evaluation.npv if stage1_best is not None else math.nan
        ),
    }
    return RunResult(
        algorithm=f"sequential-{variant}",
        seed=seed,
        best=res2.best,
        records=merged,
        iterations=stage1_iters + res2.iterations,
        fresh_evaluations=used1 + used2,
        stage_marks=marks,
    )


def replace_record_index(rec: EvaluationRecord, offset: int) -> EvaluationRecord:
    return EvaluationRecord(
        vector=rec.vector,
        evaluation=rec.evaluation,
        eval_index=rec.eval_index + offset,
        stage_tag=rec.stage_tag,
    )


def run_single(
    spec: ProblemSpec,
    algorithm: str,
    seed,
    workers: int = 1,
    settings: StrategySettings = StrategySettings(),
) -> RunResult:
    """Run one seeded optimization with any of the five strategies."""
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}; choose from {ALGORITHMS}")
    if algorithm in ("sequential-i", "sequential-ii"):
        return sequential_run(
            spec,
            algorithm.split("-")[1],
            seed,
            settings.stage_budgets,
            workers=workers,
            settings=settings,
        )
    with Evaluator(
        ReservoirObjective(spec), budget=spec.budget, workers=workers
    ) as evaluator:
        if algorithm == "mads":
            res = madsmod.mads_run(evaluator, seed, settings.mads)
            return RunResult(
                algorithm="mads",
                seed=seed,
                best=res.best,
                records=res.records,
                iterations=res.iterations,
                fresh_evaluations=evaluator.fresh_count,
            )
        if algorithm == "pso":
            res = psomod.pso_run(evaluator, seed, settings.pso)
            return RunResult(
                algorithm="pso",
                seed=seed,
                best=res.best,
                records=res.records,
                iterations=res.iterations,
                fresh_evaluations=evaluator.fresh_count,
            )
        return hybrid_mads_pso_run(evaluator, seed, settings.mads, settings.pso)


@dataclass
class ExperimentSummary:
    algorithm: str
    n_runs: int
    best: float
    worst: float
    mean: float
    stdev: float
    single_run: bool
    runs: list[RunResult]
    failures: list[tuple[int, str]]  # (seed, reason)


def run_experiment(
    spec: ProblemSpec,
    algorithm: str,
    n_repeats: int,
    base_seed: int,
    workers: int = 1,
    settings: StrategySettings = StrategySettings(),
) -> ExperimentSummary:
    """Repeat independent seeded runs and summarize final NPVs with sample
    statistics (n-1 denominator). Failed runs are excluded and flagged."""
    runs: list[RunResult] = []
    failures: list[tuple[int, str]] = []
    for i in range(n_repeats):
        seed = base_seed + i
        try:
            runs.append(run_single(spec, algorithm, seed, workers, settings))
        except NoValidPointFound as exc:
            failures.append((seed, str(exc)))

    finals = np.array([r.best.evaluation.npv for r in runs], dtype=float)
    if finals.size == 0:
        best = worst = mean = stdev = math.nan
    else:
        best = float(finals.max())
        worst = float(finals.min())
        mean = float(finals.mean())
        stdev = float(finals.std(ddof=1)) if finals.size > 1 else 0.0
    return ExperimentSummary(
        algorithm=algorithm,
        n_runs=len(runs),
        best=best,
        worst=worst,
        mean=mean,
        stdev=stdev,
        single_run=len(runs) == 1,
        runs=runs,
        failures=failures,
    )


def convergence_series(records: list[EvaluationRecord]) -> list[dict]:
    """Best-so-far series for plotting: the running feasible-best NPV (NaN
    until the first feasible point) and the running least violation."""
    rows = []
    best_npv = math.nan
    best_h = math.inf
    for i, rec in enumerate(records):
        ev = rec.evaluation
        if ev.valid:
            if ev.feasible and (math.isnan(best_npv) or ev.npv > best_npv):
                best_npv = ev.npv
            if ev.h is not None and ev.h < best_h:
                best_h = ev.h
        rows.append(
            {
                "record": i,
                "best_feasible_npv": best_npv,
                "best_h": best_h if best_h < math.inf else math.nan,
            }
        )
    return rows
