"""Constrained particle swarm optimization with a global-best topology.

Feasibility is handled by a three-rule ranking (smaller violation between
infeasible points, feasible beats infeasible, higher objective between
feasible points), so particles may start infeasible and are drawn toward
the feasible region without penalty tuning. Particles leaving the unit box
are brought back to the boundary with the offending velocity components
negated and halved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .problem import (
    BudgetExhausted,
    EvaluationRecord,
    Evaluator,
    NoValidPointFound,
    latin_hypercube,
    rank_better,
)


@dataclass(frozen=True)
class PsoOptions:
    size: int = 50
    iota: float = 0.721  # inertia
    mu: float = 1.193  # personal-best pull
    nu: float = 1.193  # global-best pull
    stagnation_iters: int = 100
    max_iterations: Optional[int] = None


@dataclass
class SwarmState:
    positions: np.ndarray  # [size, n]
    velocities: np.ndarray  # [size, n]
    personal_best: list[Optional[EvaluationRecord]]
    global_best: Optional[EvaluationRecord]
    rng: np.random.Generator
    iota: float = 0.721
    mu: float = 1.193
    nu: float = 1.193

    @property
    def size(self) -> int:
        return self.positions.shape[0]


def velocity_position_update(state: SwarmState) -> None:
    """One synchronous swarm move with fresh uniform multipliers per
    particle per coordinate, then boundary repair."""
    size, n = state.positions.shape
    r1 = state.rng.random((size, n))
    r2 = state.rng.random((size, n))

    p_best = np.array(
        [
            rec.vector if rec is not None else state.positions[i]
            for i, rec in enumerate(state.personal_best)
        ]
    )
    if state.global_best is not None:
        g = state.global_best.vector
        g_pull = state.nu * r2 * (g[None, :] - state.positions)
    else:
        g_pull = np.zeros((size, n))

    state.velocities = (
        state.iota * state.velocities
        + state.mu * r1 * (p_best - state.positions)
        + g_pull
    )
    state.positions = state.positions + state.velocities

    low = state.positions < 0.0
    high = state.positions > 1.0
    state.positions[low] = 0.0
    state.positions[high] = 1.0
    out = low | high
    state.velocities[out] *= -0.5


def update_bests(state: SwarmState, records: list[EvaluationRecord]) -> bool:
    """Update per-particle and global bests under the feasibility ranking;
    True when the global best record changed."""
    changed = False
    for i, rec in enumerate(records):
        if not rec.evaluation.valid:
            continue
        pb = state.personal_best[i]
        if pb is None or rank_better(rec.evaluation, pb.evaluation):
            state.personal_best[i] = rec
        gb = state.global_best
        if gb is None or rank_better(rec.evaluation, gb.evaluation):
            state.global_best = rec
            changed = True
    return changed


@dataclass
class PsoResult:
    best: EvaluationRecord
    iterations: list[dict]
    records: list[EvaluationRecord]


def pso_run(
    evaluator: Evaluator,
    seed,
    options: PsoOptions = PsoOptions(),
    fresh_limit: Optional[int] = None,
) -> PsoResult:
    """Swarm loop: stops on budget (or the stage's fresh-simulation cap),
    stagnation of the global best, or the iteration cap."""
    rng = np.random.default_rng(seed)
    n = evaluator.n_vars
    start_fresh = evaluator.fresh_count

    def limit_left() -> Optional[int]:
        if fresh_limit is None:
            return None
        return fresh_limit - (evaluator.fresh_count - start_fresh)

    positions = latin_hypercube(options.size, n, rng)
    state = SwarmState(
        positions=positions,
        velocities=np.zeros_like(positions),
        personal_best=[None] * options.size,
        global_best=None,
        rng=rng,
        iota=options.iota,
        mu=options.mu,
        nu=options.nu,
    )

    records: list[EvaluationRecord] = []
    iterations: list[dict] = []

    def evaluate_swarm() -> Optional[list[EvaluationRecord]]:
        cap = limit_left()
        if cap is not None and cap <= 0:
            return None
        try:
            batch = evaluator.evaluate_batch(list(state.positions), fresh_limit=cap)
        except BudgetExhausted:
            return None
        return batch if batch else None

    batch = evaluate_swarm()
    if batch is not None:
        records.extend(batch)
        update_bests(state, batch)

    # With zero initial velocities, an all-invalid design would leave the
    # swarm frozen (no personal or global pull); re-draw fresh designs until
    # some particle lands on a valid candidate.
    redraws = 0
    while batch is not None and state.global_best is None and redraws < 100:
        redraws += 1
        state.positions = latin_hypercube(options.size, n, rng)
        batch = evaluate_swarm()
        if batch is not None:
            records.extend(batch)
            update_bests(state, batch)

    stagnant = 0
    iteration = 0
    while batch is not None:
        if options.max_iterations is not None and iteration >= options.max_iterations:
            break
        if stagnant >= options.stagnation_iters:
            break
        iteration += 1
        velocity_position_update(state)
        batch = evaluate_swarm()
        if batch is None:
            break
        records.extend(batch)
        improved = update_bests(state, batch)
        stagnant = 0 if improved else stagnant + 1
        gb = state.global_best
        iterations.append(
            {
                "iteration": iteration,
                "best_npv": gb.evaluation.npv if gb else math.nan,
                "best_h": gb.evaluation.h if gb else math.nan,
                "mean_velocity_norm": float(
                    np.mean(np.linalg.norm(state.velocities, axis=1))
                ),
            }
        )

    if state.global_best is None:
        raise NoValidPointFound("every evaluated particle was invalid")
    return PsoResult(best=state.global_best, iterations=iterations, records=records)
