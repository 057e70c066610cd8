"""Mesh adaptive direct search with orthogonal poll directions and a
progressive barrier for general constraints.

Poll directions come from a Halton point mapped to an integer vector and
expanded through an integer Householder transform, giving 2N mutually
orthogonal mesh directions whose union over iterations grows dense on the
unit sphere. The poll stencil radius scales with the poll size parameter
while the underlying mesh shrinks quadratically, the standard coupling that
makes the direction set asymptotically dense.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .problem import (
    BudgetExhausted,
    EvaluationRecord,
    Evaluator,
    NoValidPointFound,
    latin_hypercube,
)


def _primes(count: int) -> list[int]:
    out: list[int] = []
    candidate = 2
    while len(out) < count:
        if all(candidate % p for p in out):
            out.append(candidate)
        candidate += 1
    return out


def halton_point(index: int, n: int) -> np.ndarray:
    """Halton sequence point in (0,1)^n (radical inverses, prime bases)."""
    if index < 1:
        raise ValueError("Halton index starts at 1")
    point = np.empty(n)
    for axis, base in enumerate(_primes(n)):
        value, f, i = 0.0, 1.0, index
        while i > 0:
            f /= base
            value += f * (i % base)
            i //= base
        point[axis] = value
    return point


DOMINATING = 2  # an incumbent improved: expand the poll size
IMPROVING = 1  # smaller violation found: hold the poll size
UNSUCCESSFUL = 0  # nothing gained: shrink


@dataclass
class MeshState:
    """Mesh and poll size parameters; delta_m = min(delta_p, delta_p^2)."""

    delta_p: float = 0.25
    delta_m: float = field(init=False)
    k: int = 0
    halton_index: int = 1
    improving_streak: int = 0
    max_improving_streak: int = 20  # then treat as unsuccessful, else the
    # barrier can nudge violations down forever without the mesh shrinking

    def __post_init__(self) -> None:
        self.delta_m = min(self.delta_p, self.delta_p**2)

    def update(self, outcome: int) -> None:
        if outcome == IMPROVING:
            self.improving_streak += 1
            if self.improving_streak > self.max_improving_streak:
                outcome = UNSUCCESSFUL
                self.improving_streak = 0
        else:
            self.improving_streak = 0
        if outcome == DOMINATING:
            self.delta_p = min(1.0, 4.0 * self.delta_p)
        elif outcome == UNSUCCESSFUL:
            self.delta_p = self.delta_p / 4.0
        self.delta_m = min(self.delta_p, self.delta_p**2)
        self.k += 1


def ortho_directions(state: MeshState, n: int) -> np.ndarray:
    """2n integer poll directions, mutually orthogonal by construction.

    The Halton point is mapped to a unit vector, scaled to the integer
    lattice at the resolution set by delta_p/delta_m, and expanded through
    the integer Householder matrix |q|^2 I - 2 q q^T; columns of [H, -H]
    give poll displacements of size Theta(delta_p) once multiplied by the
    mesh size.
    """
    u = halton_point(state.halton_index, n)
    v = 2.0 * u - 1.0
    norm = float(np.linalg.norm(v))
    if norm < 1e-12:
        v = np.ones(n)
        norm = math.sqrt(n)
    v = v / norm

    rho = state.delta_p / state.delta_m
    q = np.round(math.sqrt(rho) * v).astype(np.int64)
    if not q.any():
        lead = int(np.argmax(np.abs(v)))
        q[lead] = 1 if v[lead] >= 0 else -1

    norm_sq = int(q @ q)
    H = norm_sq * np.eye(n, dtype=np.int64) - 2 * np.outer(q, q)
    return np.vstack([H, -H])


def project_to_mesh(
    point: np.ndarray, incumbent: np.ndarray, delta_m: float
) -> np.ndarray:
    """Nearest mesh point to `point` on the lattice anchored at the
    incumbent, then moved inside [0,1] along the lattice (coordinate-wise),
    so bound projection preserves mesh membership."""
    steps = np.round((point - incumbent) / delta_m)
    upper = np.floor((1.0 - incumbent) / delta_m)
    lower = -np.floor(incumbent / delta_m)
    steps = np.clip(steps, lower, upper)
    return np.clip(incumbent + delta_m * steps, 0.0, 1.0)


def poll_points(
    incumbent: np.ndarray, state: MeshState, n: int, directions: Optional[np.ndarray] = None
) -> list[np.ndarray]:
    """Poll stencil around the incumbent, bound-projected along the lattice."""
    if directions is None:
        directions = ortho_directions(state, n)
    out = []
    for d in directions:
        point = incumbent + state.delta_m * d
        out.append(project_to_mesh(point, incumbent, state.delta_m))
    return out


@dataclass
class BarrierState:
    """Progressive barrier bookkeeping.

    Infeasible points may serve as a second frame center while their
    violation stays below h_max, which never increases. That center is the
    best-objective point under the threshold, which is what lets the search
    travel along an active constraint boundary from the infeasible side;
    the returned solution still prefers the feasible incumbent and falls
    back to the least-violating point ever seen.
    """

    h_max: float = math.inf
    sufficient_decrease: float = 0.05  # fractional h drop that counts as progress
    feasible_incumbent: Optional[EvaluationRecord] = None
    infeasible_incumbent: Optional[EvaluationRecord] = None
    least_h_ever: Optional[EvaluationRecord] = None
    _seen_h: list = field(default_factory=list)  # every valid h evaluated
    _infeasible_archive: list = field(default_factory=list)

    @property
    def incumbent(self) -> Optional[EvaluationRecord]:
        return self.feasible_incumbent or self.least_h_ever

    def poll_centers(self) -> list:
        """Frame centers: both incumbents when they exist, so the search can
        progress along an active constraint boundary from either side."""
        centers = []
        if self.feasible_incumbent is not None:
            centers.append(self.feasible_incumbent)
        if self.infeasible_incumbent is not None:
            centers.append(self.infeasible_incumbent)
        if not centers and self.least_h_ever is not None:
            centers.append(self.least_h_ever)
        return centers

    @staticmethod
    def _inf_better(ev, inc_ev) -> bool:
        return ev.npv > inc_ev.npv or (ev.npv == inc_ev.npv and ev.h < inc_ev.h)

    def consider(self, records: Sequence[EvaluationRecord]) -> int:
        """Absorb a batch of evaluations and classify the iteration:
        DOMINATING when an incumbent improved, IMPROVING when only a smaller
        violation turned up, UNSUCCESSFUL otherwise."""
        prev_inf = self.infeasible_incumbent
        prev_inf_h = prev_inf.evaluation.h if prev_inf is not None else math.inf
        outcome = UNSUCCESSFUL
        valid = [r for r in records if r.evaluation.valid]
        for rec in valid:
            ev = rec.evaluation
            self._seen_h.append(ev.h)
            if ev.feasible:
                if (
                    self.feasible_incumbent is None
                    or ev.npv > self.feasible_incumbent.evaluation.npv
                ):
                    self.feasible_incumbent = rec
                    outcome = DOMINATING
            else:
                self._infeasible_archive.append(rec)
                lh = self.least_h_ever
                if lh is None or ev.h < lh.evaluation.h or (
                    ev.h == lh.evaluation.h and ev.npv > lh.evaluation.npv
                ):
                    self.least_h_ever = rec
                if (
                    ev.h < prev_inf_h * (1.0 - self.sufficient_decrease)
                    and outcome == UNSUCCESSFUL
                ):
                    outcome = IMPROVING
                if ev.h <= self.h_max:
                    inc = self.infeasible_incumbent
                    if inc is None or self._inf_better(ev, inc.evaluation):
                        self.infeasible_incumbent = rec
                        if prev_inf is None or (
                            ev.h <= prev_inf_h and ev.npv >= prev_inf.evaluation.npv
                        ):
                            outcome = DOMINATING
                        else:
                            outcome = max(outcome, IMPROVING)

        # Threshold ratchet, never increasing, applied when the iteration
        # made progress: the largest *violating* h, over everything
        # evaluated so far, that stays below the previous infeasible
        # incumbent's h. Feasible h = 0 values are not barrier levels
        # (including them would collapse the threshold outright), and
        # unsuccessful iterations leave the threshold alone so the
        # infeasible frame center survives mesh refinement.
        if outcome != UNSUCCESSFUL:
            below = [h for h in self._seen_h if 0.0 < h < prev_inf_h]
            if below:
                self.h_max = min(self.h_max, max(below))
        if (
            self.infeasible_incumbent is not None
            and self.infeasible_incumbent.evaluation.h > self.h_max
        ):
            self.infeasible_incumbent = self._best_admissible()
        return outcome

    def _best_admissible(self) -> Optional[EvaluationRecord]:
        best = None
        for rec in self._infeasible_archive:
            if rec.evaluation.h > self.h_max:
                continue
            if best is None or self._inf_better(rec.evaluation, best.evaluation):
                best = rec
        return best


@dataclass(frozen=True)
class MadsOptions:
    initial_delta_p: float = 0.25
    delta_min: float = 1e-6
    lhs_count: int = 60
    max_iterations: Optional[int] = None
    max_improving_streak: int = 20


@dataclass
class MadsResult:
    best: EvaluationRecord
    iterations: list[dict]
    records: list[EvaluationRecord]


def mads_step(
    evaluator: Evaluator,
    mesh: MeshState,
    barrier: BarrierState,
    search_points: Optional[Sequence[np.ndarray]] = None,
) -> tuple[bool, list[EvaluationRecord]]:
    """One search-then-poll iteration around the barrier incumbent.

    Search points (already on the mesh, or projected here) are evaluated
    first; polling only happens when the search fails to improve either
    incumbent. Updates the mesh and barrier in place.
    """
    incumbent = barrier.incumbent
    if incumbent is None:
        raise NoValidPointFound("no incumbent to poll around")
    center = incumbent.vector
    n = center.shape[0]

    records: list[EvaluationRecord] = []
    outcome = UNSUCCESSFUL
    if search_points:
        projected = [project_to_mesh(p, center, mesh.delta_m) for p in search_points]
        search_records = evaluator.evaluate_batch(projected)
        records.extend(search_records)
        outcome = barrier.consider(search_records)

    if outcome != DOMINATING:
        directions = ortho_directions(mesh, n)
        points = []
        for frame in barrier.poll_centers():
            points.extend(poll_points(frame.vector, mesh, n, directions))
        poll_records = evaluator.evaluate_batch(points)
        records.extend(poll_records)
        outcome = max(outcome, barrier.consider(poll_records))

    mesh.halton_index += 1
    mesh.update(outcome)
    return outcome == DOMINATING, records


def initialize_incumbent(
    evaluator: Evaluator,
    barrier: BarrierState,
    seed,
    lhs_count: int,
) -> list[EvaluationRecord]:
    """Latin-hypercube initialization; keeps sampling fresh designs while
    every point comes back invalid and budget remains."""
    rng = np.random.default_rng(seed)
    records: list[EvaluationRecord] = []
    for _ in range(100):  # cap re-draws when rejects consume no budget
        count = min(lhs_count, max(evaluator.remaining, 1))
        points = latin_hypercube(count, evaluator.n_vars, rng)
        try:
            batch = evaluator.evaluate_batch(list(points))
        except BudgetExhausted:
            break
        records.extend(batch)
        barrier.consider(batch)
        if barrier.incumbent is not None or evaluator.remaining <= 0:
            break
    return records


def mads_run(
    evaluator: Evaluator,
    seed,
    options: MadsOptions = MadsOptions(),
    initial: Optional[EvaluationRecord] = None,
) -> MadsResult:
    """Full MADS loop: stops on budget exhaustion, the poll size falling
    below delta_min, or the iteration cap."""
    mesh = MeshState(
        delta_p=options.initial_delta_p,
        max_improving_streak=options.max_improving_streak,
    )
    barrier = BarrierState()
    records: list[EvaluationRecord] = []

    if initial is not None:
        barrier.consider([initial])
        records.append(initial)
    else:
        records.extend(initialize_incumbent(evaluator, barrier, seed, options.lhs_count))
    if barrier.incumbent is None:
        raise NoValidPointFound("every initial point was invalid")

    iterations: list[dict] = []
    prev_center = barrier.incumbent.vector if barrier.incumbent is not None else None
    speculative: Optional[np.ndarray] = None
    while mesh.delta_p >= options.delta_min:
        if options.max_iterations is not None and mesh.k >= options.max_iterations:
            break
        search = [speculative] if speculative is not None else None
        try:
            success, new_records = mads_step(evaluator, mesh, barrier, search)
        except BudgetExhausted:
            break
        records.extend(new_records)

        # Speculative search: after a success, try one more step along the
        # direction the incumbent just moved in.
        speculative = None
        inc = barrier.incumbent
        if success and inc is not None and prev_center is not None:
            move = inc.vector - prev_center
            if np.any(move):
                speculative = inc.vector + 2.0 * move
        prev_center = inc.vector if inc is not None else None

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
    return MadsResult(best=best, iterations=iterations, records=records)
