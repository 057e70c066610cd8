"""Problem definition layer shared by every algorithm.

All algorithms work on normalized vectors in [0,1]^N; this module owns the
mapping to physical well parameters and BHP schedules, the evaluation
pipeline (decode, geometric validity, simulate, score), exact-match
caching, budget accounting and parallel batch dispatch.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import economics, simulator, wells as wellsmod
from .economics import EconomicParams, Evaluation, RateLimits
from .reservoir import ReservoirModel
from .simulator import ControlSchedule, SimOptions, SolverFailed
from .wells import (
    INJECTOR,
    DegenerateIndex,
    HorizontalShape,
    InclinedShape,
    PathExitsGrid,
    VerticalShape,
    WellSpec,
)


class BudgetExhausted(Exception):
    """No simulation budget remains."""


class NoValidPointFound(Exception):
    """Every evaluated point was invalid."""


@dataclass(frozen=True)
class VariableDescriptor:
    name: str
    lower: float
    upper: float
    periodic: bool = False
    integer: bool = False

    def decode(self, u: float) -> float:
        """Map u in [0,1] to the physical range."""
        span = self.upper - self.lower
        if self.periodic:
            return self.lower + (u * span) % span
        value = self.lower + u * span
        if self.integer:
            value = min(math.floor(value + 0.5), int(self.upper))
        return value

    def encode(self, value: float) -> float:
        span = self.upper - self.lower
        if self.periodic:
            return (value - self.lower) % span / span
        return (value - self.lower) / span


@dataclass(frozen=True)
class WellTemplate:
    role: str
    kind: str  # vertical | horizontal | inclined
    label: str


@dataclass(frozen=True)
class ProblemSpec:
    """Full description of one optimization problem over a reservoir."""

    model: ReservoirModel
    wells_template: tuple[WellTemplate, ...]
    control_intervals: int
    production_years: float
    injector_bhp: tuple[float, float] = (300.0, 450.0)
    producer_bhp: tuple[float, float] = (125.0, 260.0)
    l_bounds: tuple[float, float] = (100.0, 320.0)
    phi_bounds: tuple[float, float] = (0.0, 10.0)
    z_bounds_injector: tuple[float, float] = (25.0, 50.0)
    z_bounds_producer: tuple[float, float] = (0.0, 50.0)
    econ: EconomicParams = EconomicParams()
    limits: RateLimits = RateLimits()
    budget: int = 12000
    fixed_controls: Optional[dict[str, float]] = None  # role -> BHP
    r_well: float = 0.1
    sim_options: SimOptions = SimOptions()

    @property
    def descriptors(self) -> tuple[VariableDescriptor, ...]:
        return make_descriptors(self)

    @property
    def n_vars(self) -> int:
        return len(make_descriptors(self))

    @property
    def eps_feas(self) -> float:
        return economics.feasibility_tolerance(self.limits, self.production_years)

    def positional_subproblem(self, fixed_controls: dict[str, float]) -> "ProblemSpec":
        """Restriction to positional variables with pinned per-role BHPs."""
        return replace(self, fixed_controls=dict(fixed_controls))


def _positional_descriptors(spec: ProblemSpec, tpl: WellTemplate):
    grid = spec.model.grid
    pre = tpl.label
    if tpl.kind == "vertical":
        return [
            VariableDescriptor(f"{pre}.x_idx", 0, grid.nx - 1, integer=True),
            VariableDescriptor(f"{pre}.y_idx", 0, grid.ny - 1, integer=True),
        ]
    ext_x, ext_y, _ = grid.extent
    common = [
        VariableDescriptor(f"{pre}.x", 0.0, ext_x),
        VariableDescriptor(f"{pre}.y", 0.0, ext_y),
    ]
    if tpl.kind == "horizontal":
        return common + [
            VariableDescriptor(f"{pre}.l", *spec.l_bounds),
            VariableDescriptor(f"{pre}.theta", 0.0, 360.0, periodic=True),
        ]
    if tpl.kind == "inclined":
        z_bounds = (
            spec.z_bounds_injector if tpl.role == INJECTOR else spec.z_bounds_producer
        )
        return common + [
            VariableDescriptor(f"{pre}.z", *z_bounds),
            VariableDescriptor(f"{pre}.l", *spec.l_bounds),
            VariableDescriptor(f"{pre}.theta", 0.0, 360.0, periodic=True),
            VariableDescriptor(f"{pre}.phi", *spec.phi_bounds),
        ]
    raise ValueError(f"unknown well kind {tpl.kind!r}")


def make_descriptors(spec: ProblemSpec) -> tuple[VariableDescriptor, ...]:
    """Variable layout: every well's positional block, then, when controls
    are free, one BHP per well per control interval."""
    out: list[VariableDescriptor] = []
    for tpl in spec.wells_template:
        out.extend(_positional_descriptors(spec, tpl))
    if spec.fixed_controls is None:
        for tpl in spec.wells_template:
            lo, hi = spec.injector_bhp if tpl.role == INJECTOR else spec.producer_bhp
            for m in range(spec.control_intervals):
                out.append(VariableDescriptor(f"{tpl.label}.bhp{m}", lo, hi))
    return tuple(out)


def decode(v: np.ndarray, spec: ProblemSpec) -> tuple[list[WellSpec], ControlSchedule]:
    """Map a normalized vector to well specs and a BHP schedule. Always
    produces a candidate; geometric validity is checked separately."""
    descs = make_descriptors(spec)
    if v.shape != (len(descs),):
        raise ValueError(f"expected vector of length {len(descs)}")
    values = [d.decode(float(u)) for d, u in zip(descs, v)]

    pos = 0
    specs: list[WellSpec] = []
    for tpl in spec.wells_template:
        if tpl.kind == "vertical":
            shape = VerticalShape(int(values[pos]), int(values[pos + 1]))
            pos += 2
        elif tpl.kind == "horizontal":
            shape = HorizontalShape(*values[pos : pos + 4])
            pos += 4
        else:
            shape = InclinedShape(*values[pos : pos + 6])
            pos += 6
        specs.append(WellSpec(role=tpl.role, shape=shape, label=tpl.label))

    n_wells = len(spec.wells_template)
    if spec.fixed_controls is not None:
        bhp = np.array(
            [
                [spec.fixed_controls[tpl.role]] * spec.control_intervals
                for tpl in spec.wells_template
            ]
        )
    else:
        bhp = np.array(values[pos:]).reshape(n_wells, spec.control_intervals)
    interval_years = spec.production_years / spec.control_intervals
    schedule = simulator.schedule_from_years(interval_years, bhp)
    return specs, schedule


def encode(specs: Sequence[WellSpec], bhp: np.ndarray, spec: ProblemSpec) -> np.ndarray:
    """Inverse of decode for representable physical values."""
    descs = make_descriptors(spec)
    values: list[float] = []
    for well in specs:
        s = well.shape
        if isinstance(s, VerticalShape):
            values += [s.x_idx, s.y_idx]
        elif isinstance(s, HorizontalShape):
            values += [s.x, s.y, s.l, s.theta]
        else:
            values += [s.x, s.y, s.z, s.l, s.theta, s.phi]
    if spec.fixed_controls is None:
        values += list(np.asarray(bhp).ravel())
    return np.array([d.encode(val) for d, val in zip(descs, values)])


# ---------------------------------------------------------------------------
# Objectives


@dataclass(frozen=True)
class ReservoirObjective:
    """decode -> geometric validity -> simulate -> NPV and violation."""

    spec: ProblemSpec

    @property
    def n_vars(self) -> int:
        return self.spec.n_vars

    def __call__(self, v: np.ndarray) -> Evaluation:
        spec = self.spec
        well_specs, schedule = decode(v, spec)
        try:
            completed = [
                wellsmod.complete_well(w, spec.model.grid, spec.model.rock, spec.r_well)
                for w in well_specs
            ]
        except (PathExitsGrid, DegenerateIndex) as exc:
            return Evaluation.invalid(str(exc), costed=False)
        reason = wellsmod.validate_configuration(well_specs, spec.model.grid)
        if reason is not None:
            return Evaluation.invalid(reason, costed=False)
        try:
            result = simulator.simulate(
                spec.model, completed, schedule, spec.production_years, spec.sim_options
            )
        except SolverFailed as exc:
            return Evaluation.invalid(str(exc))
        if not result.converged:
            return Evaluation.invalid(
                f"mass balance error {result.cum_balance_error:.3g} above tolerance"
            )
        value = economics.npv(result, well_specs, spec.econ, spec.production_years)
        h = economics.constraint_violation(result, spec.limits)
        return Evaluation(
            npv=value,
            h=h,
            feasible=economics.is_feasible(h, spec.eps_feas),
            valid=True,
        )


@dataclass(frozen=True)
class AnalyticObjective:
    """Synthetic stand-in used to verify the optimizers: maximizes -f, with
    an optional constraint function whose positive part is the violation."""

    f: Callable[[np.ndarray], float]
    n_vars: int
    constraint: Optional[Callable[[np.ndarray], float]] = None
    eps_feas: float = 0.0

    def __call__(self, v: np.ndarray) -> Evaluation:
        value = -float(self.f(v))
        h = 0.0
        if self.constraint is not None:
            h = max(float(self.constraint(v)), 0.0)
        return Evaluation(
            npv=value, h=h, feasible=h <= self.eps_feas, valid=True
        )


@dataclass(frozen=True)
class EvaluationRecord:
    vector: np.ndarray
    evaluation: Evaluation
    eval_index: int
    stage_tag: str = ""


# ---------------------------------------------------------------------------
# Batched, cached, budgeted evaluation


_WORKER_OBJECTIVE = None


def _worker_init(objective) -> None:
    global _WORKER_OBJECTIVE
    _WORKER_OBJECTIVE = objective


def _worker_eval(payload):
    index, vector = payload
    return index, _WORKER_OBJECTIVE(vector)


class Evaluator:
    """Single concurrency boundary: dispatches batches of trial points.

    Exact duplicate vectors are served from the cache without consuming
    budget; fresh simulations are counted against the budget and batches are
    truncated once it runs out. Results are returned in input order, and are
    identical for any worker count.
    """

    def __init__(self, objective, budget: int, workers: int = 1, stage_tag: str = ""):
        self.objective = objective
        self.n_vars = objective.n_vars
        self.budget = int(budget)
        self.workers = max(1, int(workers))
        self.stage_tag = stage_tag
        self.fresh_count = 0
        self.records: list[EvaluationRecord] = []
        self._cache: dict[bytes, Evaluation] = {}
        self._pool: Optional[ProcessPoolExecutor] = None
        self._next_index = 0

    @property
    def remaining(self) -> int:
        return self.budget - self.fresh_count

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self) -> "Evaluator":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def seed_cache(self, vector: np.ndarray, evaluation: Evaluation) -> None:
        """Pre-register a known evaluation (e.g. a stage-1 incumbent carried
        into stage 2), without consuming budget."""
        self._cache[self._key(vector)] = evaluation

    @staticmethod
    def _key(vector: np.ndarray) -> bytes:
        return np.ascontiguousarray(vector, dtype=float).tobytes()

    def _get_pool(self) -> ProcessPoolExecutor:
        if self._pool is None:
            self._pool = ProcessPoolExecutor(
                max_workers=self.workers,
                initializer=_worker_init,
                initargs=(self.objective,),
            )
        return self._pool

    def evaluate_batch(
        self, points: Sequence[np.ndarray], fresh_limit: Optional[int] = None
    ) -> list[EvaluationRecord]:
        if len(points) == 0:
            raise ValueError("batch must be nonempty")
        allowed = self.remaining
        if fresh_limit is not None:
            allowed = min(allowed, fresh_limit)
        if self.remaining <= 0:
            raise BudgetExhausted(f"budget of {self.budget} evaluations consumed")

        # Walk in input order: serve cache hits, schedule fresh points until
        # the allowance runs out, then truncate the batch.
        kept: list[np.ndarray] = []
        keys: list[bytes] = []
        fresh_keys: dict[bytes, np.ndarray] = {}
        for point in points:
            v = np.asarray(point, dtype=float)
            key = self._key(v)
            if key not in self._cache and key not in fresh_keys:
                if len(fresh_keys) >= allowed:
                    break
                fresh_keys[key] = v
            kept.append(v)
            keys.append(key)

        if fresh_keys:
            items = list(fresh_keys.items())
            if self.workers > 1 and len(items) > 1:
                pool = self._get_pool()
                results = list(
                    pool.map(
                        _worker_eval,
                        [(i, v) for i, (_, v) in enumerate(items)],
                        chunksize=max(1, len(items) // (4 * self.workers)),
                    )
                )
                results.sort(key=lambda pair: pair[0])
                evaluations = [ev for _, ev in results]
            else:
                evaluations = [self.objective(v) for _, v in items]
            for (key, _), ev in zip(items, evaluations):
                self._cache[key] = ev
            # only actual simulations count against the budget; geometric
            # rejects are caught before simulating
            self.fresh_count += sum(1 for ev in evaluations if ev.costed)

        out = []
        for v, key in zip(kept, keys):
            record = EvaluationRecord(
                vector=v,
                evaluation=self._cache[key],
                eval_index=self._next_index,
                stage_tag=self.stage_tag,
            )
            self._next_index += 1
            out.append(record)
        self.records.extend(out)
        return out


def latin_hypercube(count: int, n: int, seed) -> np.ndarray:
    """One sample per stratum per axis with uniform jitter, deterministic
    per seed. Accepts either an integer seed or a Generator."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    samples = np.empty((count, n))
    for axis in range(n):
        strata = rng.permutation(count)
        samples[:, axis] = (strata + rng.random(count)) / count
    return samples


def rank_better(challenger: Evaluation, incumbent: Evaluation) -> bool:
    """True when the challenger strictly beats the incumbent under the
    feasibility-first rules: between infeasible points smaller h wins, any
    feasible point beats any infeasible one, between feasible points higher
    npv wins. Ties keep the incumbent (stable)."""
    if challenger.feasible and not incumbent.feasible:
        return True
    if incumbent.feasible and not challenger.feasible:
        return False
    if not challenger.feasible:  # both infeasible
        return challenger.h < incumbent.h
    return challenger.npv > incumbent.npv


def best_record(records: Sequence[EvaluationRecord]) -> Optional[EvaluationRecord]:
    """Rank-best valid record, earliest on ties."""
    best = None
    for rec in records:
        if not rec.evaluation.valid:
            continue
        if best is None or rank_better(rec.evaluation, best.evaluation):
            best = rec
    return best
