import numpy as np
import pytest

from wellopt.economics import Evaluation
from wellopt.problem import AnalyticObjective, EvaluationRecord, Evaluator
from wellopt.pso import PsoOptions, SwarmState, pso_run, velocity_position_update


class OnesRng:
    """Stand-in generator forcing r1 = r2 = 1 in the update equations."""

    def random(self, shape):
        return np.ones(shape)


def rec(vector, npv=0.0, h=0.0, feasible=True):
    return EvaluationRecord(
        np.asarray(vector, dtype=float),
        Evaluation(npv=npv, h=h, feasible=feasible, valid=True),
        0,
    )


def test_update_hand_arithmetic_and_repair():
    # N=1: x=0.5, v=0.1, p=0.7, g=0.9, r1=r2=1
    state = SwarmState(
        positions=np.array([[0.5]]),
        velocities=np.array([[0.1]]),
        personal_best=[rec([0.7], npv=1.0)],
        global_best=rec([0.9], npv=2.0),
        rng=OnesRng(),
    )
    velocity_position_update(state)
    v_expected = 0.721 * 0.1 + 1.193 * (0.7 - 0.5) + 1.193 * (0.9 - 0.5)
    # the raw move leaves the box: clamped to 1, velocity negated and halved
    assert state.positions[0, 0] == 1.0
    assert state.velocities[0, 0] == pytest.approx(-v_expected / 2.0, abs=1e-12)


def test_update_inertia_only_at_consensus():
    x = np.array([[0.4, 0.6]])
    state = SwarmState(
        positions=x.copy(),
        velocities=np.array([[0.01, -0.02]]),
        personal_best=[rec(x[0])],
        global_best=rec(x[0]),
        rng=OnesRng(),
    )
    velocity_position_update(state)
    assert state.velocities[0] == pytest.approx([0.721 * 0.01, 0.721 * -0.02])
    assert state.positions[0] == pytest.approx(x[0] + state.velocities[0])


def test_positions_stay_in_box():
    rng = np.random.default_rng(0)
    state = SwarmState(
        positions=rng.random((20, 3)),
        velocities=rng.normal(scale=3.0, size=(20, 3)),
        personal_best=[None] * 20,
        global_best=None,
        rng=np.random.default_rng(1),
    )
    for _ in range(10):
        velocity_position_update(state)
        assert np.all(state.positions >= 0.0)
        assert np.all(state.positions <= 1.0)


def test_pso_sphere_convergence():
    hits = 0
    for seed in range(10):
        obj = AnalyticObjective(f=lambda x: float(np.sum((x - 0.6) ** 2)), n_vars=2)
        ev = Evaluator(obj, budget=5000)
        res = pso_run(ev, seed, PsoOptions())
        if np.linalg.norm(res.best.vector - 0.6) < 1e-3:
            hits += 1
    assert hits >= 9


def test_pso_stagnation_exact_100_iterations():
    obj = AnalyticObjective(f=lambda x: 1.0, n_vars=2)  # constant objective
    ev = Evaluator(obj, budget=100000)
    res = pso_run(ev, 3, PsoOptions(size=10))
    assert len(res.iterations) == 100


def test_pso_deterministic():
    def run():
        obj = AnalyticObjective(f=lambda x: float(np.sum(x**2)), n_vars=3)
        ev = Evaluator(obj, budget=2000)
        res = pso_run(ev, 17, PsoOptions(size=20, stagnation_iters=30))
        return res.best.vector.tolist(), [r["best_npv"] for r in res.iterations]

    a, b = run(), run()
    assert a == b


def test_pso_global_best_monotone_under_ranking():
    obj = AnalyticObjective(
        f=lambda x: float(np.sum((x - 0.3) ** 2)),
        n_vars=2,
        constraint=lambda x: float(0.2 - x[0]),  # infeasible below x0=0.2
    )
    ev = Evaluator(obj, budget=3000)
    res = pso_run(ev, 5, PsoOptions(size=20, stagnation_iters=40))
    best_h = [r["best_h"] for r in res.iterations]
    # once feasible (h=0) the global best never goes back to infeasible
    first_feasible = next((i for i, h in enumerate(best_h) if h == 0.0), None)
    if first_feasible is not None:
        assert all(h == 0.0 for h in best_h[first_feasible:])
    npvs = [r["best_npv"] for r in res.iterations if r["best_h"] == 0.0]
    assert all(a <= b + 1e-15 for a, b in zip(npvs, npvs[1:]))


def test_pso_respects_fresh_limit():
    obj = AnalyticObjective(f=lambda x: float(np.sum(x**2)), n_vars=2)
    ev = Evaluator(obj, budget=10000)
    pso_run(ev, 1, PsoOptions(size=10), fresh_limit=55)
    assert ev.fresh_count <= 55
