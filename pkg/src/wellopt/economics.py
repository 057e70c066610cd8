"""Net present value and flow-rate constraint violation of a simulation.

Revenue is discounted continuously with an annual factor (1+r)^-t evaluated
at each report step's midpoint; drilling costs are charged once, undiscounted.
The violation function integrates excess well rates over their limits, in m3.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .simulator import SimulationResult
from .units import BBL_PER_M3, DAYS_PER_YEAR
from .wells import WellSpec


class NotConverged(Exception):
    """The simulation did not converge; no economics can be computed."""


@dataclass(frozen=True)
class EconomicParams:
    c_o: float = 80.0  # $/bbl produced oil
    c_w_inj: float = 8.0  # $/bbl injected water
    c_w_disp: float = 12.0  # $/bbl produced (disposed) water
    r: float = 0.10  # annual interest rate
    base_drill_cost: float = 25e6  # $ per well
    drill_cost_per_m: float = 50e3  # $/m, length-parameterized wells only

    def __post_init__(self) -> None:
        for name in ("c_o", "c_w_inj", "c_w_disp", "r", "base_drill_cost", "drill_cost_per_m"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass(frozen=True)
class RateLimits:
    """Maximum total rates, m3/day; None means unconstrained."""

    q_max_inj: Optional[float] = None
    q_max_prod: Optional[float] = None

    def __post_init__(self) -> None:
        if self.q_max_inj is not None and self.q_max_inj <= 0:
            raise ValueError("q_max_inj must be positive")
        if self.q_max_prod is not None and self.q_max_prod <= 0:
            raise ValueError("q_max_prod must be positive")

    @property
    def unconstrained(self) -> bool:
        return self.q_max_inj is None and self.q_max_prod is None


@dataclass(frozen=True)
class Evaluation:
    """Outcome of scoring one candidate. Invalid candidates carry no npv/h;
    `costed` records whether a simulation was actually run (geometric rejects
    are caught before simulating and do not consume evaluation budget)."""

    npv: Optional[float]
    h: Optional[float]
    feasible: bool
    valid: bool
    reason: str = ""
    costed: bool = True

    @staticmethod
    def invalid(reason: str, costed: bool = True) -> "Evaluation":
        return Evaluation(
            npv=None, h=None, feasible=False, valid=False, reason=reason, costed=costed
        )


def drilling_cost(wells: list[WellSpec], econ: EconomicParams) -> float:
    """Base cost per well plus per-metre cost for length-parameterized bores."""
    return sum(
        econ.base_drill_cost + econ.drill_cost_per_m * w.drilled_length for w in wells
    )


def npv(
    result: SimulationResult,
    wells: list[WellSpec],
    econ: EconomicParams,
    T_years: float,
) -> float:
    """Discounted cash flow of the rate series minus drilling costs, $."""
    if not result.converged:
        raise NotConverged("cannot compute NPV of a non-converged simulation")

    t_end = result.times
    t_start = t_end - result.step_days
    t_mid_years = (t_start + t_end) / 2.0 / DAYS_PER_YEAR
    discount = (1.0 + econ.r) ** (-t_mid_years)

    oil_bbl = result.q_o_prod.sum(axis=0) * BBL_PER_M3
    disp_bbl = result.q_w_prod.sum(axis=0) * BBL_PER_M3
    inj_bbl = result.q_w_inj.sum(axis=0) * BBL_PER_M3
    daily = econ.c_o * oil_bbl - econ.c_w_disp * disp_bbl - econ.c_w_inj * inj_bbl
    revenue = float(np.sum(daily * result.step_days * discount))
    return revenue - drilling_cost(wells, econ)


def constraint_violation(result: SimulationResult, limits: RateLimits) -> float:
    """Integrated excess of total well rates over their limits, m3."""
    if not result.converged:
        raise NotConverged("cannot score a non-converged simulation")
    if limits.unconstrained:
        return 0.0
    h = 0.0
    if limits.q_max_prod is not None:
        excess = np.maximum(
            result.q_o_prod + result.q_w_prod - limits.q_max_prod, 0.0
        )
        h += float(np.sum(excess * result.step_days))
    if limits.q_max_inj is not None:
        excess = np.maximum(result.q_w_inj - limits.q_max_inj, 0.0)
        h += float(np.sum(excess * result.step_days))
    return h


def feasibility_tolerance(limits: RateLimits, T_years: float) -> float:
    """Throughput-relative tolerance absorbing momentary rate spikes at
    control switches: 1e-3 of the largest limit integrated over the period."""
    if limits.unconstrained:
        return 0.0
    q_ref = max(v for v in (limits.q_max_inj, limits.q_max_prod) if v is not None)
    return 1e-3 * q_ref * T_years * DAYS_PER_YEAR


def is_feasible(h: float, eps_feas: float) -> bool:
    """Boundary inclusive: h == eps_feas is feasible."""
    if h < 0:
        raise ValueError("h must be nonnegative")
    return h <= eps_feas
