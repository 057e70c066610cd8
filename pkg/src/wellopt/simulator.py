"""Two-phase (oil/water) slightly compressible IMPES waterflood simulator.

Pressure is solved implicitly per report step (two-point flux, harmonic
transmissibilities, mobilities upwinded from the previous pressure field);
water saturation is advanced explicitly in fractional-flow form with
CFL-limited sub-steps, which conserves water volume exactly up to
saturation clipping. Wells are BHP-controlled through per-segment well
indices; producer/injector rates are clamped to their physical sign by
deactivating wrong-sign perforations and re-solving, so reported rates stay
consistent with the pressure equation.

Gravity enters only through hydrostatic initialization; there is no gravity
term in the flux. This is a deliberate simplification for thin desk-scale
reservoirs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import LinearOperator, cg

from . import _kernels
from .reservoir import FluidModel, ReservoirModel, relperm
from .units import DAYS_PER_YEAR
from .wells import INJECTOR, CompletedWell


class SolverFailed(Exception):
    """Linear-solve non-convergence or CFL collapse; the trial point is
    treated as invalid input, not penalized."""


@dataclass(frozen=True)
class ControlSchedule:
    """Piecewise-constant BHP controls: bhp[w, m] holds well w during
    interval m. Wells are indexed in simulation well order."""

    interval_days: float
    bhp: np.ndarray

    def __post_init__(self) -> None:
        if self.interval_days <= 0:
            raise ValueError("interval_days must be positive")
        if self.bhp.ndim != 2:
            raise ValueError("bhp must be a [wells x intervals] matrix")

    @property
    def n_intervals(self) -> int:
        return self.bhp.shape[1]

    @property
    def total_days(self) -> float:
        return self.n_intervals * self.interval_days

    def validate_bounds(
        self,
        roles: list[str],
        injector_bounds: tuple[float, float],
        producer_bounds: tuple[float, float],
    ) -> None:
        for w, role in enumerate(roles):
            lo, hi = injector_bounds if role == INJECTOR else producer_bounds
            if np.any(self.bhp[w] < lo) or np.any(self.bhp[w] > hi):
                raise ValueError(f"BHP for well {w} outside {role} bounds")


def schedule_from_years(interval_years: float, bhp: np.ndarray) -> ControlSchedule:
    return ControlSchedule(interval_years * DAYS_PER_YEAR, np.asarray(bhp, float))


@dataclass
class SimulationResult:
    times: np.ndarray  # report step end times, days
    step_days: np.ndarray  # report step durations, days
    q_o_prod: np.ndarray  # [n_prod, n_steps] m3/day, step averages
    q_w_prod: np.ndarray  # [n_prod, n_steps]
    q_w_inj: np.ndarray  # [n_inj, n_steps]
    producer_labels: list[str]
    injector_labels: list[str]
    converged: bool
    cum_balance_error: float
    s_w_final: np.ndarray
    p_final: np.ndarray
    snapshots: dict[float, np.ndarray] = field(default_factory=dict)

    @property
    def total_injected_m3(self) -> float:
        return float(np.sum(self.q_w_inj * self.step_days))

    @property
    def total_produced_oil_m3(self) -> float:
        return float(np.sum(self.q_o_prod * self.step_days))

    @property
    def total_produced_water_m3(self) -> float:
        return float(np.sum(self.q_w_prod * self.step_days))


@dataclass(frozen=True)
class SimOptions:
    report_step_days: float = 30.0
    cfl: float = 0.5
    cg_rtol: float = 1e-8
    cg_maxiter: int = 4000
    max_substeps_per_report: int = 20000
    max_well_switch_iters: int = 5
    balance_tol: float = 1e-3
    rock_compressibility: float = 0.0  # 1/bar


def fractional_flow_derivative(s_w, fluids: FluidModel):
    """d f_w / d s_w for the Corey fractional-flow curve (0 outside the
    mobile saturation window)."""
    span = 1.0 - fluids.swc - fluids.sor
    s_e = (np.asarray(s_w, dtype=float) - fluids.swc) / span
    inside = (s_e > 0.0) & (s_e < 1.0)
    s_c = np.clip(s_e, 1e-12, 1.0 - 1e-12)
    a = fluids.krw_end / fluids.mu_w
    b = fluids.kro_end / fluids.mu_o
    lam_w = a * s_c**fluids.corey_nw
    lam_o = b * (1.0 - s_c) ** fluids.corey_no
    dlam_w = a * fluids.corey_nw * s_c ** (fluids.corey_nw - 1.0)
    dlam_o = -b * fluids.corey_no * (1.0 - s_c) ** (fluids.corey_no - 1.0)
    lam_t = lam_w + lam_o
    deriv = (dlam_w * lam_o - lam_w * dlam_o) / lam_t**2 / span
    return np.where(inside, deriv, 0.0)


def _report_steps(schedule: ControlSchedule, report_days: float):
    """(t0, t1, interval) triples; steps never straddle control intervals."""
    steps = []
    t = 0.0
    for m in range(schedule.n_intervals):
        end = (m + 1) * schedule.interval_days
        while t < end - 1e-9:
            t1 = min(t + report_days, end)
            steps.append((t, t1, m))
            t = t1
    return steps


class _Faces:
    """Internal face connectivity with a fixed CSR fill pattern."""

    def __init__(self, model: ReservoirModel):
        from .units import FLOW_CONST

        grid, rock = model.grid, model.rock
        nx, ny, nz = grid.nx, grid.ny, grid.nz
        n = grid.ncells
        idx = np.arange(n).reshape(nz, ny, nx)

        lefts, rights, trans = [], [], []

        def add(a, b, k_arr, area, dist):
            a = a.ravel()
            b = b.ravel()
            ka, kb = k_arr[a], k_arr[b]
            t = FLOW_CONST * (area / dist) * (2.0 * ka * kb / (ka + kb))
            lefts.append(a)
            rights.append(b)
            trans.append(t)

        if nx > 1:
            add(idx[:, :, :-1], idx[:, :, 1:], rock.perm_x, grid.dy * grid.dz, grid.dx)
        if ny > 1:
            add(idx[:, :-1, :], idx[:, 1:, :], rock.perm_y, grid.dx * grid.dz, grid.dy)
        if nz > 1:
            add(idx[:-1, :, :], idx[1:, :, :], rock.perm_z, grid.dx * grid.dy, grid.dz)

        if lefts:
            self.left = np.concatenate(lefts)
            self.right = np.concatenate(rights)
            self.trans = np.concatenate(trans)
        else:
            self.left = np.zeros(0, dtype=int)
            self.right = np.zeros(0, dtype=int)
            self.trans = np.zeros(0)
        self.n = n

        # Fixed sparsity: diagonal first, then (left,right) and (right,left).
        rows = np.concatenate([np.arange(n), self.left, self.right])
        cols = np.concatenate([np.arange(n), self.right, self.left])
        order_probe = coo_matrix(
            (np.arange(1, rows.size + 1, dtype=np.int64), (rows, cols)), shape=(n, n)
        ).tocsr()
        self.csr = order_probe.copy().astype(float)
        self.fill_order = order_probe.data - 1
        self.indptr64 = self.csr.indptr.astype(np.int64)
        self.indices64 = self.csr.indices.astype(np.int64)
        self.left64 = self.left.astype(np.int64)
        self.right64 = self.right.astype(np.int64)

    def assemble(self, diag: np.ndarray, g_face: np.ndarray):
        values = np.concatenate([diag, -g_face, -g_face])
        self.csr.data = values[self.fill_order]
        return self.csr


def assemble_pressure_system(
    model: ReservoirModel,
    wells: list[CompletedWell],
    p: np.ndarray,
    s_w: np.ndarray,
    bhp_now: np.ndarray,
    dt_days: float,
    options: SimOptions = SimOptions(),
):
    """One IMPES pressure system (A, b) at the given state; exposed for
    verification. A is SPD: M-matrix off-diagonals plus positive
    accumulation and well terms on the diagonal."""
    faces = _Faces(model)
    fluids = model.fluids
    krw, kro = relperm(s_w, fluids)
    lam_t = krw / fluids.mu_w + kro / fluids.mu_o
    up = p[faces.left] >= p[faces.right]
    lam_face = np.where(up, lam_t[faces.left], lam_t[faces.right])
    g_face = faces.trans * lam_face

    pv = model.grid.cell_volume * model.rock.porosity
    c_t = s_w * fluids.c_w + (1.0 - s_w) * fluids.c_o_compr + options.rock_compressibility
    acc = pv * c_t / dt_days

    diag = acc.copy()
    np.add.at(diag, faces.left, g_face)
    np.add.at(diag, faces.right, g_face)
    b = acc * p

    lam_inj = relperm(1.0, fluids)[0] / fluids.mu_w
    for w, well in enumerate(wells):
        lam_well = lam_inj if well.spec.role == INJECTOR else None
        for perf in well.perforations:
            cell = model.grid.cell_index(*perf.cell)
            lam = lam_well if lam_well is not None else lam_t[cell]
            coef = perf.well_index * lam
            diag[cell] += coef
            b[cell] += coef * bhp_now[w]

    A = faces.assemble(diag, g_face)
    return A, b


def _solve_pressure(faces: _Faces, b: np.ndarray, x0: np.ndarray, options: SimOptions):
    if _kernels.HAVE_NUMBA:
        x, ok = _kernels.cg_jacobi(
            faces.indptr64,
            faces.indices64,
            faces.csr.data,
            b,
            x0,
            options.cg_rtol,
            options.cg_maxiter,
        )
        if not ok:
            raise SolverFailed("pressure solve did not converge")
        return x
    A = faces.csr
    diag = A.diagonal()
    M = LinearOperator(A.shape, matvec=lambda r: r / diag)
    x, info = cg(
        A, b, x0=x0, rtol=options.cg_rtol, atol=0.0, maxiter=options.cg_maxiter, M=M
    )
    if info != 0:
        raise SolverFailed(f"pressure solve did not converge (info={info})")
    return x


def _advance_saturations_numpy(
    s, water, pv, flux, faces, prod_cells, prod_q, prod_wid, inj_rate_cell,
    out_total, n_wells, dt_report, options, fluids,
):
    """Vectorized twin of the compiled kernel (numba-free fallback)."""
    n = s.shape[0]
    s_min, s_max = fluids.swc, 1.0 - fluids.sor
    span = s_max - s_min
    vol_w = np.zeros(n_wells)
    vol_o = np.zeros(n_wells)
    clip_volume = 0.0
    remaining = dt_report
    substeps = 0
    while remaining > 1e-12:
        substeps += 1
        if substeps > options.max_substeps_per_report:
            return s, water, vol_w, vol_o, clip_volume, substeps, False
        krw_s, kro_s = relperm(s, fluids)
        lam_w_s = krw_s / fluids.mu_w
        f_w = lam_w_s / (lam_w_s + kro_s / fluids.mu_o)

        f_up = np.where(flux >= 0.0, f_w[faces.left], f_w[faces.right])
        flux_w = f_up * flux
        rate = np.bincount(faces.right, weights=flux_w, minlength=n)
        rate -= np.bincount(faces.left, weights=flux_w, minlength=n)
        fw_prod = f_w[prod_cells]
        rate += np.bincount(prod_cells, weights=fw_prod * prod_q, minlength=n)
        rate += inj_rate_cell

        dfds = fractional_flow_derivative(s, fluids)
        stab = out_total * np.maximum(dfds, 1e-3)
        dt = options.cfl * float(np.min(pv / np.maximum(stab, 1e-30)))
        max_change = float(np.max(np.abs(rate) / pv))
        if max_change > 0.0:
            dt = min(dt, 0.2 * span / max_change)
        dt = min(dt, remaining)

        water = water + dt * rate
        s_raw = water / pv
        s = np.clip(s_raw, s_min, s_max)
        clip_volume += float(np.sum(np.abs(s - s_raw) * pv))
        water = s * pv

        vol_w += np.bincount(prod_wid, weights=-prod_q * fw_prod * dt, minlength=n_wells)
        vol_o += np.bincount(
            prod_wid, weights=-prod_q * (1.0 - fw_prod) * dt, minlength=n_wells
        )
        remaining -= dt
    return s, water, vol_w, vol_o, clip_volume, substeps, True


def simulate(
    model: ReservoirModel,
    wells: list[CompletedWell],
    schedule: ControlSchedule,
    T_years: float,
    options: SimOptions = SimOptions(),
    snapshot_days: tuple[float, ...] = (),
) -> SimulationResult:
    """Run the waterflood over [0, T] years and report per-well rate series.

    Raises SolverFailed on linear-solve non-convergence or CFL collapse.
    Deterministic: identical inputs give bit-identical results.
    """
    grid, rock, fluids = model.grid, model.rock, model.fluids
    if abs(schedule.total_days - T_years * DAYS_PER_YEAR) > 1e-6 * max(
        1.0, schedule.total_days
    ):
        raise ValueError("schedule does not cover the production period")
    if len(wells) != schedule.bhp.shape[0]:
        raise ValueError("schedule rows must match well count")

    faces = _Faces(model)
    pv = grid.cell_volume * rock.porosity
    n = grid.ncells

    # Flattened perforation tables.
    inj_ids = [w for w, well in enumerate(wells) if well.spec.role == INJECTOR]
    prod_ids = [w for w, well in enumerate(wells) if well.spec.role != INJECTOR]
    perf_well, perf_cell, perf_wi = [], [], []
    for w, well in enumerate(wells):
        for perf in well.perforations:
            perf_well.append(w)
            perf_cell.append(grid.cell_index(*perf.cell))
            perf_wi.append(perf.well_index)
    perf_well = np.array(perf_well, dtype=int)
    perf_cell = np.array(perf_cell, dtype=int)
    perf_wi = np.array(perf_wi)
    perf_is_inj = np.array(
        [wells[w].spec.role == INJECTOR for w in perf_well], dtype=bool
    )

    lam_inj = relperm(1.0, fluids)[0] / fluids.mu_w
    steps = _report_steps(schedule, options.report_step_days)
    n_steps = len(steps)
    q_o_prod = np.zeros((len(prod_ids), n_steps))
    q_w_prod = np.zeros((len(prod_ids), n_steps))
    q_w_inj = np.zeros((len(inj_ids), n_steps))
    prod_row = {w: r for r, w in enumerate(prod_ids)}
    inj_row = {w: r for r, w in enumerate(inj_ids)}

    p = model.init.p_init.copy()
    s = model.init.s_w_init.copy()
    water = pv * s
    water0 = water.sum()
    clip_volume = 0.0
    cum_inj = 0.0
    cum_prod_w = 0.0
    snapshots: dict[float, np.ndarray] = {}
    snap_left = sorted(snapshot_days)

    for step_idx, (t0, t1, interval) in enumerate(steps):
        dt_report = t1 - t0
        bhp_now = schedule.bhp[:, interval]

        krw, kro = relperm(s, fluids)
        lam_w = krw / fluids.mu_w
        lam_t = lam_w + kro / fluids.mu_o
        up_left = p[faces.left] >= p[faces.right]
        lam_face = np.where(up_left, lam_t[faces.left], lam_t[faces.right])
        g_face = faces.trans * lam_face

        c_t = s * fluids.c_w + (1.0 - s) * fluids.c_o_compr + options.rock_compressibility
        acc = pv * c_t / dt_report

        perf_lam = np.where(perf_is_inj, lam_inj, lam_t[perf_cell])
        perf_coef_full = perf_wi * perf_lam
        active = np.ones(perf_coef_full.size, dtype=bool)

        base_diag = acc + np.bincount(faces.left, weights=g_face, minlength=n)
        base_diag += np.bincount(faces.right, weights=g_face, minlength=n)

        # Deactivate wrong-sign perforations until rates are consistent with
        # the solved pressure field (producers never inject and vice versa).
        p_new = p
        for _ in range(options.max_well_switch_iters):
            coef = np.where(active, perf_coef_full, 0.0)
            diag = base_diag + np.bincount(perf_cell, weights=coef, minlength=n)
            b = acc * p + np.bincount(
                perf_cell, weights=coef * bhp_now[perf_well], minlength=n
            )
            faces.assemble(diag, g_face)
            p_new = _solve_pressure(faces, b, p_new, options)
            q_perf = coef * (bhp_now[perf_well] - p_new[perf_cell])
            wrong = active & (
                (perf_is_inj & (q_perf < 0.0)) | (~perf_is_inj & (q_perf > 0.0))
            )
            if not wrong.any():
                break
            active &= ~wrong
        else:
            coef = np.where(active, perf_coef_full, 0.0)
            q_perf = coef * (bhp_now[perf_well] - p_new[perf_cell])
            q_perf = np.where(
                perf_is_inj, np.maximum(q_perf, 0.0), np.minimum(q_perf, 0.0)
            )
        p = p_new

        # Total face flux (positive left -> right) and fixed well totals.
        flux = g_face * (p[faces.left] - p[faces.right])
        q_cell = np.bincount(perf_cell, weights=q_perf, minlength=n)
        inj_rate_cell = np.where(q_cell > 0.0, q_cell, 0.0)

        inj_totals = np.zeros(len(wells))
        np.add.at(inj_totals, perf_well, np.where(perf_is_inj, q_perf, 0.0))
        for w in inj_ids:
            q_w_inj[inj_row[w], step_idx] = inj_totals[w]
        cum_inj += inj_totals.sum() * dt_report

        prod_mask = ~perf_is_inj
        prod_cells = perf_cell[prod_mask]
        prod_q = q_perf[prod_mask]  # <= 0
        prod_wid = perf_well[prod_mask]

        out_total = np.bincount(
            faces.left, weights=np.maximum(flux, 0.0), minlength=n
        ) + np.bincount(faces.right, weights=np.maximum(-flux, 0.0), minlength=n)
        out_total += np.bincount(prod_cells, weights=-prod_q, minlength=n)

        if _kernels.HAVE_NUMBA:
            vol_w, vol_o, clip_step, _, ok = _kernels.saturation_substeps(
                s,
                water,
                pv,
                flux,
                faces.left64,
                faces.right64,
                prod_cells.astype(np.int64),
                prod_q,
                prod_wid.astype(np.int64),
                inj_rate_cell,
                out_total,
                len(wells),
                dt_report,
                options.cfl,
                options.max_substeps_per_report,
                fluids.swc,
                fluids.sor,
                fluids.krw_end,
                fluids.kro_end,
                fluids.mu_w,
                fluids.mu_o,
                fluids.corey_nw,
                fluids.corey_no,
            )
            clip_volume += clip_step
        else:
            s, water, vol_w, vol_o, clip_step, _, ok = _advance_saturations_numpy(
                s, water, pv, flux, faces, prod_cells, prod_q, prod_wid,
                inj_rate_cell, out_total, len(wells), dt_report, options, fluids,
            )
            clip_volume += clip_step
        if not ok:
            raise SolverFailed("CFL collapse: sub-step limit exceeded")

        for w in prod_ids:
            q_w_prod[prod_row[w], step_idx] = vol_w[w] / dt_report
            q_o_prod[prod_row[w], step_idx] = vol_o[w] / dt_report
        cum_prod_w += vol_w.sum()

        while snap_left and snap_left[0] <= t1 + 1e-9:
            snapshots[snap_left.pop(0)] = s.copy()

    net_in = cum_inj - cum_prod_w
    stored = water.sum() - water0
    scale = max(cum_inj, abs(stored), 1e-12)
    balance_error = abs(net_in - stored) / scale
    converged = balance_error <= options.balance_tol

    return SimulationResult(
        times=np.array([t1 for (_, t1, _) in steps]),
        step_days=np.array([t1 - t0 for (t0, t1, _) in steps]),
        q_o_prod=q_o_prod,
        q_w_prod=q_w_prod,
        q_w_inj=q_w_inj,
        producer_labels=[wells[w].spec.label for w in prod_ids],
        injector_labels=[wells[w].spec.label for w in inj_ids],
        converged=converged,
        cum_balance_error=balance_error,
        s_w_final=s,
        p_final=p,
        snapshots=snapshots,
    )
