"""Compiled inner kernels for the simulator: the Jacobi-preconditioned CG
solve and the CFL-sub-stepped saturation transport of one report step.

The simulator falls back to vectorized numpy/scipy implementations of the
same scheme when numba is unavailable (or WELLOPT_NO_NUMBA is set); each
path is individually deterministic.
"""

from __future__ import annotations

import os

import numpy as np

HAVE_NUMBA = not os.environ.get("WELLOPT_NO_NUMBA")
if HAVE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover
        HAVE_NUMBA = False

if not HAVE_NUMBA:  # keep the module importable; simulator won't call these

    def njit(*args, **kwargs):  # pragma: no cover
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


@njit(cache=True)
def cg_jacobi(indptr, indices, data, b, x0, rtol, maxiter):
    """Conjugate gradient with diagonal preconditioning on a CSR system.

    Returns (x, converged): terminates when ||b - A x|| <= rtol * ||b||.
    """
    n = b.shape[0]
    x = x0.copy()
    diag = np.ones(n)
    for i in range(n):
        for idx in range(indptr[i], indptr[i + 1]):
            if indices[idx] == i:
                diag[i] = data[idx]
                break

    # r = b - A x
    r = np.empty(n)
    for i in range(n):
        acc = 0.0
        for idx in range(indptr[i], indptr[i + 1]):
            acc += data[idx] * x[indices[idx]]
        r[i] = b[i] - acc

    b_norm = 0.0
    for i in range(n):
        b_norm += b[i] * b[i]
    b_norm = np.sqrt(b_norm)
    if b_norm == 0.0:
        return np.zeros(n), True
    tol = rtol * b_norm

    z = r / diag
    p = z.copy()
    rz = 0.0
    for i in range(n):
        rz += r[i] * z[i]

    r_norm = 0.0
    for i in range(n):
        r_norm += r[i] * r[i]
    if np.sqrt(r_norm) <= tol:
        return x, True

    Ap = np.empty(n)
    for _ in range(maxiter):
        for i in range(n):
            acc = 0.0
            for idx in range(indptr[i], indptr[i + 1]):
                acc += data[idx] * p[indices[idx]]
            Ap[i] = acc
        pAp = 0.0
        for i in range(n):
            pAp += p[i] * Ap[i]
        if pAp <= 0.0:
            return x, False
        alpha = rz / pAp
        r_norm = 0.0
        for i in range(n):
            x[i] += alpha * p[i]
            r[i] -= alpha * Ap[i]
            r_norm += r[i] * r[i]
        if np.sqrt(r_norm) <= tol:
            return x, True
        rz_new = 0.0
        for i in range(n):
            z[i] = r[i] / diag[i]
            rz_new += r[i] * z[i]
        beta = rz_new / rz
        rz = rz_new
        for i in range(n):
            p[i] = z[i] + beta * p[i]
    return x, False


@njit(cache=True)
def saturation_substeps(
    s,
    water,
    pv,
    flux,
    face_left,
    face_right,
    prod_cells,
    prod_q,
    prod_wid,
    inj_rate_cell,
    out_total,
    n_wells,
    dt_report,
    cfl,
    max_substeps,
    swc,
    sor,
    krw_end,
    kro_end,
    mu_w,
    mu_o,
    nw,
    no,
):
    """Advance saturations over one report step with donor-cell fractional
    flow and a per-cell CFL limit. Mutates s and water in place.

    Returns (vol_w_by_well, vol_o_by_well, clip_volume, substeps, ok).
    """
    n = s.shape[0]
    n_faces = face_left.shape[0]
    n_prod = prod_cells.shape[0]
    span = 1.0 - swc - sor
    s_min = swc
    s_max = 1.0 - sor
    nw_is_2 = nw == 2.0
    no_is_2 = no == 2.0

    f_w = np.empty(n)
    dfds = np.empty(n)
    rate = np.empty(n)
    vol_w = np.zeros(n_wells)
    vol_o = np.zeros(n_wells)
    clip_volume = 0.0

    remaining = dt_report
    substeps = 0
    while remaining > 1e-12:
        substeps += 1
        if substeps > max_substeps:
            return vol_w, vol_o, clip_volume, substeps, False

        for i in range(n):
            s_e = (s[i] - swc) / span
            if s_e < 0.0:
                s_e = 0.0
            elif s_e > 1.0:
                s_e = 1.0
            s_o = 1.0 - s_e
            # quadratic Corey exponents are the common case; avoid libm pow
            pw = s_e * s_e if nw_is_2 else s_e**nw
            po = s_o * s_o if no_is_2 else s_o**no
            lam_w = krw_end * pw / mu_w
            lam_o = kro_end * po / mu_o
            lam_t = lam_w + lam_o
            f_w[i] = lam_w / lam_t
            if 0.0 < s_e < 1.0:
                dpw = s_e if nw_is_2 else s_e ** (nw - 1.0)
                dpo = s_o if no_is_2 else s_o ** (no - 1.0)
                dlam_w = krw_end * nw * dpw / mu_w
                dlam_o = -kro_end * no * dpo / mu_o
                dfds[i] = (dlam_w * lam_o - lam_w * dlam_o) / (lam_t * lam_t) / span
            else:
                dfds[i] = 0.0
            rate[i] = inj_rate_cell[i]

        for f in range(n_faces):
            donor = face_left[f] if flux[f] >= 0.0 else face_right[f]
            w_flux = f_w[donor] * flux[f]
            rate[face_left[f]] -= w_flux
            rate[face_right[f]] += w_flux
        for pidx in range(n_prod):
            rate[prod_cells[pidx]] += f_w[prod_cells[pidx]] * prod_q[pidx]

        dt = remaining
        for i in range(n):
            d = dfds[i]
            if d < 1e-3:
                d = 1e-3
            denom = out_total[i] * d
            if denom > 0.0:
                limit = cfl * pv[i] / denom
                if limit < dt:
                    dt = limit
            r_abs = rate[i] if rate[i] >= 0.0 else -rate[i]
            if r_abs > 0.0:
                limit = 0.2 * span * pv[i] / r_abs
                if limit < dt:
                    dt = limit

        for i in range(n):
            water[i] += dt * rate[i]
            s_raw = water[i] / pv[i]
            s_new = s_raw
            if s_new < s_min:
                s_new = s_min
            elif s_new > s_max:
                s_new = s_max
            if s_new != s_raw:
                clip_volume += abs(s_new - s_raw) * pv[i]
                water[i] = s_new * pv[i]
            s[i] = s_new

        for pidx in range(n_prod):
            fw_c = f_w[prod_cells[pidx]]
            vol_w[prod_wid[pidx]] += -prod_q[pidx] * fw_c * dt
            vol_o[prod_wid[pidx]] += -prod_q[pidx] * (1.0 - fw_c) * dt
        remaining -= dt

    return vol_w, vol_o, clip_volume, substeps, True


def warmup() -> None:
    """Trigger JIT compilation on tiny inputs (no-op without numba)."""
    indptr = np.array([0, 1], dtype=np.int64)
    indices = np.array([0], dtype=np.int64)
    data = np.array([2.0])
    cg_jacobi(indptr, indices, data, np.array([1.0]), np.array([0.0]), 1e-12, 10)
    saturation_substeps(
        np.array([0.3]),
        np.array([0.3]),
        np.array([1.0]),
        np.zeros(0),
        np.zeros(0, dtype=np.int64),
        np.zeros(0, dtype=np.int64),
        np.zeros(0, dtype=np.int64),
        np.zeros(0),
        np.zeros(0, dtype=np.int64),
        np.zeros(1),
        np.zeros(1),
        1,
        1.0,
        0.5,
        100,
        0.2,
        0.2,
        0.6,
        0.9,
        0.32,
        0.53,
        2.0,
        2.0,
    )
