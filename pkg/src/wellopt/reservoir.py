"""Static reservoir description: grid, rock, fluids and initial state.

Heterogeneous rock fields are generated as seeded Gaussian log-permeability
fields smoothed to a correlation length, so every experiment is fully
reproducible from its seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .units import GRAVITY


@dataclass(frozen=True)
class GridGeometry:
    """Regular hexahedral grid. Cell (i, j, k) has flat index i + nx*(j + ny*k);
    k increases downward from the reservoir top."""

    nx: int
    ny: int
    nz: int
    dx: float
    dy: float
    dz: float
    depth_top: float = 2000.0

    def __post_init__(self) -> None:
        if min(self.nx, self.ny, self.nz) < 1:
            raise ValueError("cell counts must be >= 1")
        if min(self.dx, self.dy, self.dz) <= 0:
            raise ValueError("cell sizes must be > 0")

    @property
    def ncells(self) -> int:
        return self.nx * self.ny * self.nz

    @property
    def extent(self) -> tuple[float, float, float]:
        return (self.nx * self.dx, self.ny * self.dy, self.nz * self.dz)

    @property
    def cell_volume(self) -> float:
        return self.dx * self.dy * self.dz

    def cell_index(self, i: int, j: int, k: int) -> int:
        return i + self.nx * (j + self.ny * k)

    def layer_center_depth(self, k: int) -> float:
        """Absolute depth (m) of the center of layer k."""
        return self.depth_top + (k + 0.5) * self.dz

    def cell_center_depths(self) -> np.ndarray:
        """Absolute depth of every cell center, in flat-index order."""
        k = np.arange(self.ncells) // (self.nx * self.ny)
        return self.depth_top + (k + 0.5) * self.dz


@dataclass(frozen=True)
class RockModel:
    """Per-cell permeability (mD) and porosity, flat-index order."""

    perm_x: np.ndarray
    perm_y: np.ndarray
    perm_z: np.ndarray
    porosity: np.ndarray

    def validate(self, grid: GridGeometry) -> None:
        n = grid.ncells
        for name in ("perm_x", "perm_y", "perm_z", "porosity"):
            arr = getattr(self, name)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have length {n}")
        if (
            np.any(self.perm_x <= 0)
            or np.any(self.perm_y <= 0)
            or np.any(self.perm_z <= 0)
        ):
            raise ValueError("permeabilities must be positive")
        if np.any(self.porosity <= 0) or np.any(self.porosity > 1):
            raise ValueError("porosity must lie in (0, 1]")


@dataclass(frozen=True)
class FluidModel:
    """Two-phase water/oil properties with Corey relative permeabilities.

    Densities kg/m3, viscosities cp, compressibilities 1/bar. Corey
    exponents and endpoints are configurable; the defaults are conventional
    waterflood values.
    """

    rho_w: float = 1000.0
    rho_o: float = 860.0
    mu_w: float = 0.32
    mu_o: float = 0.53
    c_w: float = 5.0e-5
    c_o_compr: float = 4.35e-5
    corey_nw: float = 2.0
    corey_no: float = 2.0
    swc: float = 0.2
    sor: float = 0.2
    krw_end: float = 0.6
    kro_end: float = 0.9

    def __post_init__(self) -> None:
        for name in (
            "rho_w", "rho_o", "mu_w", "mu_o", "c_w", "c_o_compr",
            "corey_nw", "corey_no", "krw_end", "kro_end",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not (0 <= self.swc < 1 and 0 <= self.sor < 1):
            raise ValueError("saturation endpoints must lie in [0, 1)")
        if self.swc + self.sor >= 1:
            raise ValueError("swc + sor must be < 1")
        if self.krw_end > 1 or self.kro_end > 1:
            raise ValueError("endpoint relative permeabilities must be <= 1")


@dataclass(frozen=True)
class InitialState:
    p_init: np.ndarray  # bar, per cell
    s_w_init: np.ndarray  # fraction, per cell
    owc_depth: float  # m, absolute depth of the oil-water contact


@dataclass(frozen=True)
class ReservoirModel:
    grid: GridGeometry
    rock: RockModel
    fluids: FluidModel
    init: InitialState

    def __post_init__(self) -> None:
        self.rock.validate(self.grid)
        n = self.grid.ncells
        if self.init.p_init.shape != (n,) or self.init.s_w_init.shape != (n,):
            raise ValueError("initial state arrays must match cell count")


def relperm(s_w, fluids: FluidModel):
    """Corey relative permeabilities (krw, kro) at water saturation s_w.

    Effective saturation is clamped to [0, 1], so the function is defined on
    all of [0, 1] and monotone: krw nondecreasing, kro nonincreasing.
    Accepts scalars or arrays.
    """
    span = 1.0 - fluids.swc - fluids.sor
    s_e = np.clip((np.asarray(s_w, dtype=float) - fluids.swc) / span, 0.0, 1.0)
    krw = fluids.krw_end * s_e**fluids.corey_nw
    kro = fluids.kro_end * (1.0 - s_e) ** fluids.corey_no
    return krw, kro


def water_fractional_flow(s_w, fluids: FluidModel):
    """Water fraction of total mobility, f_w = lam_w / (lam_w + lam_o)."""
    krw, kro = relperm(s_w, fluids)
    lam_w = krw / fluids.mu_w
    lam_o = kro / fluids.mu_o
    return lam_w / (lam_w + lam_o)


def generate_field(
    seed: int,
    grid: GridGeometry,
    log_mean: float,
    log_stddev: float,
    correlation_length: float,
    anisotropy_z: float = 0.1,
    porosity_mean: float = 0.2,
    porosity_stddev: float = 0.05,
) -> RockModel:
    """Generate a seeded heterogeneous rock model.

    Log-permeability is white Gaussian noise smoothed by a Gaussian moving
    average with kernel width set by ``correlation_length``, then rescaled so
    the sample mean and standard deviation of ln(perm) are exactly
    ``log_mean`` and ``log_stddev``. Horizontal permeability is isotropic
    (perm_x == perm_y); perm_z is scaled down by ``anisotropy_z``. Porosity
    is linearly correlated with log-permeability and clipped to [0.02, 0.40].

    The same seed always produces the same field.
    """
    if log_stddev < 0:
        raise ValueError("log_stddev must be >= 0")
    if correlation_length <= 0:
        raise ValueError("correlation_length must be > 0")
    if not (0 < anisotropy_z <= 1):
        raise ValueError("anisotropy_z must lie in (0, 1]")

    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((grid.nz, grid.ny, grid.nx))
    sigma = (
        correlation_length / grid.dz,
        correlation_length / grid.dy,
        correlation_length / grid.dx,
    )
    smooth = gaussian_filter(noise, sigma=sigma, mode="reflect")
    flat = smooth.ravel()  # i fastest, matching flat cell index
    std = flat.std()
    if grid.ncells == 1 or std == 0.0:
        z = np.zeros(grid.ncells)
    else:
        z = (flat - flat.mean()) / std

    log_k = log_mean + log_stddev * z
    perm_h = np.exp(log_k)
    porosity = np.clip(porosity_mean + porosity_stddev * z, 0.02, 0.40)
    return RockModel(
        perm_x=perm_h,
        perm_y=perm_h.copy(),
        perm_z=anisotropy_z * perm_h,
        porosity=porosity,
    )


def uniform_rock(
    grid: GridGeometry,
    perm_md: float,
    porosity: float,
    anisotropy_z: float = 0.1,
) -> RockModel:
    """Homogeneous rock model, handy for verification cases."""
    n = grid.ncells
    k = np.full(n, float(perm_md))
    return RockModel(k, k.copy(), anisotropy_z * k, np.full(n, float(porosity)))


def initial_state(
    grid: GridGeometry,
    fluids: FluidModel,
    owc_depth: float,
    datum_pressure: float = 280.0,
    initial_water_saturation: float = 0.2,
) -> InitialState:
    """Hydrostatic pressure from a datum at the reservoir top; water below
    the oil-water contact (s_w = 1 - sor), the stated water fraction above."""
    depths = grid.cell_center_depths()
    below = depths > owc_depth
    s_w = np.where(below, 1.0 - fluids.sor, initial_water_saturation)

    # Hydrostatic column: oil density above the contact, water below.
    oil_col = np.minimum(depths, max(owc_depth, grid.depth_top)) - grid.depth_top
    oil_col = np.clip(oil_col, 0.0, None)
    water_col = np.clip(depths - max(owc_depth, grid.depth_top), 0.0, None)
    p = datum_pressure + GRAVITY * (fluids.rho_o * oil_col + fluids.rho_w * water_col) / 1e5
    return InitialState(p_init=p, s_w_init=s_w, owc_depth=owc_depth)


# ---------------------------------------------------------------------------
# Serialization: JSON description plus optional flat little-endian binary.

_FIELD_ARRAYS = ("perm_x", "perm_y", "perm_z", "porosity")


def save_rock_binary(rock: RockModel, path_prefix: str) -> None:
    """Write rock arrays as flat little-endian float64 with a JSON header.

    Produces ``<prefix>.bin`` (arrays concatenated in header order) and
    ``<prefix>.json``.
    """
    data = np.concatenate([getattr(rock, name) for name in _FIELD_ARRAYS])
    data.astype("<f8").tofile(path_prefix + ".bin")
    header = {
        "dtype": "<f8",
        "arrays": list(_FIELD_ARRAYS),
        "length": int(getattr(rock, _FIELD_ARRAYS[0]).shape[0]),
    }
    with open(path_prefix + ".json", "w") as fh:
        json.dump(header, fh, indent=2)


def load_rock_binary(path_prefix: str) -> RockModel:
    with open(path_prefix + ".json") as fh:
        header = json.load(fh)
    n = int(header["length"])
    raw = np.fromfile(path_prefix + ".bin", dtype=header["dtype"]).astype(float)
    if raw.shape[0] != n * len(header["arrays"]):
        raise ValueError("binary field file does not match its header")
    parts = {
        name: raw[i * n : (i + 1) * n] for i, name in enumerate(header["arrays"])
    }
    return RockModel(**{name: parts[name] for name in _FIELD_ARRAYS})
