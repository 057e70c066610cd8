"""Well parameterizations, well-path/grid intersection and well indices.

Three well shapes are supported: vertical wells addressed by grid indices,
horizontal wells given by heel position (m), length and azimuth, and
inclined wells that additionally carry a heel depth and a dip angle below
the horizontal (small dip = near-horizontal well with the toe deflected
downward). Depth coordinates are measured downward from the reservoir top.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Union

import numpy as np

from .reservoir import GridGeometry, RockModel
from .units import FLOW_CONST

INJECTOR = "injector"
PRODUCER = "producer"

# Intersections shorter than this are floating-point ties, not perforations.
GRAZING_TOL = 1e-9


class PathExitsGrid(Exception):
    """Some portion of the well bore lies outside the grid."""


class PathHitsInactiveCell(Exception):
    """Reserved for models with inactive cells."""


class DegenerateIndex(Exception):
    """Peaceman equivalent radius does not exceed the well radius."""


@dataclass(frozen=True)
class VerticalShape:
    x_idx: int
    y_idx: int


@dataclass(frozen=True)
class HorizontalShape:
    x: float
    y: float
    l: float
    theta: float  # degrees in the x-y plane, 0 = +x direction


@dataclass(frozen=True)
class InclinedShape:
    x: float
    y: float
    z: float  # heel depth below reservoir top, m
    l: float
    theta: float  # degrees in the x-y plane
    phi: float  # degrees of dip below horizontal, toward the toe


WellShape = Union[VerticalShape, HorizontalShape, InclinedShape]


@dataclass(frozen=True)
class WellSpec:
    role: str
    shape: WellShape
    label: str

    def __post_init__(self) -> None:
        if self.role not in (INJECTOR, PRODUCER):
            raise ValueError(f"unknown well role {self.role!r}")

    @property
    def drilled_length(self) -> float:
        """Bore length entering the per-metre drilling cost (0 for verticals)."""
        if isinstance(self.shape, VerticalShape):
            return 0.0
        return self.shape.l


@dataclass(frozen=True)
class Perforation:
    cell: tuple[int, int, int]
    segment_length: float
    well_index: float = 0.0  # m3/(day*bar) per unit mobility; 0 = unset


@dataclass(frozen=True)
class CompletedWell:
    """A well spec together with its perforations (well indices attached)."""

    spec: WellSpec
    perforations: tuple[Perforation, ...]


def direction_vector(shape: WellShape) -> np.ndarray:
    """Unit direction from heel to toe; z component points downward."""
    if isinstance(shape, VerticalShape):
        return np.array([0.0, 0.0, 1.0])
    theta = math.radians(shape.theta)
    if isinstance(shape, HorizontalShape):
        return np.array([math.cos(theta), math.sin(theta), 0.0])
    phi = math.radians(shape.phi)
    return np.array(
        [math.cos(phi) * math.cos(theta), math.cos(phi) * math.sin(theta), math.sin(phi)]
    )


def heel_point(well: WellSpec, grid: GridGeometry) -> np.ndarray:
    """Heel coordinates (m); horizontal wells sit at the grid mid-depth."""
    shape = well.shape
    if isinstance(shape, VerticalShape):
        return np.array(
            [(shape.x_idx + 0.5) * grid.dx, (shape.y_idx + 0.5) * grid.dy, 0.0]
        )
    if isinstance(shape, HorizontalShape):
        return np.array([shape.x, shape.y, 0.5 * grid.nz * grid.dz])
    return np.array([shape.x, shape.y, shape.z])


def trace_path(well: WellSpec, grid: GridGeometry) -> list[Perforation]:
    """Ordered heel-to-toe cell traversal with exact intersection lengths.

    Vertical wells perforate every layer of their column with length dz.
    Horizontal and inclined bores are traced through the grid; raises
    PathExitsGrid if any portion of the bore leaves the grid, so such
    candidates can be rejected without running a simulation.
    """
    shape = well.shape
    if isinstance(shape, VerticalShape):
        if not (0 <= shape.x_idx < grid.nx and 0 <= shape.y_idx < grid.ny):
            raise PathExitsGrid(f"vertical well {well.label} outside grid")
        return [
            Perforation((shape.x_idx, shape.y_idx, k), grid.dz)
            for k in range(grid.nz)
        ]

    origin = heel_point(well, grid)
    direction = direction_vector(shape)
    length = shape.l
    sizes = np.array([grid.dx, grid.dy, grid.dz])
    counts = np.array([grid.nx, grid.ny, grid.nz])
    extent = sizes * counts

    if np.any(origin < -GRAZING_TOL) or np.any(origin > extent + GRAZING_TOL):
        raise PathExitsGrid(f"heel of {well.label} outside grid")
    toe = origin + length * direction
    if np.any(toe < -GRAZING_TOL) or np.any(toe > extent + GRAZING_TOL):
        raise PathExitsGrid(f"toe of {well.label} outside grid")

    # Amanatides-Woo traversal, parameterized by distance along the bore.
    cell = np.clip(np.floor(origin / sizes).astype(int), 0, counts - 1)
    step = np.where(direction > 0, 1, -1)
    t_max = np.full(3, math.inf)
    t_delta = np.full(3, math.inf)
    for a in range(3):
        if direction[a] > 0:
            t_max[a] = ((cell[a] + 1) * sizes[a] - origin[a]) / direction[a]
            t_delta[a] = sizes[a] / direction[a]
        elif direction[a] < 0:
            t_max[a] = (cell[a] * sizes[a] - origin[a]) / direction[a]
            t_delta[a] = -sizes[a] / direction[a]

    perfs: list[Perforation] = []
    t = 0.0
    while True:
        axis = int(np.argmin(t_max))
        t_next = min(t_max[axis], length)
        seg = t_next - t
        if seg > GRAZING_TOL:
            perfs.append(Perforation((int(cell[0]), int(cell[1]), int(cell[2])), seg))
        if length - t_max[axis] <= GRAZING_TOL:
            break
        cell[axis] += step[axis]
        if not (0 <= cell[axis] < counts[axis]):
            raise PathExitsGrid(f"bore of {well.label} leaves grid mid-path")
        t = t_max[axis]
        t_max[axis] += t_delta[axis]
    return perfs


def well_index(
    perf: Perforation,
    rock: RockModel,
    grid: GridGeometry,
    direction: np.ndarray,
    r_well: float,
) -> float:
    """Peaceman-type well index for one bore segment, m3/(day*bar) per 1/cp.

    The effective transverse permeability and equivalent radius are blends
    of the three axis-aligned Peaceman values, weighted by the squared
    direction cosines of the bore, so axis-aligned segments recover the
    classic anisotropic formula exactly.
    """
    if perf.segment_length <= 0:
        raise ValueError("segment_length must be positive")
    if r_well <= 0:
        raise ValueError("r_well must be positive")

    i, j, k = perf.cell
    idx = grid.cell_index(i, j, k)
    perm = (rock.perm_x[idx], rock.perm_y[idx], rock.perm_z[idx])
    size = (grid.dx, grid.dy, grid.dz)

    weights = np.asarray(direction, dtype=float) ** 2
    weights = weights / weights.sum()

    k_eff = 0.0
    r_eq = 0.0
    for axis in range(3):
        a, b = [other for other in range(3) if other != axis]
        ka, kb = perm[a], perm[b]
        da, db = size[a], size[b]
        ratio = kb / ka
        r_axis = (
            0.28
            * math.sqrt(math.sqrt(ratio) * da**2 + math.sqrt(1.0 / ratio) * db**2)
            / (ratio**0.25 + (1.0 / ratio) ** 0.25)
        )
        k_eff += weights[axis] * math.sqrt(ka * kb)
        r_eq += weights[axis] * r_axis

    if r_eq <= r_well:
        raise DegenerateIndex(
            f"equivalent radius {r_eq:.4g} m <= well radius {r_well:.4g} m"
        )
    return FLOW_CONST * 2.0 * math.pi * k_eff * perf.segment_length / math.log(r_eq / r_well)


def complete_well(
    well: WellSpec, grid: GridGeometry, rock: RockModel, r_well: float = 0.1
) -> CompletedWell:
    """Trace the bore and attach a well index to every perforation."""
    direction = direction_vector(well.shape)
    perfs = [
        replace(p, well_index=well_index(p, rock, grid, direction, r_well))
        for p in trace_path(well, grid)
    ]
    return CompletedWell(spec=well, perforations=tuple(perfs))


def validate_configuration(
    wells: Iterable[WellSpec], grid: GridGeometry
) -> Optional[str]:
    """None if no grid cell is perforated by two wells, else a reason string.

    No minimum-distance constraint is enforced; wells in adjacent cells are
    valid. Invalid configurations are rejected before simulation rather than
    penalized.
    """
    seen: dict[tuple[int, int, int], str] = {}
    for well in wells:
        for perf in trace_path(well, grid):
            prior = seen.get(perf.cell)
            if prior is not None and prior != well.label:
                return (
                    f"wells {prior!r} and {well.label!r} both perforate cell "
                    f"{perf.cell}"
                )
            seen[perf.cell] = well.label
    return None


def perforation_rows(well: CompletedWell) -> list[dict]:
    """Flat dict rows for CSV export of a completed well's perforations."""
    return [
        {
            "well": well.spec.label,
            "i": p.cell[0],
            "j": p.cell[1],
            "k": p.cell[2],
            "segment_m": p.segment_length,
            "well_index": p.well_index,
        }
        for p in well.perforations
    ]
