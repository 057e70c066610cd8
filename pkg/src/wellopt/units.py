"""Unit conventions and conversion constants shared across the package.

Internal units: length m, permeability mD, viscosity cp, pressure bar,
rate m3/day, time days (365-day years for economics and schedules).
"""

DAYS_PER_YEAR = 365.0

# Barrels per cubic metre (oil-field barrel).
BBL_PER_M3 = 6.2898

# mD * m * cp^-1 * bar -> m3/day:
#   9.869233e-16 m^2/mD * 1e5 Pa/bar / 1e-3 Pa.s/cp * 86400 s/day
FLOW_CONST = 8.52702e-3

GRAVITY = 9.80665  # m/s^2


def m3_to_bbl(volume_m3: float) -> float:
    return volume_m3 * BBL_PER_M3


def bbl_to_m3(volume_bbl: float) -> float:
    return volume_bbl / BBL_PER_M3
