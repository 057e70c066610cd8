"""Joint well placement and control optimization over an embedded two-phase
waterflood simulator, with MADS, constrained PSO, a MADS-PSO hybrid and
two-stage sequential strategies."""

__version__ = "0.1.0"
