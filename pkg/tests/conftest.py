import numpy as np
import pytest

from wellopt import _kernels
from wellopt.economics import EconomicParams
from wellopt.problem import ProblemSpec, WellTemplate
from wellopt.reservoir import (
    FluidModel,
    GridGeometry,
    ReservoirModel,
    generate_field,
    initial_state,
    uniform_rock,
)


@pytest.fixture(scope="session", autouse=True)
def compiled_kernels():
    _kernels.warmup()


@pytest.fixture(scope="session")
def fluids():
    return FluidModel()


@pytest.fixture(scope="session")
def small_model(fluids):
    """Heterogeneous 10x10 single-layer model used across tests."""
    grid = GridGeometry(10, 10, 1, 40.0, 40.0, 10.0, 2000.0)
    rock = generate_field(321, grid, np.log(100.0), 1.0, 120.0)
    init = initial_state(grid, fluids, owc_depth=2008.0)
    return ReservoirModel(grid, rock, fluids, init)


@pytest.fixture(scope="session")
def homogeneous_model(fluids):
    grid = GridGeometry(11, 5, 1, 40.0, 40.0, 10.0, 2000.0)
    rock = uniform_rock(grid, 100.0, 0.2)
    init = initial_state(grid, fluids, owc_depth=2008.0)
    return ReservoirModel(grid, rock, fluids, init)


@pytest.fixture(scope="session")
def tiny_problem(small_model):
    """Cheap placement-only problem: 1 injector + 1 producer, fixed controls."""
    return ProblemSpec(
        model=small_model,
        wells_template=(
            WellTemplate("injector", "vertical", "I0"),
            WellTemplate("producer", "vertical", "P0"),
        ),
        control_intervals=1,
        production_years=2.0,
        econ=EconomicParams(base_drill_cost=2e6, drill_cost_per_m=0.0),
        budget=500,
        fixed_controls={"injector": 400.0, "producer": 150.0},
    )
