import math

import numpy as np
import pytest

from wellopt.reservoir import (
    FluidModel,
    GridGeometry,
    generate_field,
    initial_state,
    load_rock_binary,
    relperm,
    save_rock_binary,
)


def test_grid_validation():
    with pytest.raises(ValueError):
        GridGeometry(0, 10, 1, 40.0, 40.0, 10.0)
    with pytest.raises(ValueError):
        GridGeometry(10, 10, 1, -1.0, 40.0, 10.0)
    grid = GridGeometry(60, 80, 1, 40.0, 40.0, 10.0)
    assert grid.ncells == 4800
    assert grid.cell_index(5, 7, 0) == 5 + 60 * 7


def test_fluid_validation():
    with pytest.raises(ValueError):
        FluidModel(swc=0.6, sor=0.5)
    with pytest.raises(ValueError):
        FluidModel(mu_w=0.0)


def test_relperm_endpoints(fluids):
    krw, kro = relperm(fluids.swc, fluids)
    assert krw == 0.0
    assert kro == pytest.approx(fluids.kro_end)
    krw, kro = relperm(1.0 - fluids.sor, fluids)
    assert krw == pytest.approx(fluids.krw_end)
    assert kro == 0.0


def test_relperm_midpoint_analytic():
    # S_e = 0.5 with quadratic exponents and unit endpoints
    f = FluidModel(corey_nw=2.0, corey_no=2.0, krw_end=1.0, kro_end=1.0)
    s_mid = f.swc + 0.5 * (1.0 - f.swc - f.sor)
    krw, kro = relperm(s_mid, f)
    assert krw == pytest.approx(0.25)
    assert kro == pytest.approx(0.25)


def test_relperm_monotone_sweep(fluids):
    s = np.linspace(0.0, 1.0, 1000)
    krw, kro = relperm(s, fluids)
    assert np.all(np.diff(krw) >= 0)
    assert np.all(np.diff(kro) <= 0)


def test_field_zero_variance():
    grid = GridGeometry(8, 8, 1, 40.0, 40.0, 10.0)
    rock = generate_field(1, grid, math.log(150.0), 0.0, 100.0)
    assert np.allclose(rock.perm_x, 150.0)
    assert np.allclose(rock.perm_y, 150.0)


def test_field_deterministic_and_shapes():
    grid = GridGeometry(12, 9, 2, 40.0, 40.0, 10.0)
    a = generate_field(42, grid, math.log(100.0), 1.0, 120.0)
    b = generate_field(42, grid, math.log(100.0), 1.0, 120.0)
    assert np.array_equal(a.perm_x, b.perm_x)
    assert np.array_equal(a.porosity, b.porosity)
    for arr in (a.perm_x, a.perm_y, a.perm_z, a.porosity):
        assert arr.shape == (grid.ncells,)
    c = generate_field(43, grid, math.log(100.0), 1.0, 120.0)
    assert not np.array_equal(a.perm_x, c.perm_x)


def test_field_moments():
    # sample mean of ln(perm) within 3 standard errors over >= 4800 cells
    grid = GridGeometry(60, 80, 1, 40.0, 40.0, 10.0)
    log_mean, log_std = math.log(100.0), 1.5
    rock = generate_field(42, grid, log_mean, log_std, 120.0)
    log_k = np.log(rock.perm_x)
    se = log_std / math.sqrt(grid.ncells)
    assert abs(log_k.mean() - log_mean) <= 3 * se
    assert log_k.std() == pytest.approx(log_std, rel=1e-6)


def test_field_anisotropy_and_porosity_bounds():
    grid = GridGeometry(10, 10, 3, 40.0, 40.0, 25.0)
    rock = generate_field(7, grid, math.log(100.0), 1.2, 120.0, anisotropy_z=0.1)
    assert np.allclose(rock.perm_z, 0.1 * rock.perm_x)
    assert np.all(rock.porosity > 0) and np.all(rock.porosity <= 1)


def test_initial_state_owc(fluids):
    # 3 layers spanning 2000-2075 m with the contact at 2060 m: the bottom
    # layer (center 2062.5) starts water-filled
    grid = GridGeometry(4, 3, 3, 40.0, 40.0, 25.0, depth_top=2000.0)
    init = initial_state(grid, fluids, owc_depth=2060.0)
    depths = grid.cell_center_depths()
    below = depths > 2060.0
    assert np.all(init.s_w_init[below] == 1.0 - fluids.sor)
    assert np.all(init.s_w_init[~below] == 0.2)


def test_initial_state_hydrostatic(fluids):
    grid = GridGeometry(2, 2, 3, 40.0, 40.0, 25.0, depth_top=2000.0)
    init = initial_state(grid, fluids, owc_depth=2060.0, datum_pressure=280.0)
    p_by_layer = init.p_init.reshape(3, -1)
    assert np.all(np.diff(p_by_layer[:, 0]) > 0)  # pressure grows with depth
    # top layer center is 12.5 m below datum, oil column
    expected = 280.0 + 860.0 * 9.80665 * 12.5 / 1e5
    assert p_by_layer[0, 0] == pytest.approx(expected)


def test_rock_binary_roundtrip(tmp_path):
    grid = GridGeometry(6, 5, 2, 40.0, 40.0, 10.0)
    rock = generate_field(3, grid, math.log(80.0), 0.8, 100.0)
    prefix = str(tmp_path / "field")
    save_rock_binary(rock, prefix)
    back = load_rock_binary(prefix)
    assert np.array_equal(back.perm_x, rock.perm_x)
    assert np.array_equal(back.perm_z, rock.perm_z)
    assert np.array_equal(back.porosity, rock.porosity)
