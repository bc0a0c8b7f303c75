import numpy as np
import pytest

import driftmc_grid
from driftmc_grid import StateRoles
from driftmc_util import DriftConfigError, OUT_OF_DOMAIN


def test_states_are_row_major_south_first(square_grid):
    assert square_grid.n_states == 16
    assert square_grid.point_to_state(0.3, 0.1) == 1
    assert square_grid.point_to_state(0.25, 0.5) == 9
    assert square_grid.state_to_box(9) == (1, 2)
    assert square_grid.box_to_state(1, 2) == 9

def test_outside_points(square_grid):
    assert square_grid.point_to_state(1.0, 0.5) == OUT_OF_DOMAIN
    assert square_grid.point_to_state(-0.1, 0.5) == OUT_OF_DOMAIN
    assert square_grid.point_to_state(np.nan, 0.5) == OUT_OF_DOMAIN
    assert square_grid.box_to_state(4, 0) == OUT_OF_DOMAIN

def test_vectorized_lookup(square_grid):
    states = square_grid.point_to_state([0.1, 0.9, 2.0], [0.1, 0.9, 0.1])
    assert list(states) == [0, 15, OUT_OF_DOMAIN]

def test_edges_are_half_open():
    g = driftmc_grid.build_grid((0, 1, 0, 1), 0.1)
    # 0.3 / 0.1 is 2.9999999999999996 in floating point
    assert g.state_to_box(g.point_to_state(0.3, 0.05)) == (3, 0)

def test_points_just_inside_the_far_edges(square_grid):
    assert square_grid.point_to_state(1 - 1e-10, 0.5) != OUT_OF_DOMAIN
    assert square_grid.state_to_box(
            square_grid.point_to_state(1 - 1e-10, 0.5)) == (3, 2)
    assert square_grid.state_to_box(
            square_grid.point_to_state(0.1, 1 - 1e-10)) == (0, 3)
    assert square_grid.state_to_box(
            square_grid.point_to_state(np.nextafter(1.0, 0), 0.1)) == (3, 0)
    assert square_grid.point_to_state(0.5, 1.0) == OUT_OF_DOMAIN

def test_points_just_below_an_interior_edge(square_grid):
    assert square_grid.state_to_box(
            square_grid.point_to_state(0.25 - 1e-10, 0.1)) == (0, 0)
    assert square_grid.state_to_box(
            square_grid.point_to_state(0.1, 0.5 - 1e-10)) == (0, 1)
    assert square_grid.state_to_box(
            square_grid.point_to_state(0.25, 0.1)) == (1, 0)

def test_every_position_maps_to_one_box(rng):
    g = driftmc_grid.build_grid((0, 1, 0, 1), 0.1)
    lons = rng.uniform(0, 1, 2000)
    lats = rng.uniform(0, 1, 2000)
    states = g.point_to_state(lons, lats)
    assert (states != OUT_OF_DOMAIN).all()
    west, south = np.array([g.box_bounds(s)[:2] for s in states]).T
    assert (lons >= west - 1e-12).all() and (lons < west + 0.1 + 1e-12).all()
    assert (lats >= south - 1e-12).all() and (lats < south + 0.1 + 1e-12).all()

def test_cell_size_must_divide():
    with pytest.raises(DriftConfigError):
        driftmc_grid.build_grid((0, 1, 0, 1), 0.3)
    with pytest.raises(DriftConfigError):
        driftmc_grid.build_grid((0, 1, 1, 1), 0.25)

def test_dry_box():
    wet = np.ones((4, 4), dtype=bool)
    wet[1, 0] = False
    g = driftmc_grid.build_grid((0, 1, 0, 1), 0.25, wet)
    assert g.n_states == 15
    assert g.point_to_state(0.3, 0.1) == OUT_OF_DOMAIN
    assert g.point_to_state(0.6, 0.1) == 1

def test_wet_mask_file(write_file):
    path = write_file('mask.csv', "# i,j,wet\n0,0,1\n1,0,0\n1,1,1\n")
    g = driftmc_grid.build_grid((0, 2, 0, 2), 1.0, path)
    assert g.n_states == 2
    assert g.active_boxes == [(0, 0), (1, 1)]

def test_wet_mask_out_of_range(write_file):
    path = write_file('mask.csv', "5,0,1\n")
    with pytest.raises(DriftConfigError):
        driftmc_grid.build_grid((0, 2, 0, 2), 1.0, path)

def test_centers_and_bounds(square_grid):
    lons, lats = square_grid.centers([0, 5])
    assert list(lons) == [0.125, 0.375]
    assert list(lats) == [0.125, 0.375]
    assert square_grid.box_bounds(5) == (0.25, 0.25, 0.5, 0.5)

def test_box_area_at_equator():
    g = driftmc_grid.build_grid((0, 1, 0, 1), 1.0)
    assert g.box_area_km2()[0] == pytest.approx(12363.6, rel=1e-4)

def test_quarter_degree_box_areas_south_indian_ocean():
    g = driftmc_grid.build_grid((70, 110, -45, -15), 0.25)
    areas = g.box_area_km2()
    assert areas.min() > 400 and areas.max() < 750
    # boxes shrink poleward
    lats = g.centers()[1]
    assert areas[np.argmin(lats)] < areas[np.argmax(lats)]

def test_normalize_lon():
    g = driftmc_grid.build_grid((0, 360, -1, 1), 1.0)
    assert g.normalize_lon(-10.0) == 350.0
    g = driftmc_grid.build_grid((-180, 180, -1, 1), 1.0)
    assert g.normalize_lon(350.0) == -10.0

def test_roles_validation():
    with pytest.raises(DriftConfigError):
        StateRoles(4, sticky={0: 1.0})
    with pytest.raises(DriftConfigError):
        StateRoles(4, sticky={0: 0.5}, debris=[(1, 1)])
    with pytest.raises(DriftConfigError):
        StateRoles(4, sticky={0: 0.5, 1: 0.5}, debris=[(0, 1), (1, 3)])
    with pytest.raises(DriftConfigError):
        StateRoles(4, candidates=[2, 2])
    with pytest.raises(DriftConfigError):
        StateRoles(4, leaky=[4])

def test_colocated_targets():
    roles = StateRoles(4, sticky={2: 0.5}, debris=[(2, 2), (2, 1)])
    assert roles.n_targets == 2
    assert roles.targets_of(2) == [1, 2]
    assert roles.target_state(2) == 2
    assert roles.debris_states() == frozenset([2])

def test_load_roles(line_grid, write_file):
    path = write_file('roles.txt', """
# comment
leaky: 4,0
sticky: 0,0,0.25   # coast
debris: 0,0,1
source: 3,0
source: 2,0
""")
    roles = driftmc_grid.load_roles(line_grid, path)
    assert roles.leaky == frozenset([4])
    assert roles.sticky == {0: 0.25}
    assert roles.debris == ((0, 1),)
    assert roles.candidates == (3, 2)

@pytest.mark.parametrize('text', ['beach: 0,0', 'leaky: 7,0',
    'sticky: 0,0', 'debris: 0,0,x', 'leaky 0,0'])
def test_bad_roles(line_grid, write_file, text):
    path = write_file('roles.txt', text + "\n")
    with pytest.raises(DriftConfigError):
        driftmc_grid.load_roles(line_grid, path)
