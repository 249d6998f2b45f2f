import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose

from rkhs_tools.errors import DomainError
from rkhs_tools.group import (
    Weight,
    affine,
    affine_box,
    box,
    check_weight,
    inv,
    make_grid,
    mul,
    neighborhood_measure,
    plane,
    polynomial_weight,
)

scales = st.floats(0.2, 5.0).flatmap(lambda a: st.sampled_from([a, -a]))
shifts = st.floats(-5.0, 5.0)
affine_points = st.tuples(shifts, scales).map(np.array)


@given(affine_points, affine_points, affine_points)
def test_affine_law_is_associative(x, y, z):
    g = affine()
    assert_allclose(mul(g, mul(g, x, y), z), mul(g, x, mul(g, y, z)), rtol=1e-12, atol=1e-10)


@given(affine_points)
def test_affine_inverse(x):
    g = affine()
    assert_allclose(mul(g, x, inv(g, x)), g.identity, atol=1e-12)
    assert_allclose(mul(g, inv(g, x), x), g.identity, atol=1e-12)


@given(affine_points)
def test_symmetrised_box_is_inversion_symmetric(x):
    g = affine()
    q = affine_box(1.0, math.log(2.0), mirror=True)
    assert g.contains(q, x)[0] == g.contains(q, inv(g, x))[0]


@given(affine_points, affine_points)
def test_affine_distance_is_subadditive(x, y):
    g = affine()
    assert g.dist(mul(g, x, y))[0] <= g.dist(x)[0] + g.dist(y)[0] + 1e-9


def test_affine_distance_is_hyperbolic():
    g = affine()
    assert_allclose(g.dist([[0.0, 1.0], [0.0, math.e], [0.0, -1.0 / math.e]]), [0.0, 1.0, 1.0], atol=1e-12)
    assert g.dist([[2.0, 1.0]])[0] == pytest.approx(math.acosh(3.0))
    x = np.array([[1.5, 0.4]])
    assert_allclose(g.dist(x), g.dist(g.inv(x)))


def test_affine_rejects_zero_scale():
    with pytest.raises(DomainError):
        affine().mul([[0.0, 1.0]], [[1.0, 0.0]])


def test_affine_haar_density_and_modular():
    g = affine()
    pts = np.array([[0.3, 2.0], [-1.0, -0.5]])
    assert_allclose(g.haar_density(pts), [0.25, 4.0])
    assert_allclose(g.modular(pts), [0.5, 2.0])


def test_affine_grid_measure_matches_closed_form():
    g = affine()
    grid = make_grid(g, [(-1.0, 1.0), (1.0, math.e)], (4, 200))
    # ∫_{-1}^{1} ∫_1^e a^-2 da db
    assert_allclose(grid.total_measure, 2 * (1 - math.exp(-1)), rtol=1e-5)


def test_mirrored_affine_grid_has_both_components(affine_grid):
    assert affine_grid.signs == (1, -1)
    assert np.count_nonzero(affine_grid.nodes[:, 1] < 0) == affine_grid.size // 2


def test_fock_measure_scale():
    g = plane(haar_scale=1 / math.pi)
    grid = make_grid(g, [(-2.0, 2.0), (-2.0, 2.0)], 10)
    assert_allclose(grid.total_measure, 16 / math.pi)


def test_locate_nodes_round_trip(plane_grid, affine_grid):
    for grid in (plane_grid, affine_grid):
        np.testing.assert_array_equal(grid.locate(grid.nodes), np.arange(grid.size))


def test_locate_outside_window(plane_grid):
    assert plane_grid.locate([[10.0, 0.0]])[0] == -1


def test_displacement_table_diagonal_is_identity_node(plane_grid):
    identity = plane_grid.locate(np.zeros((1, 2)))[0]
    assert identity >= 0
    np.testing.assert_array_equal(np.diag(plane_grid.displacement_table), identity)


def test_inverse_index_on_symmetric_grid(plane_grid):
    assert_allclose(plane_grid.nodes[plane_grid.inverse_index], -plane_grid.nodes, atol=1e-12)


@pytest.mark.parametrize("window,resolution", [
    ([(-1.0, 1.0), (-1.0, 2.0)], 4),
    ([(1.0, -1.0), (1.0, 2.0)], 4),
    ([(-1.0, 1.0), (1.0, 2.0)], 0),
])
def test_make_grid_rejects_bad_windows(window, resolution):
    with pytest.raises(DomainError):
        make_grid(affine(), window, resolution)


def test_neighborhood_measure_of_plane_box():
    assert neighborhood_measure(plane(), box(1.0, 2)) == pytest.approx(4.0, rel=1e-9)


@pytest.mark.parametrize("group", [plane(), affine()])
def test_polynomial_weight_is_admissible(group, plane_grid, affine_grid):
    grid = affine_grid if group.id == "affine" else plane_grid
    report = check_weight(group, polynomial_weight(group, 1.5), grid)
    assert report.passed, report.to_dict()


def test_decaying_weight_is_rejected(plane_grid):
    w = Weight("1/(1+|x|)", lambda pts: 1.0 / (1.0 + np.linalg.norm(pts, axis=1)))
    report = check_weight(plane(), w, plane_grid)
    assert not report.passed
    assert report.below_one > 0.5
