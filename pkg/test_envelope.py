import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose

from rkhs_tools.envelope import (
    GridFunction,
    amalgam_norms,
    convolve,
    discrete_sum_bound,
    from_callable,
    linf_embedding,
    maximal_left,
    maximal_right,
    reflect,
    symmetrize_min,
    synthesis_norm_bound,
    wnorm,
    zeros,
)
from rkhs_tools.errors import DomainError
from rkhs_tools.pointset import PointFamily


def gaussian(grid, width=1.0):
    return from_callable(grid, lambda x: np.exp(-np.sum(x ** 2, axis=1) / width), "gauss")


def unit_lattice(group):
    axis = np.arange(-2.0, 3.0)
    return PointFamily(group, np.stack(np.meshgrid(axis, axis, indexing="ij"), -1).reshape(-1, 2))


def test_grid_function_rejects_wrong_shape(plane_grid):
    with pytest.raises(DomainError):
        GridFunction(plane_grid, np.ones(3))


def test_grid_function_rejects_non_finite(plane_grid):
    values = np.ones(plane_grid.size)
    values[0] = np.nan
    with pytest.raises(DomainError):
        GridFunction(plane_grid, values)


def test_maximal_functions_dominate(plane_grid, affine_grid):
    for grid in (plane_grid, affine_grid):
        f = from_callable(grid, lambda x: np.cos(x[:, 0]) * np.exp(-x[:, 0] ** 2), "f")
        assert np.all(maximal_left(f).values >= np.abs(f.values))
        assert np.all(maximal_right(f).values >= np.abs(f.values))


def test_left_and_right_maximal_agree_on_abelian_group(plane_grid):
    f = gaussian(plane_grid)
    assert_allclose(maximal_left(f).values, maximal_right(f).values)


def test_amalgam_norms_are_ordered(plane_grid, affine_grid):
    for grid in (plane_grid, affine_grid):
        report = amalgam_norms(gaussian(grid))
        assert report.ordered, report.to_dict()
        assert report.norm_two_sided == pytest.approx(wnorm(gaussian(grid)))


def test_linf_embedding(plane_grid):
    spike = zeros(plane_grid).values.copy()
    spike[plane_grid.size // 2] = 1.0
    sup, constant, left = linf_embedding(GridFunction(plane_grid, spike))
    assert sup <= constant * left


def test_convolution_with_delta_is_identity(plane_grid):
    identity = plane_grid.locate(np.zeros((1, 2)))[0]
    delta = np.zeros(plane_grid.size)
    delta[identity] = 1.0 / plane_grid.weights[identity]
    g = gaussian(plane_grid)
    assert_allclose(convolve(GridFunction(plane_grid, delta), g).values, g.values, rtol=1e-12)


@given(st.integers(0, 2 ** 32 - 1))
def test_convolution_l1_young(plane_grid, seed):
    rng = np.random.default_rng(seed)
    f = GridFunction(plane_grid, rng.random(plane_grid.size))
    g = GridFunction(plane_grid, rng.random(plane_grid.size))
    assert convolve(f, g).norm_l1() <= f.norm_l1() * g.norm_l1() * (1 + 1e-12)


def test_convolve_rejects_other_grid(plane_grid, line_grid):
    with pytest.raises(DomainError):
        convolve(gaussian(plane_grid), from_callable(line_grid, lambda x: x[:, 0]))


def test_reflect_is_involution_on_symmetric_grid(plane_grid):
    f = from_callable(plane_grid, lambda x: x[:, 0] + 2 * x[:, 1])
    assert_allclose(reflect(reflect(f)).values, f.values)
    assert_allclose(reflect(f).values, -f.values, atol=1e-12)


def test_symmetrize_min_is_below(affine_grid):
    f = gaussian(affine_grid)
    assert np.all(symmetrize_min(f).values <= f.values)


def test_synthesis_bound_holds_for_gaussian(plane_grid):
    theta = gaussian(plane_grid, width=0.5)
    result = synthesis_norm_bound(theta, unit_lattice(plane_grid.group))
    assert result.rel >= 1
    assert result.passed, result.to_dict()


def test_synthesis_bound_needs_nonnegative_profile(plane_grid):
    theta = from_callable(plane_grid, lambda x: x[:, 0])
    with pytest.raises(DomainError):
        synthesis_norm_bound(theta, unit_lattice(plane_grid.group))


def test_discrete_sum_bound(plane_grid):
    phi = gaussian(plane_grid, width=0.5)
    family = unit_lattice(plane_grid.group)
    rng = np.random.default_rng(1)
    x = rng.uniform(-1.0, 1.0, (12, 2))
    y = rng.uniform(-1.0, 1.0, (12, 2))
    check = discrete_sum_bound(phi, phi, family, x, y)
    assert check.max_excess <= 0.0
