import math

import numpy as np
import pandas as pd
import pytest

from rkhs_tools.errors import CoverError, DomainError
from rkhs_tools.group import box, make_grid, plane, real_line
from rkhs_tools.pointset import (
    PointFamily,
    disjoint_cover,
    is_dense,
    is_separated,
    near_uniform_set,
    rel_forms,
    relative_separation,
    separated_dense_set,
    uniformity,
)
from rkhs_tools.scenarios import lattice_cell, square_lattice


@pytest.fixture(scope="module")
def aligned_grid():
    # step 0.1; the unit lattice cells [k - 1/2, k + 1/2) hold ten nodes each
    return make_grid(real_line(), [(-4.5, 4.5)], 90)


@pytest.fixture(scope="module")
def unit_lattice():
    return square_lattice(real_line(), 1.0, 4.0)


def test_lattice_cells_cover_the_window(aligned_grid, unit_lattice):
    u = lattice_cell(1.0, 1)
    assert is_dense(unit_lattice, u, aligned_grid)
    cover = disjoint_cover(unit_lattice, u, aligned_grid)
    assert cover.verify()
    assert cover.measures == pytest.approx(np.ones(9))


def test_disjoint_cells_give_uniformity_one(aligned_grid, unit_lattice):
    report = uniformity(unit_lattice, lattice_cell(1.0, 1), aligned_grid)
    assert report.method == "exhaustive"
    assert report.bound == pytest.approx(1.0)


def test_rebalanced_cover_beats_greedy(aligned_grid, unit_lattice):
    u = box(1.0)
    greedy = disjoint_cover(unit_lattice, u, aligned_grid)
    report = uniformity(unit_lattice, u, aligned_grid, seed=3)
    assert report.method == "greedy+rebalance"
    assert 1.0 <= report.bound <= greedy.ratio + 1e-12
    assert report.cover.verify()


def test_repeated_point_has_infinite_uniformity(aligned_grid, unit_lattice):
    doubled = unit_lattice.extended(unit_lattice.points[:1])
    assert doubled.has_duplicates()
    report = uniformity(doubled, lattice_cell(1.0, 1), aligned_grid)
    assert math.isinf(report.bound)
    assert not is_separated(doubled, box(0.1))


def test_sparse_family_is_not_dense(aligned_grid):
    sparse = square_lattice(real_line(), 2.0, 4.0)
    report = is_dense(sparse, lattice_cell(1.0, 1), aligned_grid)
    assert not report
    assert len(report.uncovered) > 0
    with pytest.raises(CoverError) as err:
        disjoint_cover(sparse, lattice_cell(1.0, 1), aligned_grid)
    assert len(err.value.uncovered) == len(report.uncovered)


def test_separation_depends_on_the_box(aligned_grid, unit_lattice):
    assert is_separated(unit_lattice, box(0.4), aligned_grid)
    assert not is_separated(unit_lattice, box(0.6), aligned_grid)


def test_relative_separation_of_unit_lattice(aligned_grid, unit_lattice):
    assert relative_separation(unit_lattice, box(1.0), aligned_grid) == 2
    assert relative_separation(PointFamily(real_line(), []), box(1.0)) == 0


def test_relative_separation_is_translation_invariant():
    family = square_lattice(plane(), 1.0, 3.0)
    q = box(1.0, dim=2)
    moved = family.translate([[0.5, 0.25]])
    assert relative_separation(family, q) == 4
    assert relative_separation(moved, q) == relative_separation(family, q)


def test_rel_counting_forms_agree(plane_grid):
    family = square_lattice(plane(), 0.75, 2.5)
    assert rel_forms(family, box(1.0, dim=2), plane_grid).agree


def test_packing_is_separated_and_dense():
    grid = make_grid(real_line(), [(-5.0, 5.0)], 100)
    v, u = box(0.15, label="V"), box(0.4, label="U")
    family = separated_dense_set(v, u, grid)
    assert is_separated(family, v, grid)
    assert is_dense(family, u, grid)


def test_packing_rejects_small_target():
    grid = make_grid(real_line(), [(-2.0, 2.0)], 40)
    with pytest.raises(CoverError):
        separated_dense_set(box(0.5, label="V"), box(0.5, label="U"), grid)


def test_near_uniform_set_respects_quantized_bound():
    grid = make_grid(real_line(), [(-3.0, 3.0)], 1200)
    result = near_uniform_set(box(1.0, label="U"), 0.5, grid, seed=1)
    assert result.split_number == 10
    assert result.bound == pytest.approx(10 / 9)
    assert result.cover.verify()
    assert 0 <= result.slack < 1
    assert result.ratio <= result.bound * (1 + result.slack) / (1 - result.slack) + 1e-12


def test_near_uniform_set_rejects_bad_epsilon(line_grid):
    with pytest.raises(DomainError):
        near_uniform_set(box(1.0), 0.0, line_grid)


def test_point_frame_round_trip_and_missing_columns():
    family = square_lattice(plane(), 1.0, 1.0)
    again = PointFamily.from_frame(plane(), family.to_frame())
    assert again.digest() == family.digest()
    with pytest.raises(DomainError):
        PointFamily.from_frame(plane(), pd.DataFrame({"x": [0.0]}))
