import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from rkhs_tools.cdalgebra import (
    CDMatrix,
    HoloSpec,
    LocalizedKernel,
    cd_matrix,
    cd_product,
    epsilon_threshold,
    from_coords,
    holo_calculus_kernel,
    holo_calculus_matrix,
    identity_matrix,
    iterated_envelope_bounds,
    kernel_adjoint,
    kernel_compose,
    matrix_entry_bound_check,
    matrix_epsilon_threshold,
    oplp_bound,
    operator_identity_residual,
    product_norm_bound,
    reproducing_kernel,
)
from rkhs_tools.envelope import GridFunction
from rkhs_tools.errors import DomainError, GateFailure
from rkhs_tools.group import make_grid, real_line
from rkhs_tools.rkhs import KernelSpace
from rkhs_tools.scenarios import bandlimited_kernel, square_lattice


@pytest.fixture(scope="module")
def index_grid():
    return make_grid(real_line(), [(-8.0, 8.0)], 161)


@pytest.fixture(scope="module")
def lattice():
    return square_lattice(real_line(), 1.0, 3.0)


def decaying_entries(family, seed):
    rng = np.random.default_rng(seed)
    gaps = np.abs(family.points[:, 0][:, None] - family.points[:, 0][None, :])
    return rng.random((len(family), len(family))) * np.exp(-gaps)


def near_identity(family, grid, size=0.02):
    gaps = np.abs(family.points[:, 0][:, None] - family.points[:, 0][None, :])
    off = np.where(gaps > 0, np.exp(-gaps), 0.0)
    return cd_matrix(family, family, np.eye(len(family)) + size * off, grid, "M")


@pytest.fixture(scope="module")
def small_space():
    kernel = bandlimited_kernel(1.0, 0.1)
    grid = make_grid(real_line(), [(-10.0, 10.0)], 201)
    return KernelSpace(kernel, square_lattice(real_line(), 1.0, 4.0)), grid


def perturbation(rank, seed, size=0.05):
    rng = np.random.default_rng(seed)
    s = rng.standard_normal((rank, rank))
    s = (s + s.T) / 2
    return np.eye(rank) + size * s / np.linalg.norm(s, 2)


def test_schur_sums_hold_for_fitted_envelope(lattice, index_grid):
    m = cd_matrix(lattice, lattice, decaying_entries(lattice, 1), index_grid)
    report = matrix_entry_bound_check(m)
    assert report.passed
    assert report.column_sums <= report.column_bound
    assert report.row_sums <= report.row_bound


def test_corrupted_envelope_is_rejected(lattice, index_grid):
    m = cd_matrix(lattice, lattice, decaying_entries(lattice, 2), index_grid)
    halved = CDMatrix(m.rows, m.cols, m.entries, m.envelope.scaled(0.5), "halved")
    report = matrix_entry_bound_check(halved)
    assert not report.passed
    assert report.offending_entry is not None


@pytest.mark.parametrize("p", [1, 2, np.inf])
def test_operator_norm_bound(lattice, index_grid, p):
    m = cd_matrix(lattice, lattice, decaying_entries(lattice, 3), index_grid)
    report = oplp_bound(m, p)
    assert report.passed
    assert report.measured > 0


def test_operator_norm_rejects_other_exponents(lattice, index_grid):
    with pytest.raises(DomainError):
        oplp_bound(identity_matrix(lattice, index_grid), 3)


def test_product_keeps_entries_and_norm_bound(lattice, index_grid):
    m = cd_matrix(lattice, lattice, decaying_entries(lattice, 4), index_grid, "M")
    n = cd_matrix(lattice, lattice, decaying_entries(lattice, 5), index_grid, "N")
    product = cd_product(m, n)
    assert_allclose(product.entries, m.entries @ n.entries)
    assert np.linalg.norm(product.entries, 2) <= product_norm_bound(m, n)
    assert product.envelope_violations().max() <= 1e-12


@settings(max_examples=100)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.3, 3.0))
def test_random_cd_matrices_meet_their_bounds(lattice, index_grid, seed, rate):
    rng = np.random.default_rng(seed)
    gaps = np.abs(lattice.points[:, 0][:, None] - lattice.points[:, 0][None, :])

    def draw(label):
        return cd_matrix(lattice, lattice, rng.standard_normal(gaps.shape) * np.exp(-rate * gaps), index_grid, label)

    m, n = draw("M"), draw("N")
    assert matrix_entry_bound_check(m).passed
    assert all(oplp_bound(m, p).passed for p in (1, 2, np.inf))
    assert np.linalg.norm(m.entries @ n.entries, 2) <= product_norm_bound(m, n) * (1 + 1e-12)


def test_product_needs_matching_indices(lattice, index_grid):
    other = square_lattice(real_line(), 0.5, 1.0)
    m = cd_matrix(lattice, lattice, decaying_entries(lattice, 6), index_grid)
    n = cd_matrix(other, other, np.eye(len(other)), index_grid)
    with pytest.raises(DomainError):
        cd_product(m, n)


def test_series_inverse_matches_dense_solve(lattice, index_grid):
    m = near_identity(lattice, index_grid)
    inverse = holo_calculus_matrix(m, HoloSpec.inverse(), gate=0.2)
    assert_allclose(inverse.entries, np.linalg.inv(m.entries), atol=1e-8)
    assert inverse.calculus.gate_source == "explicit"
    assert inverse.calculus.residual < 1e-10
    assert matrix_entry_bound_check(inverse).envelope_residual <= 1e-12


def test_series_stops_on_the_a_priori_tail(lattice, index_grid):
    m = near_identity(lattice, index_grid)
    for spec in (HoloSpec.inverse(), HoloSpec.inverse_sqrt()):
        report = holo_calculus_matrix(m, spec, gate=0.2).calculus
        assert report.terms == 40
        assert report.tail_bound == pytest.approx(2.0 ** -report.terms)
        assert report.tail_bound <= 1e-12
    loose = holo_calculus_matrix(m, HoloSpec.custom("loose", [1.0, -1.0, 1.0], c_phi=4.0), gate=0.2, tol=1e-3)
    assert loose.calculus.terms == 12
    assert loose.calculus.tail_bound <= 1e-3


def test_series_inverse_square_root(lattice, index_grid):
    m = near_identity(lattice, index_grid)
    root = holo_calculus_matrix(m, HoloSpec.inverse_sqrt(), gate=0.2)
    assert_allclose(root.entries @ root.entries @ m.entries, np.eye(len(lattice)), atol=1e-6)
    assert_allclose(root.entries, root.entries.T, atol=1e-12)


def test_gap_above_gate_fails(lattice, index_grid):
    m = near_identity(lattice, index_grid)
    with pytest.raises(GateFailure) as err:
        holo_calculus_matrix(m, HoloSpec.inverse(), gate=0.01)
    assert err.value.gate == "holo_calculus_matrix.gap"


def test_gap_outside_convergence_radius_fails(lattice, index_grid):
    m = cd_matrix(lattice, lattice, 1.5 * np.eye(len(lattice)), index_grid)
    with pytest.raises(GateFailure) as err:
        holo_calculus_matrix(m, HoloSpec.inverse(), gate=2.0)
    assert err.value.gate == "holo_calculus_matrix.radius"


def test_inverse_sqrt_coefficients():
    assert_allclose(HoloSpec.inverse_sqrt().coefficients(4), [1.0, -0.5, 0.375, -0.3125])


def test_coefficient_growth_is_checked():
    with pytest.raises(DomainError):
        HoloSpec.custom("steep", [1.0, 10.0]).coefficients(2)
    with pytest.raises(DomainError):
        HoloSpec.inverse(delta=3.0)


def test_kernel_inverse_in_exact_coordinates(small_space):
    space, grid = small_space
    k = reproducing_kernel(space, grid)
    target = perturbation(space.rank, 7)
    h = from_coords(space, target, grid, "H")
    inverse = holo_calculus_kernel(h, k, HoloSpec.inverse(), gate=0.2)
    assert inverse.exact
    assert_allclose(inverse.coords, np.linalg.inv(target), atol=1e-8)
    assert inverse.calculus.residual < 1e-10


def test_kernel_inverse_sqrt_in_exact_coordinates(small_space):
    space, grid = small_space
    k = reproducing_kernel(space, grid)
    target = perturbation(space.rank, 8)
    h = from_coords(space, target, grid, "H")
    root = holo_calculus_kernel(h, k, HoloSpec.inverse_sqrt(), gate=0.2)
    assert_allclose(root.coords @ root.coords @ target, np.eye(space.rank), atol=1e-6)


def test_exact_composition_matches_coordinates(small_space):
    space, grid = small_space
    h = from_coords(space, perturbation(space.rank, 9), grid, "H")
    composed = kernel_compose(h, kernel_adjoint(h))
    assert composed.exact
    assert_allclose(composed.coords, h.coords @ h.coords.conj().T, atol=1e-12)
    assert composed.envelope_residual() <= 1e-12


def test_grid_composition_matches_operator_product(small_space):
    space, grid = small_space
    k = reproducing_kernel(space, grid)
    plain_k = LocalizedKernel(k.grid, k.values, k.envelope, "K")
    composed = kernel_compose(plain_k, plain_k)
    assert not composed.exact
    assert operator_identity_residual(plain_k, plain_k, composed) < 1e-10


def gaussian(grid):
    return GridFunction(grid, np.exp(-grid.nodes[:, 0] ** 2), "gauss")


def test_iterated_convolutions_respect_the_product_bound(index_grid):
    table = iterated_envelope_bounds(gaussian(index_grid), n_max=4)
    assert list(table["n"]) == [1, 2, 3, 4]
    assert (table["measured"] <= table["bound"] * (1 + 1e-9)).all()


def test_kernel_epsilon_threshold_meets_its_target(index_grid):
    theta = gaussian(index_grid)
    none = GridFunction(index_grid, np.zeros(index_grid.size))
    eps = epsilon_threshold(theta, none, 0.9)
    assert 0 < eps <= 0.45
    assert epsilon_threshold(theta, none, 0.3) <= eps
    with pytest.raises(DomainError):
        epsilon_threshold(theta, none, 0.0)


def test_matrix_epsilon_threshold_is_a_reciprocal_integer(index_grid):
    phi = gaussian(index_grid)
    eps = matrix_epsilon_threshold(phi, 2, 0.9)
    k = 1 / eps
    assert k == pytest.approx(round(k))
    assert eps <= 0.45
    assert matrix_epsilon_threshold(phi, 8, 0.9) <= eps
