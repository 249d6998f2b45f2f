import numpy as np
import pytest
from numpy.testing import assert_allclose

from rkhs_tools.envelope import GridFunction
from rkhs_tools.errors import DomainError, KernelError
from rkhs_tools.group import real_line
from rkhs_tools.rkhs import (
    Kernel,
    KernelSpace,
    certify_kernel,
    check_bd,
    check_loc,
    check_wuc,
    check_wuc_ratio,
    fit_envelope,
    orthogonal_to_slices,
    project,
)
from rkhs_tools.scenarios import BANDLIMITED, Scenario, ScenarioSpec, bandlimited_kernel, square_lattice


@pytest.fixture(scope="module")
def fock_certificate(fock):
    return certify_kernel(fock.kernel, fock.grid)


def test_fock_certificate_passes(fock_certificate):
    assert fock_certificate.passed
    assert fock_certificate.bd.alpha == pytest.approx(1.0)
    assert fock_certificate.bd.beta == pytest.approx(1.0)
    assert fock_certificate.loc.amalgam.ordered
    assert fock_certificate.to_dict()["passed"] is True


def test_fock_envelope_is_gaussian(fock, fock_certificate):
    theta = fock_certificate.theta
    nodes = theta.grid.nodes
    inner = np.linalg.norm(nodes, axis=1) < 3
    assert_allclose(theta.values[inner], np.exp(-np.sum(nodes[inner] ** 2, axis=1) / 2), atol=1e-10)


def test_fock_continuity_needs_the_phase(fock, fock_certificate):
    phased = fock_certificate.wuc
    plain = check_wuc(fock.kernel.without_phase(), fock.grid)
    assert phased.monotone
    assert phased.relative[-1] < 0.03
    assert not plain.passed
    assert plain.relative[-1] > 2 * phased.relative[-1]


def test_sinc_kernel_fails_localization():
    sinc = Scenario(ScenarioSpec(id=BANDLIMITED, window=20.0, resolution=(801,), probe_radius=8.0,
                                 probe_spacing=0.5, band=1.0, reg=0.0))
    report = check_loc(sinc.kernel, sinc.grid)
    assert not report.passed
    assert report.growth_ratio > 0.5


def test_smoothed_band_is_localized(bandlimited):
    report = check_loc(bandlimited.kernel, bandlimited.grid)
    assert report.passed
    assert list(report.growth_frame().columns) == ["window_fraction", "windowed_norm"]


def test_bd_rejects_negative_and_complex_diagonals(line_grid):
    negative = Kernel(real_line(), lambda x, y: -np.ones(len(x)), label="negative")
    with pytest.raises(KernelError):
        check_bd(negative, line_grid)
    rotated = Kernel(real_line(), lambda x, y: np.full(len(x), 1j), label="rotated")
    with pytest.raises(KernelError):
        check_bd(rotated, line_grid)


def test_bd_floor(line_grid):
    tiny = Kernel(real_line(), lambda x, y: np.full(len(x), 1e-12), label="tiny")
    assert not check_bd(tiny, line_grid).passed


def test_space_basis_is_orthonormal(fock):
    probes = square_lattice(fock.group, 2.0, 2.0)
    space = KernelSpace(fock.kernel, probes)
    gram = fock.kernel.matrix(probes.points, probes.points)
    assert space.rank == len(probes)
    assert_allclose(space.basis.conj().T @ gram @ space.basis, np.eye(space.rank), atol=1e-8)


def test_space_reproduces_probe_slices(fock):
    probes = square_lattice(fock.group, 2.0, 2.0)
    space = KernelSpace(fock.kernel, probes)
    targets = fock.grid.nodes[::97]
    coords = space.kernel_coords(probes.points[:3])
    assert_allclose(space.evaluate(coords, targets), fock.kernel.matrix(targets, probes.points[:3]), atol=1e-8)


def test_space_needs_probes(fock):
    with pytest.raises(DomainError):
        KernelSpace(fock.kernel, np.zeros((0, 2)))


def test_random_coords_are_unit_vectors(fock):
    coords = fock.space.random_coords(5, seed=2)
    assert coords.shape == (fock.space.rank, 5)
    assert np.iscomplexobj(coords)
    assert_allclose(np.linalg.norm(coords, axis=0), 1.0)


def test_quadrature_projection_reproduces_slices(fock):
    grid = fock.grid
    center = grid.nodes[[grid.size // 2]]
    slice_values = fock.kernel.matrix(grid.nodes, center)[:, 0]
    image = project(fock.kernel, GridFunction(grid, slice_values))
    inner = np.linalg.norm(grid.nodes, axis=1) < 2
    assert_allclose(image.values[inner], slice_values[inner], atol=1e-8)


def test_orthogonal_function_vanishes_under_projection(fock):
    grid = fock.grid
    picks = [grid.size // 2, grid.size // 3]
    g = orthogonal_to_slices(fock.kernel, grid, grid.nodes[picks], seed=4)
    image = project(fock.kernel, g)
    assert_allclose(image.values[picks], 0.0, atol=1e-8 * np.max(np.abs(g.values)))


def test_gram_of_fock_kernel_is_positive(fock):
    points = square_lattice(fock.group, 0.5, 1.0).points
    gap, ratio = fock.kernel.check_gram(points)
    assert gap < 1e-12
    assert ratio > -1e-12


def test_continuity_ratio_shrinks_with_the_offset(fock, fock_certificate):
    ratios = check_wuc_ratio(fock.kernel, fock.grid, fock_certificate.theta)
    assert list(ratios["offset"]) == sorted(ratios["offset"], reverse=True)
    assert ratios["ratio"].iloc[-1] < ratios["ratio"].iloc[0]
    assert ratios["ratio"].iloc[-1] < 0.05


def test_binned_envelope_peaks_at_the_diagonal(line_grid):
    kernel = bandlimited_kernel(1.0, 0.1)
    theta, empty = fit_envelope(kernel, line_grid, bins=51)
    assert empty == 0
    assert theta.grid.size == 51
    assert theta.max_abs() == pytest.approx(2.0)
