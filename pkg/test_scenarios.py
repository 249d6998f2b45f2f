import logging
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from rkhs_tools.errors import DomainError, KernelError
from rkhs_tools.group import affine, make_grid, plane, real_line
from rkhs_tools.pointset import is_dense
from rkhs_tools.scenarios import (
    AFFINE_WAVELET,
    BANDLIMITED,
    FOCK,
    Scenario,
    ScenarioSpec,
    WaveletSpec,
    affine_lattice,
    affine_lattice_cell,
    bandlimited_kernel,
    bandlimited_profile,
    bandlimited_quadrature,
    calderon_constant,
    edge_decay,
    fock_kernel,
    jittered_lattice,
    line_quadrature,
    mexican_hat,
    poisson,
    reproducing_residual,
    sampled_wavelet,
    square_lattice,
    wavelet_kernel,
    wavelet_spec,
    wavelet_system,
)

OFF_IDENTITY = np.array([[0.5, 1.3], [-1.0, 0.7], [2.0, 2.5], [0.3, -1.2], [0.0, 0.6]])


def test_admissibility_constants():
    assert mexican_hat().admissibility == pytest.approx(2 * math.pi, rel=1e-8)
    assert poisson().admissibility == pytest.approx(0.5, rel=1e-8)


def test_closed_forms_at_identity_are_squared_norms():
    hat = mexican_hat()
    assert hat.norm_sq == pytest.approx(3 * math.sqrt(math.pi) / 4, rel=1e-10)
    assert hat.v([[0.0, 1.0]])[0] == pytest.approx(hat.norm_sq, rel=1e-10)
    assert poisson().v([[0.0, 1.0]])[0] == pytest.approx(1 / (4 * math.pi), rel=1e-12)


@pytest.mark.parametrize("spec, atol", [(mexican_hat(), 1e-8), (poisson(), 1e-6)])
def test_closed_form_matches_line_quadrature(spec, atol):
    assert_allclose(spec.v(OFF_IDENTITY), line_quadrature(spec, OFF_IDENTITY), atol=atol)


def test_inversion_keeps_the_modulus():
    assert mexican_hat().inversion_gap(OFF_IDENTITY) < 1e-12
    assert poisson().inversion_gap(OFF_IDENTITY) < 1e-12


def test_unknown_mother_is_rejected():
    with pytest.raises(DomainError):
        wavelet_spec("haar")


def test_non_admissible_mother_is_rejected():
    gauss = WaveletSpec("gauss", lambda t: np.exp(-np.asarray(t) ** 2 / 2),
                        lambda xi: math.sqrt(2 * math.pi) * np.exp(-2 * math.pi ** 2 * np.asarray(xi) ** 2))
    with pytest.raises(KernelError):
        gauss.admissibility
    with pytest.raises(KernelError):
        WaveletSpec("bare", lambda t: np.zeros_like(t)).admissibility


def test_sampled_mother_follows_the_closed_form():
    t = np.linspace(-12.0, 12.0, 2401)
    sampled = sampled_wavelet("sampled_hat", t, (1 - t ** 2) * np.exp(-t ** 2 / 2))
    assert sampled.closed_form is None
    assert_allclose(sampled.v(OFF_IDENTITY), mexican_hat().v(OFF_IDENTITY), atol=1e-4)
    with pytest.raises(DomainError):
        wavelet_kernel(sampled)


def test_sampled_mother_needs_increasing_abscissae():
    with pytest.raises(DomainError):
        sampled_wavelet("bad", [0.0, 2.0, 1.0], [0.0, 1.0, 0.0])
    with pytest.raises(DomainError):
        sampled_wavelet("short", [0.0, 1.0], [0.0, 1.0])


def test_wavelet_kernel_diagonal_is_constant(wavelet):
    spec = wavelet.wavelet
    points = wavelet.probes.points[::7]
    assert_allclose(wavelet.kernel.diagonal(points), spec.norm_sq / spec.admissibility, rtol=1e-10)
    with pytest.raises(DomainError):
        wavelet_kernel(spec, plane())


def test_half_line_calderon_constant():
    hat = mexican_hat()
    assert calderon_constant(hat, affine()) == pytest.approx(2 * math.pi, rel=1e-8)
    assert calderon_constant(hat, affine(mirror=False)) == pytest.approx(math.pi, rel=1e-8)


@pytest.mark.parametrize("mirror", [True, False])
def test_wavelet_kernel_reproduces_on_either_group(mirror):
    group = affine(mirror=mirror)
    kernel = wavelet_kernel(mexican_hat(), group)
    grid = make_grid(group, [(-8.0, 8.0), (math.exp(-3.5), math.exp(3.5))], (121, 57), mirror=mirror)
    points = np.array([[0.0, 1.0], [0.3, 1.2], [-0.2, 0.8]])
    assert reproducing_residual(kernel, grid, points) < 0.02


def test_wavelet_system_rescales_kernel_samples(wavelet):
    spec = wavelet.wavelet
    family = affine_lattice(2.0, 1.0, range(-1, 2), window=(2.0, 1.0))
    system = wavelet_system(spec, wavelet.kernel, family)
    assert_allclose(system.expansion.diagonal(), math.sqrt(spec.admissibility))


def test_wavelet_table_decays_toward_the_window_edge(wavelet):
    assert edge_decay(wavelet.wavelet, wavelet.grid) < 0.1


def test_bandlimited_closed_form_matches_legendre_quadrature():
    t = np.linspace(-5.0, 5.0, 41)
    assert_allclose(bandlimited_profile(1.0, 0.1, t), bandlimited_quadrature(1.0, 0.1, t), atol=1e-9)


def test_bandlimited_profile_vanishes_on_the_integers():
    assert_allclose(bandlimited_profile(1.0, 0.1, np.arange(1, 6)), 0.0, atol=1e-15)
    assert bandlimited_profile(1.0, 0.1, 0.0) == pytest.approx(2.0)


def test_sinc_kernel_is_flagged(caplog):
    with caplog.at_level(logging.WARNING, logger="rkhs_tools.scenarios"):
        bandlimited_kernel(1.0, 0.0)
    assert "not W-localized" in caplog.text


@pytest.mark.parametrize("band, reg, group", [(0.0, 0.1, None), (1.0, -0.1, None), (1.0, 0.1, plane())])
def test_bandlimited_kernel_arguments(band, reg, group):
    with pytest.raises(DomainError):
        bandlimited_kernel(band, reg, group)


def test_fock_kernel_lives_on_the_plane():
    with pytest.raises(DomainError):
        fock_kernel(real_line())
    k = fock_kernel()
    z = np.array([[1.0, 0.5], [-0.3, 2.0]])
    assert_allclose(k.diagonal(z), 1.0)


def test_affine_lattice_respects_the_window():
    family = affine_lattice(2.0, 1.0, range(-3, 4), window=(2.0, 1.0))
    assert len(family) == 9 + 5 + 3
    scales = np.unique(family.points[:, 1])
    assert_allclose(scales, [0.5, 1.0, 2.0])


def test_affine_lattice_with_explicit_translations_and_signs():
    family = affine_lattice(2.0, 1.0, range(0, 2), k_range=range(-1, 2), signs=(1, -1))
    assert len(family) == 12
    assert any(np.allclose(p, [-2.0, -2.0]) for p in family.points)


@pytest.mark.parametrize("kwargs", [dict(a=1.0, b=1.0), dict(a=2.0, b=0.0), dict(a=2.0, b=1.0, window=None)])
def test_affine_lattice_arguments(kwargs):
    kwargs.setdefault("window", (1.0, 1.0))
    with pytest.raises(DomainError):
        affine_lattice(j_range=range(2), **kwargs)


def test_affine_lattice_cells_cover_the_half_plane():
    grid = make_grid(affine(), [(-1.0, 1.0), (2 ** -1.4, 2 ** 1.4)], (16, 13))
    u = affine_lattice_cell(2.0, 1.0)
    assert is_dense(affine_lattice(2.0, 1.0, range(-1, 2), window=(4.0, 1.0)), u, grid)
    assert not is_dense(affine_lattice(2.0, 1.0, range(-1, 2), window=(4.0, 0.5)), u, grid)


def test_square_lattice_arguments():
    assert len(square_lattice(plane(), 0.5, 1.0)) == 25
    with pytest.raises(DomainError):
        square_lattice(affine(), 1.0, 1.0)
    with pytest.raises(DomainError):
        square_lattice(real_line(), 0.0, 1.0)


def test_jittered_lattice_stays_within_the_jitter():
    base = square_lattice(plane(), 1.0, 3.0)
    moved = jittered_lattice(plane(), 1.0, 3.0, 0.2, seed=9)
    assert len(moved) == len(base)
    assert np.max(np.abs(moved.points - base.points)) <= 0.2
    assert moved.digest() == jittered_lattice(plane(), 1.0, 3.0, 0.2, seed=9).digest()


@pytest.mark.parametrize("overrides", [
    dict(id="torus"),
    dict(id=FOCK, window=0.0),
    dict(id=FOCK, probe_spacing=-1.0),
    dict(id=FOCK, window=2.0, probe_radius=3.0),
    dict(id=FOCK, resolution=(0,)),
    dict(id=AFFINE_WAVELET, mother="haar"),
    dict(id=AFFINE_WAVELET, log_window=1.0, probe_log_radius=2.0),
    dict(id=AFFINE_WAVELET, window=2.0, probe_radius=1.5, probe_log_radius=1.0),
    dict(id=BANDLIMITED, band=0.0),
    dict(id=BANDLIMITED, reg=-0.5),
])
def test_scenario_spec_validation(overrides):
    with pytest.raises(DomainError):
        ScenarioSpec(**overrides).validate()


def test_scenario_resolution_must_match_the_dimension():
    with pytest.raises(DomainError):
        Scenario(ScenarioSpec(id=BANDLIMITED, resolution=(10, 10)))


def test_fock_scenario_description(fock):
    described = fock.describe()
    assert described["probes"] == 17 * 17
    assert described["scenario"]["resolution"] == [41]
    assert fock.grid.size == 41 * 41


def test_wavelet_scenario_probes_both_signs(wavelet):
    signs = np.sign(wavelet.probes.points[:, 1])
    assert set(signs) == {-1.0, 1.0}
    assert np.count_nonzero(signs > 0) == np.count_nonzero(signs < 0)


def test_wavelet_probes_spread_with_the_scale(wavelet):
    points = wavelet.probes.points[wavelet.probes.points[:, 1] > 0]
    for scale in np.unique(points[:, 1]):
        row = np.sort(points[points[:, 1] == scale, 0])
        assert len(row) == 9
        assert_allclose(np.diff(row), 0.5 * scale)
