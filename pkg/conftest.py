import math

import pytest
from hypothesis import settings

from rkhs_tools.group import affine, make_grid, plane, real_line
from rkhs_tools.scenarios import AFFINE_WAVELET, BANDLIMITED, FOCK, Scenario, ScenarioSpec

settings.register_profile("desk", deadline=None, max_examples=60)
settings.load_profile("desk")


@pytest.fixture(scope="module")
def line_grid():
    return make_grid(real_line(), [(-5.0, 5.0)], 101)


@pytest.fixture(scope="module")
def plane_grid():
    return make_grid(plane(), [(-3.0, 3.0), (-3.0, 3.0)], 25)


@pytest.fixture(scope="module")
def affine_grid():
    return make_grid(affine(), [(-3.0, 3.0), (math.exp(-1.5), math.exp(1.5))], (20, 12), mirror=True)


@pytest.fixture(scope="module")
def fock():
    """Desk Fock instance: window [-6, 6]^2 at resolution 41, probes on the 0.3 lattice in [-2.5, 2.5]^2."""
    return Scenario(ScenarioSpec(id=FOCK, window=6.0, resolution=(41,), probe_radius=2.5, probe_spacing=0.3))


@pytest.fixture(scope="module")
def bandlimited():
    return Scenario(ScenarioSpec(id=BANDLIMITED, window=20.0, resolution=(801,), probe_radius=8.0,
                                 probe_spacing=0.5, band=1.0, reg=0.1))


@pytest.fixture(scope="module")
def wavelet():
    return Scenario(ScenarioSpec(id=AFFINE_WAVELET, window=6.0, resolution=(30, 16), probe_radius=2.0,
                                 probe_spacing=0.5, log_window=2.0, probe_log_radius=1.0, mirror=True))
