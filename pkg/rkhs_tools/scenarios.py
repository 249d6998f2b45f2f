"""Concrete kernels and point families.

* ``fock``: the Gaussian Fock space on the plane (measure ``dA/π``) with the
  twisting phase used for the continuity check.
* ``affine_wavelet``: the wavelet RKHS of the affine group (``mirror`` adds the
  ``a < 0`` component) for the Mexican hat or the Poisson wavelet, with
  closed-form ``V_ψψ`` and a line-quadrature evaluator for validation and
  user-supplied mothers.
* ``bandlimited``: band-limited functions on the line with a Gaussian-smoothed
  band edge; ``reg = 0`` is the plain sinc kernel, kept as the control that
  fails localization.
"""
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy import integrate, special
from scipy.interpolate import RegularGridInterpolator

from rkhs_tools.envelope import GridFunction
from rkhs_tools.errors import DomainError, KernelError
from rkhs_tools.frames import KERNEL_SAMPLES, VectorSystem, kernel_samples
from rkhs_tools.group import (
    AFFINE,
    PLANE,
    REAL_LINE,
    GroupSpec,
    NeighborhoodSpec,
    QuadratureGrid,
    affine,
    make_grid,
    plane,
    real_line,
)
from rkhs_tools.pointset import PointFamily
from rkhs_tools.rkhs import Kernel, KernelSpace

logger = logging.getLogger(__name__)

FOCK = "fock"
AFFINE_WAVELET = "affine_wavelet"
BANDLIMITED = "bandlimited"
SCENARIO_IDS = (FOCK, AFFINE_WAVELET, BANDLIMITED)

MEXICAN_HAT = "mexican_hat"
POISSON = "poisson"
MOTHERS = (MEXICAN_HAT, POISSON)

LEGENDRE_NODES = 512
ADMISSIBILITY_CEILING = 1e12


def fock_kernel(group: GroupSpec | None = None) -> Kernel:
    """``k(z, w) = exp(z·conj(w) − |z|²/2 − |w|²/2)`` with phase ``exp(i·Im(z·conj(w)))``."""
    group = group or plane(haar_scale=1 / math.pi)
    if group.id != PLANE:
        raise DomainError(f"the Fock kernel lives on the plane, got {group.id}")

    def evaluate(x, y):
        z = x[:, 0] + 1j * x[:, 1]
        w = y[:, 0] + 1j * y[:, 1]
        return np.exp(z * np.conj(w) - np.abs(z) ** 2 / 2 - np.abs(w) ** 2 / 2)

    def phase(x, y):
        z = x[:, 0] + 1j * x[:, 1]
        w = y[:, 0] + 1j * y[:, 1]
        return np.exp(1j * np.imag(z * np.conj(w)))

    return Kernel(group, evaluate, phase, label="fock")


def bandlimited_profile(band: float, reg: float, t) -> np.ndarray:
    """``κ(t) = 2B·sinc(2Bt)·exp(−2π²r²t²)``: the inverse transform of the smoothed band."""
    t = np.asarray(t, dtype=float)
    return 2 * band * np.sinc(2 * band * t) * np.exp(-2 * math.pi ** 2 * reg ** 2 * t ** 2)


def band_multiplier(band: float, reg: float, xi) -> np.ndarray:
    """Indicator of ``[−B, B]`` smoothed by a Gaussian of width ``reg``."""
    xi = np.asarray(xi, dtype=float)
    if reg == 0:
        return (np.abs(xi) <= band).astype(float)
    scale = math.sqrt(2) * reg
    return 0.5 * (special.erf((xi + band) / scale) - special.erf((xi - band) / scale))


def bandlimited_quadrature(band: float, reg: float, t, nodes: int = LEGENDRE_NODES) -> np.ndarray:
    """``∫ m(ξ) cos(2πξt) dξ`` by Gauss–Legendre over ``[−B−8r, B+8r]``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    edge = band + 8 * reg
    x, w = np.polynomial.legendre.leggauss(nodes)
    xi = edge * x
    weights = edge * w * band_multiplier(band, reg, xi)
    return np.cos(2 * math.pi * np.outer(t, xi)) @ weights


def bandlimited_kernel(band: float, reg: float, group: GroupSpec | None = None) -> Kernel:
    """Translation-invariant kernel ``κ(x − y)`` of the smoothed band ``[−band, band]``."""
    if band <= 0 or reg < 0:
        raise DomainError(f"bandlimited kernel needs band > 0 and reg >= 0, got {band}, {reg}")
    group = group or real_line()
    if group.id != REAL_LINE:
        raise DomainError(f"the bandlimited kernel lives on the real line, got {group.id}")
    if reg == 0:
        logger.warning("Bandlimited kernel with reg=0 is the sinc kernel; it is not W-localized")

    def evaluate(x, y):
        return bandlimited_profile(band, reg, x[:, 0] - y[:, 0])

    return Kernel(group, evaluate, None, label=f"bandlimited(B={band:g},r={reg:g})")


def _mexican_hat(t):
    t = np.asarray(t, dtype=float)
    return (1 - t ** 2) * np.exp(-t ** 2 / 2)


def _mexican_hat_spectrum(xi):
    xi = np.asarray(xi, dtype=float)
    return 4 * math.pi ** 2 * xi ** 2 * math.sqrt(2 * math.pi) * np.exp(-2 * math.pi ** 2 * xi ** 2)


def _mexican_hat_v(b, a):
    s = 1 + a ** 2
    r = b ** 2 / s
    return (np.abs(a) ** 0.5 * a ** 2 * np.sqrt(2 * math.pi / s) * np.exp(-r / 2)
            * (3 - 6 * r + r ** 2) / s ** 2)


def _poisson(t):
    t = np.asarray(t, dtype=float)
    return (1 - t ** 2) / (math.pi * (1 + t ** 2) ** 2)


def _poisson_spectrum(xi):
    xi = np.abs(np.asarray(xi, dtype=float))
    return 2 * math.pi * xi * np.exp(-2 * math.pi * xi)


def _poisson_v(b, a):
    c = 1 + np.abs(a) - 1j * b
    return np.abs(a) ** 1.5 / math.pi * np.real(2 / c ** 3)


@dataclass(frozen=True, eq=False)
class WaveletSpec:
    """Mother wavelet ``ψ`` with its spectrum and, when known, closed-form ``V_ψψ``.

    ``support`` bounds the line-quadrature range and ``nodes`` its resolution.
    """

    name: str
    mother: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    spectrum: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)
    closed_form: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = field(default=None, repr=False)
    support: float = 12.0
    nodes: int = 6001
    real: bool = True

    @cached_property
    def admissibility(self) -> float:
        """Calderón constant ``∫ |ψ̂(ξ)|²/|ξ| dξ``."""
        return admissibility_constant(self)

    @cached_property
    def norm_sq(self) -> float:
        t = np.linspace(-self.support, self.support, self.nodes)
        return float(integrate.trapezoid(np.abs(self.mother(t)) ** 2, t))

    def v(self, points) -> np.ndarray:
        """``V_ψψ(b, a) = ⟨ψ, π(b, a)ψ⟩``; closed form when available."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.closed_form is not None:
            return self.closed_form(pts[:, 0], pts[:, 1])
        return line_quadrature(self, pts)

    def inversion_gap(self, points) -> float:
        """``max ||V(inv x)| − |V(x)||``; zero up to rounding since ``V(inv x) = conj V(x)``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        inverse = np.column_stack([-pts[:, 0] / pts[:, 1], 1 / pts[:, 1]])
        return float(np.max(np.abs(np.abs(self.v(inverse)) - np.abs(self.v(pts)))))

    def table(self, grid: QuadratureGrid) -> GridFunction:
        return GridFunction(grid, self.v(grid.nodes), f"V[{self.name}]")


def mexican_hat() -> WaveletSpec:
    return WaveletSpec(MEXICAN_HAT, _mexican_hat, _mexican_hat_spectrum, _mexican_hat_v, support=12.0)


def poisson() -> WaveletSpec:
    return WaveletSpec(POISSON, _poisson, _poisson_spectrum, _poisson_v, support=400.0, nodes=80001)


def wavelet_spec(name: str) -> WaveletSpec:
    if name == MEXICAN_HAT:
        return mexican_hat()
    if name == POISSON:
        return poisson()
    raise DomainError(f"unknown mother wavelet {name!r}; expected one of {MOTHERS}")


def sampled_wavelet(name: str, t, values) -> WaveletSpec:
    """Mother wavelet given by samples (linear interpolation, zero outside)."""
    t = np.asarray(t, dtype=float)
    values = np.asarray(values)
    if t.ndim != 1 or t.shape != values.shape or len(t) < 3 or np.any(np.diff(t) <= 0):
        raise DomainError("wavelet samples need increasing abscissae and matching values")
    real = not np.iscomplexobj(values)

    def mother(x):
        x = np.asarray(x, dtype=float)
        if real:
            return np.interp(x, t, values, left=0.0, right=0.0)
        return (np.interp(x, t, values.real, left=0.0, right=0.0)
                + 1j * np.interp(x, t, values.imag, left=0.0, right=0.0))

    def spectrum(xi):
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        return integrate.trapezoid(values[None, :] * np.exp(-2j * math.pi * np.outer(xi, t)), t, axis=1)

    support = float(max(abs(t[0]), abs(t[-1])))
    return WaveletSpec(name, mother, spectrum, None, support=support, nodes=max(2001, 4 * len(t)), real=real)


def admissibility_constant(spec: WaveletSpec) -> float:
    """``∫_ℝ |ψ̂(ξ)|²/|ξ| dξ`` by adaptive quadrature; raises when it diverges."""
    if spec.spectrum is None:
        raise KernelError(f"wavelet {spec.name} has no spectrum; admissibility is unknown")

    def density(xi):
        return float(np.abs(np.squeeze(spec.spectrum(np.array([xi])))) ** 2) / xi

    peak = max(float(np.max(np.abs(spec.spectrum(np.linspace(1e-3, 5.0, 200))))), 1e-300)
    if float(np.abs(np.squeeze(spec.spectrum(np.array([1e-9]))))) > 1e-3 * peak:
        raise KernelError(f"wavelet {spec.name} is not admissible: its spectrum does not vanish at 0")
    total = 0.0
    for sign in ((1.0,) if spec.real else (1.0, -1.0)):
        value, _ = integrate.quad(lambda s: density(sign * s) * sign, 0, np.inf, limit=200)
        total += value
    if spec.real:
        total *= 2
    if not math.isfinite(total) or total <= 0 or total > ADMISSIBILITY_CEILING:
        raise KernelError(f"wavelet {spec.name} is not admissible (Calderón integral {total})")
    logger.debug("Admissibility constant of %s: %.12g", spec.name, total)
    return total


def line_quadrature(spec: WaveletSpec, points) -> np.ndarray:
    """``⟨ψ, π(b, a)ψ⟩`` by the trapezoid rule; the narrower factor is integrated directly."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    s = np.linspace(-spec.support, spec.support, spec.nodes)
    psi = spec.mother(s)
    out = np.empty(len(pts), dtype=complex)
    chunk = max(1, 4_000_000 // spec.nodes)
    for start in range(0, len(pts), chunk):
        b = pts[start:start + chunk, 0][:, None]
        a = pts[start:start + chunk, 1][:, None]
        wide = np.abs(a) >= 1
        # |a| >= 1: ∫ ψ(s) conj(ψ((s − b)/a)) |a|^{-1/2} ds
        direct = psi[None, :] * np.conj(spec.mother((s[None, :] - b) / a)) / np.sqrt(np.abs(a))
        # |a| < 1: substitute t = b + a s
        swapped = spec.mother(b + a * s[None, :]) * np.conj(psi[None, :]) * np.sqrt(np.abs(a))
        out[start:start + chunk] = integrate.trapezoid(np.where(wide, direct, swapped), s, axis=1)
    return out.real if spec.real else out


def calderon_constant(spec: WaveletSpec, group: GroupSpec) -> float:
    """Norm of the wavelet transform over ``group``.

    Without the ``a < 0`` component a real mother only sees the half line
    ``∫₀^∞ |ψ̂(ξ)|²/ξ dξ = C_ψ/2``.
    """
    if spec.real and not group.q_neighborhood.mirror:
        return spec.admissibility / 2
    return spec.admissibility


def wavelet_kernel(spec: WaveletSpec, group: GroupSpec | None = None,
                   grid: QuadratureGrid | None = None) -> Kernel:
    """``k(x, y) = V_ψψ(inv(y)·x) / C`` on the affine group, ``C`` from :func:`calderon_constant`.

    Mothers without a closed form are tabulated on ``grid`` (required) and
    interpolated in ``(b, log|a|)``; such kernels are not certified.
    """
    group = group or affine()
    if group.id != AFFINE:
        raise DomainError(f"wavelet kernels live on the affine group, got {group.id}")
    c_psi = calderon_constant(spec, group)
    if spec.closed_form is not None:
        v = spec.closed_form

        def evaluate(x, y):
            u = group.mul(group.inv(y), x)
            return v(u[:, 0], u[:, 1]) / c_psi

        return Kernel(group, evaluate, None, label=f"wavelet({spec.name})")

    if grid is None:
        raise DomainError(f"wavelet {spec.name} has no closed form; a grid is needed to tabulate it")
    logger.warning("Wavelet %s is tabulated by line quadrature; its kernel is uncertified", spec.name)
    interpolators = _tabulate(spec, grid)

    def evaluate_table(x, y):
        u = group.mul(group.inv(y), x)
        out = np.zeros(len(u), dtype=float if spec.real else complex)
        coords = np.column_stack([u[:, 0], np.log(np.abs(u[:, 1]))])
        for sign, interp in interpolators.items():
            mask = np.sign(u[:, 1]) == sign
            if mask.any():
                out[mask] = interp(coords[mask])
        return out / c_psi

    return Kernel(group, evaluate_table, None, label=f"wavelet({spec.name}, tabulated)")


def _tabulate(spec: WaveletSpec, grid: QuadratureGrid) -> dict:
    per = int(np.prod(grid.resolution))
    axes = [grid.origin[k] + (np.arange(grid.resolution[k]) + 0.5) * grid.step[k] for k in range(2)]
    interpolators = {}
    for k, sign in enumerate(grid.signs):
        values = line_quadrature(spec, grid.nodes[k * per:(k + 1) * per]).reshape(grid.resolution)
        interpolators[sign] = RegularGridInterpolator(axes, values, bounds_error=False, fill_value=0.0)
    return interpolators


def reproducing_residual(kernel: Kernel, grid: QuadratureGrid, points) -> float:
    """``max |∫ k(x, z) k(z, y) dμ(z) − k(x, y)|`` over pairs of ``points``, relative to ``max k(x, x)``."""
    pts = kernel.group.validate(points)
    left = kernel.matrix(pts, grid.nodes)
    composed = (left * grid.weights[None, :]) @ kernel.matrix(grid.nodes, pts)
    direct = kernel.matrix(pts, pts)
    scale = float(np.max(np.abs(kernel.diagonal(pts))))
    return float(np.max(np.abs(composed - direct))) / scale


def edge_decay(spec: WaveletSpec, grid: QuadratureGrid) -> float:
    """``max |V_ψψ|`` over the outermost grid cells, relative to ``V_ψψ(e)``."""
    coords = grid.coordinates(grid.nodes)
    lo = grid.origin + grid.step / 2
    hi = grid.origin + (np.asarray(grid.resolution) - 0.5) * grid.step
    edge = np.any(np.isclose(coords, lo) | np.isclose(coords, hi), axis=1)
    peak = abs(float(np.real(spec.v(np.array([[0.0, 1.0]]))[0])))
    return float(np.max(np.abs(spec.v(grid.nodes[edge])))) / peak


def affine_lattice(a: float, b: float, j_range, k_range=None, signs=(1,), window=None) -> PointFamily:
    """``{(a^j t b k, a^j t)}`` for ``j ∈ j_range``, ``t ∈ signs``.

    With no ``k_range`` every ``k`` with ``|a^j b k| <= window[0]`` is kept;
    ``window = (b_radius, log_radius)`` also drops scales outside ``|j log a| <= log_radius``.
    """
    if a <= 1 or b <= 0:
        raise DomainError(f"affine lattice needs a > 1 and b > 0, got a={a}, b={b}")
    if k_range is None and window is None:
        raise DomainError("affine lattice needs a k range or a window")
    points = []
    for t in signs:
        for j in j_range:
            scale = a ** j
            if window is not None and abs(j * math.log(a)) > window[1] + 1e-12:
                continue
            if k_range is None:
                top = int(math.floor(window[0] / (scale * b) + 1e-12))
                ks = range(-top, top + 1)
            else:
                ks = k_range
            points.extend((scale * t * b * k, scale * t) for k in ks)
    family = PointFamily(affine(), np.asarray(points, dtype=float).reshape(-1, 2), label=f"lattice(a={a:g},b={b:g})")
    logger.info("Affine lattice a=%g b=%g: %d points", a, b, len(family))
    return family


def covering_affine_lattice(a: float, b: float, grid: QuadratureGrid) -> PointFamily:
    """Lattice whose cells reach one step past every side of ``grid``'s window, on the grid's group."""
    b_radius = max(abs(edge) for edge in grid.window[0])
    log_radius = max(abs(math.log(abs(edge))) for edge in grid.window[1])
    top = int(math.ceil(log_radius / math.log(a) + 0.5))
    window = (b_radius + b * a ** top, log_radius + math.log(a))
    lattice = affine_lattice(a, b, range(-top, top + 1), signs=grid.signs, window=window)
    return PointFamily(grid.group, lattice.points, label=lattice.label)


def affine_lattice_cell(a: float, b: float) -> NeighborhoodSpec:
    """``U = [−b/2, b/2) × [a^{-1/2}, a^{1/2})``; its left translates by the lattice tile the half-plane."""
    half = math.log(a) / 2
    return NeighborhoodSpec(lower=(-b / 2, -half), upper=(b / 2, half), closed_lower=True,
                            closed_upper=False, log_scale=True, label="U")


def square_lattice(group: GroupSpec, spacing: float, extent: float) -> PointFamily:
    """``spacing·ℤ^d`` intersected with the cube of half-width ``extent``."""
    if spacing <= 0:
        raise DomainError(f"lattice spacing must be positive, got {spacing}")
    if group.id == AFFINE:
        raise DomainError("use affine_lattice for the affine group")
    top = int(math.floor(extent / spacing + 1e-9))
    axis = spacing * np.arange(-top, top + 1)
    mesh = np.stack(np.meshgrid(*([axis] * group.dim), indexing="ij"), axis=-1).reshape(-1, group.dim)
    return PointFamily(group, mesh, label=f"lattice(h={spacing:g})")


def lattice_cell(spacing: float, dim: int) -> NeighborhoodSpec:
    """Half-open cube ``[−h/2, h/2)^d``."""
    return NeighborhoodSpec(lower=(-spacing / 2,) * dim, upper=(spacing / 2,) * dim,
                            closed_lower=True, closed_upper=False, label="U")


def jittered_lattice(group: GroupSpec, spacing: float, extent: float, jitter: float,
                     seed: int = 0) -> PointFamily:
    """Square lattice with every point moved uniformly by at most ``jitter·spacing`` per axis."""
    base = square_lattice(group, spacing, extent)
    rng = np.random.default_rng(seed)
    moved = base.points + rng.uniform(-jitter * spacing, jitter * spacing, base.points.shape)
    return PointFamily(group, moved, label=f"jittered(h={spacing:g},j={jitter:g})")


def wavelet_system(spec: WaveletSpec, kernel: Kernel, family: PointFamily) -> VectorSystem:
    """``π(λ)ψ`` realised in the RKHS: ``C_ψ^{-1/2} V_ψ(π(λ)ψ) = C_ψ^{1/2} k(·, λ)``."""
    scale = np.full(len(family), math.sqrt(calderon_constant(spec, kernel.group)))
    return kernel_samples(kernel, family, scale, KERNEL_SAMPLES, f"psi[{spec.name}]")


@dataclass(frozen=True)
class ScenarioSpec:
    """Scenario parameters.

    ``window`` is the half-width of the coordinate window (the ``b`` axis for
    the affine group, whose scale window is ``log_window`` in ``log|a|``).
    Probes form a square lattice of ``probe_spacing`` within ``probe_radius``
    per axis; affine probes use the axes ``b/a`` and ``log|a|`` (radius
    ``probe_log_radius``), so their ``b`` spacing grows with the scale.
    """

    id: str
    window: float = 6.0
    resolution: tuple[int, ...] = (41,)
    probe_radius: float = 2.5
    probe_spacing: float = 0.3
    q_radius: float = 1.0
    mother: str = MEXICAN_HAT
    log_window: float = 3.0
    probe_log_radius: float = 1.5
    mirror: bool = True
    band: float = 1.0
    reg: float = 0.1

    def validate(self) -> "ScenarioSpec":
        if self.id not in SCENARIO_IDS:
            raise DomainError(f"unknown scenario {self.id!r}; expected one of {SCENARIO_IDS}")
        if self.window <= 0 or self.probe_radius <= 0 or self.probe_spacing <= 0 or self.q_radius <= 0:
            raise DomainError("scenario window, probe radius, probe spacing and q radius must be positive")
        if self.probe_radius > self.window:
            raise DomainError(f"probe radius {self.probe_radius} exceeds the window {self.window}")
        if any(r < 1 for r in self.resolution):
            raise DomainError(f"resolution must be positive, got {self.resolution}")
        if self.id == AFFINE_WAVELET:
            if self.mother not in MOTHERS:
                raise DomainError(f"unknown mother wavelet {self.mother!r}")
            if self.log_window <= 0 or not 0 < self.probe_log_radius <= self.log_window:
                raise DomainError("log window and probe log radius must satisfy 0 < probe <= window")
            reach = self.probe_radius * math.exp(self.probe_log_radius)
            if reach > self.window:
                raise DomainError(f"probes reach |b| = {reach:.3g} past the window {self.window}")
        if self.id == BANDLIMITED and (self.band <= 0 or self.reg < 0):
            raise DomainError("bandlimited scenario needs band > 0 and reg >= 0")
        return self

    def to_dict(self) -> dict:
        return {key: (list(value) if isinstance(value, tuple) else value)
                for key, value in self.__dict__.items()}


class Scenario:
    """Group, kernel, quadrature grid and probe family of one scenario."""

    def __init__(self, spec: ScenarioSpec):
        self.spec = spec.validate()
        self.wavelet: WaveletSpec | None = None
        w = spec.window
        if spec.id == FOCK:
            self.group = plane(spec.q_radius, haar_scale=1 / math.pi)
            self.kernel = fock_kernel(self.group)
            self.grid = make_grid(self.group, [(-w, w), (-w, w)], _resolution(spec, 2))
        elif spec.id == BANDLIMITED:
            self.group = real_line(spec.q_radius)
            self.kernel = bandlimited_kernel(spec.band, spec.reg, self.group)
            self.grid = make_grid(self.group, [(-w, w)], _resolution(spec, 1))
        else:
            self.group = affine(q_b=spec.q_radius, mirror=spec.mirror)
            self.wavelet = wavelet_spec(spec.mother)
            self.kernel = wavelet_kernel(self.wavelet, self.group)
            scale = (math.exp(-spec.log_window), math.exp(spec.log_window))
            self.grid = make_grid(self.group, [(-w, w), scale], _resolution(spec, 2), mirror=spec.mirror)
        self.probes = self._probes()
        logger.info("Scenario %s: %d grid nodes, %d probes", spec.id, self.grid.size, len(self.probes))

    def _probes(self) -> PointFamily:
        spec = self.spec
        if spec.id != AFFINE_WAVELET:
            family = square_lattice(self.group, spec.probe_spacing, spec.probe_radius)
            return PointFamily(self.group, family.points, label="probes")
        # square mesh in (b/a, log a): the points (0, a)·(β, 1), spaced like the wavelets they carry
        top_b = int(math.floor(spec.probe_radius / spec.probe_spacing + 1e-9))
        top_a = int(math.floor(spec.probe_log_radius / spec.probe_spacing + 1e-9))
        betas = spec.probe_spacing * np.arange(-top_b, top_b + 1)
        scales = np.exp(spec.probe_spacing * np.arange(-top_a, top_a + 1))
        mesh = np.stack(np.meshgrid(betas, scales, indexing="ij"), axis=-1).reshape(-1, 2)
        mesh[:, 0] *= mesh[:, 1]
        blocks = [mesh * np.array([1.0, sign]) for sign in self.grid.signs]
        return PointFamily(self.group, np.vstack(blocks), label="probes")

    @cached_property
    def space(self) -> KernelSpace:
        return KernelSpace(self.kernel, self.probes)

    def describe(self) -> dict:
        return {"scenario": self.spec.to_dict(), "group": self.group.to_dict(), "grid": self.grid.describe(),
                "probes": len(self.probes)}


def _resolution(spec: ScenarioSpec, dim: int) -> tuple[int, ...]:
    res = tuple(spec.resolution)
    if len(res) == 1:
        return res * dim
    if len(res) != dim:
        raise DomainError(f"scenario {spec.id} needs {dim} resolutions, got {res}")
    return res
