"""Reproducing kernels and their certification.

A :class:`Kernel` wraps a vectorised evaluator ``k(x, y)``. The three kernel
conditions are certified on a quadrature grid:

* bounded diagonal (``check_bd``),
* localization by an envelope ``Θ`` fitted from grid pairs (``fit_envelope``),
* weak uniform continuity through the L¹ continuity of the slices
  ``k(x, ·)`` up to an optional phase ``Γ`` (``check_wuc``).

:class:`KernelSpace` is the finite-dimensional model used by the frame and
Riesz constructions: the span of the slices at a probe family, with an
orthonormal basis from a rank-revealing eigensolve.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import pandas as pd
from scipy.linalg import eigh, null_space

from rkhs_tools.envelope import AmalgamReport, GridFunction, amalgam_norms, maximal_left, maximal_right
from rkhs_tools.errors import DomainError, KernelError
from rkhs_tools.group import AFFINE, GroupSpec, QuadratureGrid, Weight, make_grid
from rkhs_tools.pointset import PointFamily

logger = logging.getLogger(__name__)

BD_FLOOR = 1e-8
WUC_TOL = 0.03
WUC_SLACK = 0.05
LOC_GROWTH = 0.5
DEFAULT_OFFSETS = tuple(0.32 * 2.0 ** -k for k in range(6))

_CHUNK = 2_000_000


@dataclass(frozen=True)
class Kernel:
    group: GroupSpec
    evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray] = field(compare=False)
    phase: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = field(default=None, compare=False)
    label: str = "k"

    def __call__(self, x, y) -> np.ndarray:
        """Pairwise values ``k(x_i, y_i)``."""
        x = self.group.validate(x)
        y = self.group.validate(y)
        return np.asarray(self.evaluator(x, y))

    def matrix(self, xs, ys) -> np.ndarray:
        """``[k(x_i, y_j)]``."""
        xs = self.group.validate(xs) if len(np.atleast_2d(xs)) else np.zeros((0, self.group.dim))
        ys = self.group.validate(ys) if len(np.atleast_2d(ys)) else np.zeros((0, self.group.dim))
        blocks = []
        rows = max(1, _CHUNK // max(len(ys), 1))
        for start in range(0, len(xs), rows):
            block = xs[start:start + rows]
            values = self.evaluator(np.repeat(block, len(ys), axis=0), np.tile(ys, (len(block), 1)))
            blocks.append(np.asarray(values).reshape(len(block), len(ys)))
        if not blocks:
            return np.zeros((len(xs), len(ys)))
        return np.vstack(blocks)

    def diagonal(self, xs) -> np.ndarray:
        xs = self.group.validate(xs)
        return np.asarray(self.evaluator(xs, xs))

    def gamma(self, x, y) -> np.ndarray:
        """Phase ``Γ(x, y)``; identically 1 when no phase is attached."""
        x = self.group.validate(x)
        if self.phase is None:
            return np.ones(len(x))
        return np.asarray(self.phase(x, self.group.validate(y)))

    def without_phase(self) -> "Kernel":
        return replace(self, phase=None, label=f"{self.label}[Γ=1]")

    def check_gram(self, points) -> tuple[float, float]:
        """Hermitian gap and ``min eig / max eig`` of the sampled Gram matrix."""
        gram = self.matrix(points, points)
        gap = float(np.max(np.abs(gram - gram.conj().T))) if gram.size else 0.0
        evals = np.linalg.eigvalsh((gram + gram.conj().T) / 2)
        scale = max(float(np.max(np.abs(evals))), 1e-300)
        return gap, float(evals.min() / scale)


@dataclass(frozen=True)
class BDReport:
    alpha: float
    beta: float
    floor: float
    spread: float

    @property
    def passed(self) -> bool:
        return self.alpha > self.floor

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "floor": self.floor,
                "spread": self.spread, "passed": self.passed}


def check_bd(kernel: Kernel, grid: QuadratureGrid, floor: float = BD_FLOOR) -> BDReport:
    """Extreme values of the diagonal ``k(x, x)`` over the grid."""
    diag = kernel.diagonal(grid.nodes)
    if np.iscomplexobj(diag) and np.max(np.abs(diag.imag)) > 1e-10:
        raise KernelError(f"{kernel.label} has a non-real diagonal (|imag| up to {np.max(np.abs(diag.imag)):.3g})")
    diag = np.real(diag)
    if diag.min() < -1e-10:
        raise KernelError(f"{kernel.label} has a negative diagonal value {diag.min():.3g}")
    alpha, beta = float(diag.min()), float(diag.max())
    spread = (beta - alpha) / beta if beta > 0 else 0.0
    report = BDReport(alpha, beta, floor, spread)
    logger.info("BD %s: alpha=%.12g beta=%.12g", kernel.label, alpha, beta)
    return report


def _bin_max(bin_grid: QuadratureGrid, bins: np.ndarray, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    out = np.zeros(bin_grid.size)
    hits = np.zeros(bin_grid.size, dtype=bool)
    valid = bins >= 0
    np.maximum.at(out, bins[valid], values[valid])
    hits[bins[valid]] = True
    return out, hits


def pair_envelope(values: np.ndarray, grid: QuadratureGrid, label: str = "Φ") -> tuple[GridFunction, int]:
    """Bin ``max(|H(x,y)|, |H(y,x)|)`` by the node of ``inv(y)·x``.

    ``values`` is the ``(n, n)`` matrix over grid nodes. Returns the envelope
    and the number of empty bins.
    """
    magnitude = np.abs(values)
    magnitude = np.maximum(magnitude, magnitude.T)
    envelope, hits = _bin_max(grid, grid.displacement_table.ravel(), magnitude.ravel())
    return GridFunction(grid, envelope, label), int(np.count_nonzero(~hits))


@dataclass(frozen=True)
class LocReport:
    envelope: GridFunction = field(repr=False)
    amalgam: AmalgamReport
    growth: tuple[tuple[float, float], ...]
    growth_ratio: float
    empty_bins: int
    limit: float

    @property
    def passed(self) -> bool:
        return math.isfinite(self.amalgam.norm_two_sided) and self.growth_ratio <= self.limit

    def growth_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.growth, columns=["window_fraction", "windowed_norm"])

    def to_dict(self) -> dict:
        return {
            "amalgam": self.amalgam.to_dict(),
            "growth": [list(row) for row in self.growth],
            "growth_ratio": self.growth_ratio,
            "growth_limit": self.limit,
            "empty_bins": self.empty_bins,
            "passed": self.passed,
        }


def fit_envelope(kernel: Kernel, grid: QuadratureGrid, bins: int | None = None,
                 values: np.ndarray | None = None) -> tuple[GridFunction, int]:
    """Smallest sampled envelope ``Θ`` with ``|k(x,y)| <= Θ(inv(y)·x)`` at grid pairs.

    With ``bins`` the displacements are binned on a grid of that resolution
    over the same window; otherwise the grid nodes are the bins.
    """
    if values is None:
        values = kernel.matrix(grid.nodes, grid.nodes)
    if bins is None:
        envelope, empty = pair_envelope(values, grid, f"Θ[{kernel.label}]")
    else:
        g = grid.group
        bin_grid = _bin_grid(grid, bins)
        magnitude = np.abs(values)
        magnitude = np.maximum(magnitude, magnitude.T)
        n = grid.size
        inv_nodes = g.inv(grid.nodes)
        out = np.zeros(bin_grid.size)
        hits = np.zeros(bin_grid.size, dtype=bool)
        rows = max(1, _CHUNK // n)
        for start in range(0, n, rows):
            block = grid.nodes[start:start + rows]
            disp = g.mul(np.tile(inv_nodes, (len(block), 1)), np.repeat(block, n, axis=0))
            part, seen = _bin_max(bin_grid, bin_grid.locate(disp), magnitude[start:start + len(block)].ravel())
            out = np.maximum(out, part)
            hits |= seen
        envelope, empty = GridFunction(bin_grid, out, f"Θ[{kernel.label}]"), int(np.count_nonzero(~hits))
    if empty:
        logger.warning("Envelope of %s has %d empty bins (set to 0)", kernel.label, empty)
    return envelope, empty


def _coordinate_window(grid: QuadratureGrid) -> list[tuple[float, float]]:
    """Window in the grid's uniform coordinates."""
    return [(float(o), float(o + s * r)) for o, s, r in zip(grid.origin, grid.step, grid.resolution)]


def _bin_grid(grid: QuadratureGrid, bins: int) -> QuadratureGrid:
    window = list(grid.window)
    if grid.group.id == AFFINE:
        lo, hi = _coordinate_window(grid)[1]
        window[1] = (math.exp(lo), math.exp(hi)) if grid.signs[0] > 0 else (-math.exp(hi), -math.exp(lo))
    return make_grid(grid.group, window, bins, mirror=len(grid.signs) > 1)


def _nested_mask(grid: QuadratureGrid, fraction: float) -> np.ndarray:
    coords = grid.coordinates(grid.nodes)
    window = np.asarray(_coordinate_window(grid))
    center = window.mean(axis=1)
    half = 0.5 * (window[:, 1] - window[:, 0])
    return np.all(np.abs(coords - center) <= fraction * half + 1e-12, axis=1)


def windowed_growth(theta: GridFunction, w: Weight | None = None,
                    fractions=(0.5, 0.75, 1.0)) -> tuple[tuple[tuple[float, float], ...], float]:
    """Windowed norm of ``Θ`` over nested sub-windows and the ratio of its last two increments.

    Converging norms give a small ratio; the logarithmic growth of a sinc
    envelope keeps it close to 1.
    """
    grid = theta.grid
    two_sided = maximal_right(maximal_left(theta)).values
    wv = np.ones(grid.size) if w is None else w(grid.nodes)
    density = two_sided * wv * grid.weights
    table = tuple((float(f), float(density[_nested_mask(grid, f)].sum())) for f in fractions)
    norms = [row[1] for row in table]
    inner, outer = norms[-2] - norms[-3], norms[-1] - norms[-2]
    if outer <= 1e-9 * max(norms[-1], 1e-300):
        ratio = 0.0
    elif inner <= 0:
        ratio = math.inf
    else:
        ratio = outer / inner
    return table, ratio


def check_loc(kernel: Kernel, grid: QuadratureGrid, w: Weight | None = None,
              limit: float = LOC_GROWTH, values: np.ndarray | None = None) -> LocReport:
    theta, empty = fit_envelope(kernel, grid, values=values)
    report = amalgam_norms(theta, w)
    growth, ratio = windowed_growth(theta, w)
    loc = LocReport(theta, report, growth, ratio, empty, limit)
    log = logger.info if loc.passed else logger.warning
    log("LOC %s: windowed norm %.6g, growth ratio %.3g (limit %.3g)",
        kernel.label, report.norm_two_sided, ratio, limit)
    return loc


def _offset_points(g: GroupSpec, size: float) -> np.ndarray:
    """Offsets of the given size along each coordinate axis."""
    if g.id == AFFINE:
        return np.array([[size, 1.0], [0.0, math.exp(size)]])
    return size * np.eye(g.dim)


def _wuc_centers(grid: QuadratureGrid, fraction: float = 0.75, count: int = 40) -> np.ndarray:
    """Strided sample of the inner sub-window plus its extreme corners."""
    idx = np.flatnonzero(_nested_mask(grid, fraction))
    stride = max(1, len(idx) // count)
    chosen = set(idx[::stride].tolist())
    coords = grid.coordinates(grid.nodes[idx])
    for signs in np.array(np.meshgrid(*[[-1.0, 1.0]] * grid.group.dim)).T.reshape(-1, grid.group.dim):
        chosen.add(int(idx[np.argmax(coords @ signs)]))
    return grid.nodes[sorted(chosen)]


@dataclass(frozen=True)
class WucReport:
    offsets: tuple[float, ...]
    eta: tuple[float, ...]
    scale: float
    tol: float
    monotone: bool
    phase: bool

    @property
    def relative(self) -> tuple[float, ...]:
        return tuple(e / self.scale for e in self.eta)

    @property
    def passed(self) -> bool:
        return self.monotone and self.relative[-1] <= self.tol

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"offset": self.offsets, "eta": self.eta, "relative": self.relative})

    def to_dict(self) -> dict:
        return {"offsets": list(self.offsets), "eta": list(self.eta), "scale": self.scale,
                "tol": self.tol, "monotone": self.monotone, "phase": self.phase,
                "passed": self.passed}


def check_wuc(kernel: Kernel, grid: QuadratureGrid, offsets=DEFAULT_OFFSETS,
              tol: float = WUC_TOL, slack: float = WUC_SLACK) -> WucReport:
    """Empirical modulus ``η̂(u) = max_y ‖k(yu, ·) − Γ(yu, y)·k(y, ·)‖_{L¹}``.

    Centres ``y`` are sampled inside three quarters of the window; ``η̂`` is
    reported relative to the largest slice L¹ norm. Offsets are visited from
    the largest to the smallest.
    """
    g = kernel.group
    offsets = tuple(sorted((float(u) for u in offsets), reverse=True))
    centers = _wuc_centers(grid)
    base = kernel.matrix(centers, grid.nodes)
    scale = float(np.max(np.abs(base) @ grid.weights))
    eta = []
    for size in offsets:
        worst = 0.0
        for u in _offset_points(g, size):
            moved = g.mul(centers, np.repeat(u[None, :], len(centers), axis=0))
            shifted = kernel.matrix(moved, grid.nodes)
            phase = kernel.gamma(moved, centers)[:, None]
            worst = max(worst, float(np.max(np.abs(shifted - phase * base) @ grid.weights)))
        eta.append(worst)
    monotone = all(later <= earlier * (1 + slack) + 1e-15 for earlier, later in zip(eta, eta[1:]))
    report = WucReport(offsets, tuple(eta), scale, tol, monotone, kernel.phase is not None)
    log = logger.info if report.passed else logger.warning
    log("WUC %s: relative eta %s (tol %.3g)", kernel.label,
        ", ".join(f"{r:.3g}" for r in report.relative), tol)
    return report


def check_wuc_ratio(kernel: Kernel, grid: QuadratureGrid, theta: GridFunction,
                    offsets=DEFAULT_OFFSETS) -> pd.DataFrame:
    """Pointwise ratio ``|k(yu,t) − Γ k(y,t)| / (2 M_QΘ(inv(t)·y))`` per offset.

    The ratio never exceeds 1 for offsets inside Q and tends to 0 with the
    offset for a weakly uniformly continuous kernel.
    """
    g = kernel.group
    centers = _wuc_centers(grid, count=12)
    majorant = maximal_left(theta)
    base = kernel.matrix(centers, grid.nodes)
    disp = g.mul(np.tile(g.inv(grid.nodes), (len(centers), 1)), np.repeat(centers, grid.size, axis=0))
    bound = 2 * majorant.at(disp).reshape(len(centers), grid.size)
    rows = []
    for size in sorted((float(u) for u in offsets), reverse=True):
        worst = 0.0
        for u in _offset_points(g, size):
            moved = g.mul(centers, np.repeat(u[None, :], len(centers), axis=0))
            diff = np.abs(kernel.matrix(moved, grid.nodes) - kernel.gamma(moved, centers)[:, None] * base)
            mask = bound > 0
            if mask.any():
                worst = max(worst, float(np.max(diff[mask] / bound[mask])))
        rows.append({"offset": size, "ratio": worst})
    return pd.DataFrame(rows)


def project(kernel: Kernel, f: GridFunction, values: np.ndarray | None = None) -> GridFunction:
    """Quadrature image ``Pf(x) = Σ_y k(x,y) f(y) μ(y)``."""
    grid = f.grid
    if values is None:
        values = kernel.matrix(grid.nodes, grid.nodes)
    return GridFunction(grid, values @ (f.values * grid.weights), f"P[{f.label}]")


def orthogonal_to_slices(kernel: Kernel, grid: QuadratureGrid, centers, seed: int = 0) -> GridFunction:
    """A random grid function orthogonal (in the grid inner product) to ``k(·, c)`` for all centres."""
    slices = kernel.matrix(grid.nodes, centers) * np.sqrt(grid.weights)[:, None]
    basis = null_space(slices.conj().T)
    rng = np.random.default_rng(seed)
    coeffs = rng.standard_normal(basis.shape[1])
    values = (basis @ coeffs) / np.sqrt(grid.weights)
    return GridFunction(grid, values, "orthogonal")


class KernelSpace:
    """Span of the slices ``k(·, p)`` over a probe family, with an orthonormal basis.

    ``basis`` holds ``B`` with ``e_i(x) = Σ_p k(x, p) B[p, i]``; the Gram matrix
    of the probes is eigendecomposed and eigenvalues below ``drop_tol`` times
    the largest are discarded.
    """

    def __init__(self, kernel: Kernel, probes, drop_tol: float = 1e-10):
        if not isinstance(probes, PointFamily):
            probes = PointFamily(kernel.group, probes, label="probes")
        if len(probes) == 0:
            raise DomainError("KernelSpace needs at least one probe point")
        self.kernel = kernel
        self.probes = probes
        self.drop_tol = drop_tol
        gram = kernel.matrix(probes.points, probes.points)
        gram = (gram + gram.conj().T) / 2
        self.is_complex = bool(np.iscomplexobj(gram))
        evals, evecs = eigh(gram)
        keep = evals > drop_tol * evals.max()
        self.dropped = int(np.count_nonzero(~keep))
        self.basis = evecs[:, keep] / np.sqrt(evals[keep])
        self.eigenvalues = evals[keep]
        if self.dropped:
            logger.warning("Probe Gram of %s is rank deficient: working on a %d-dimensional subspace "
                           "(%d directions dropped)", kernel.label, self.rank, self.dropped)
        else:
            logger.debug("KernelSpace %s: rank %d", kernel.label, self.rank)

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    def values(self, points) -> np.ndarray:
        """``E[x, i] = e_i(x)``."""
        return self.kernel.matrix(points, self.probes.points) @ self.basis

    def kernel_coords(self, points) -> np.ndarray:
        """Coordinates ``(rank, m)`` of the projected slices ``P k(·, λ)``."""
        return self.values(points).conj().T

    def coords_of(self, centers, expansion: np.ndarray) -> np.ndarray:
        """Coordinates of ``g = Σ_μ expansion[μ] k(·, μ)`` (projected)."""
        return self.basis.conj().T @ (self.kernel.matrix(self.probes.points, centers) @ expansion)

    def evaluate(self, coords: np.ndarray, points) -> np.ndarray:
        return self.values(points) @ coords

    def random_coords(self, count: int, seed: int = 0) -> np.ndarray:
        """``count`` unit vectors of the space, as columns."""
        rng = np.random.default_rng(seed)
        coords = rng.standard_normal((self.rank, count))
        if self.is_complex:
            coords = coords + 1j * rng.standard_normal((self.rank, count))
        return coords / np.linalg.norm(coords, axis=0)

    def describe(self) -> dict:
        return {"probes": len(self.probes), "rank": self.rank, "dropped": self.dropped,
                "drop_tol": self.drop_tol}


@dataclass(frozen=True)
class KernelCertificate:
    kernel_label: str
    bd: BDReport
    loc: LocReport
    wuc: WucReport
    grid: dict
    weight_label: str
    l2_theta_sq: float

    @property
    def theta(self) -> GridFunction:
        return self.loc.envelope

    @property
    def passed(self) -> bool:
        return self.bd.passed and self.loc.passed and self.wuc.passed

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel_label,
            "bd": self.bd.to_dict(),
            "loc": self.loc.to_dict(),
            "wuc": self.wuc.to_dict(),
            "grid": self.grid,
            "weight": self.weight_label,
            "theta_l2_sq": self.l2_theta_sq,
            "passed": self.passed,
        }


def certify_kernel(kernel: Kernel, grid: QuadratureGrid, w: Weight | None = None,
                   offsets=DEFAULT_OFFSETS, bd_floor: float = BD_FLOOR, wuc_tol: float = WUC_TOL,
                   loc_growth: float = LOC_GROWTH) -> KernelCertificate:
    """Run the three kernel checks on one grid."""
    values = kernel.matrix(grid.nodes, grid.nodes)
    bd = check_bd(kernel, grid, bd_floor)
    loc = check_loc(kernel, grid, w, loc_growth, values=values)
    wuc = check_wuc(kernel, grid, offsets, wuc_tol)
    l2 = loc.envelope.norm_l2_sq()
    if bd.beta > l2 * (1 + 1e-3) + 1e-9:
        logger.warning("Diagonal bound beta=%.6g exceeds ||Theta||^2=%.6g on this window", bd.beta, l2)
    cert = KernelCertificate(kernel.label, bd, loc, wuc, grid.describe(),
                             "w=1" if w is None else w.label, l2)
    log = logger.info if cert.passed else logger.warning
    log("Kernel %s certificate: BD=%s LOC=%s WUC=%s", kernel.label, bd.passed, loc.passed, wuc.passed)
    return cert
