"""Amalgam-space machinery on quadrature grids.

Maximal functions take the max of ``|f|`` over grid nodes in ``xQ`` (left) or
``Qx`` (right); values outside the window count as 0. Convolution uses the
grid's displacement table, so ``g(inv(y)·x)`` is a nearest-node lookup.
"""
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import pandas as pd
from scipy.linalg import svdvals

from rkhs_tools.errors import DomainError
from rkhs_tools.group import NeighborhoodSpec, QuadratureGrid, Weight, neighborhood_measure
from rkhs_tools.pointset import PointFamily, relative_separation

logger = logging.getLogger(__name__)

SWAP_IDENTITY_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: QuadratureGrid
    values: np.ndarray = field(repr=False)
    label: str = ""

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.shape != (self.grid.size,):
            raise DomainError(f"{self.label or 'grid function'} has shape {values.shape}, "
                              f"grid has {self.grid.size} nodes")
        if not np.all(np.isfinite(values)):
            raise DomainError(f"{self.label or 'grid function'} has non-finite values")
        object.__setattr__(self, "values", values)

    def _check(self, other: "GridFunction"):
        if other.grid is not self.grid:
            raise DomainError("grid functions live on different grids")

    def abs(self) -> "GridFunction":
        return GridFunction(self.grid, np.abs(self.values), self.label)

    def scaled(self, factor: float) -> "GridFunction":
        return GridFunction(self.grid, factor * self.values, self.label)

    def __add__(self, other: "GridFunction") -> "GridFunction":
        self._check(other)
        return GridFunction(self.grid, self.values + other.values, self.label)

    def maximum(self, other: "GridFunction") -> "GridFunction":
        self._check(other)
        return GridFunction(self.grid, np.maximum(self.values, other.values), self.label)

    def minimum(self, other: "GridFunction") -> "GridFunction":
        self._check(other)
        return GridFunction(self.grid, np.minimum(self.values, other.values), self.label)

    def clipped(self, ceiling: float) -> "GridFunction":
        return GridFunction(self.grid, np.minimum(self.values, ceiling), self.label)

    def at(self, points) -> np.ndarray:
        """Nearest-node values at arbitrary points, 0 outside the window."""
        idx = self.grid.locate(points)
        padded = np.append(self.values, 0)
        return padded[idx]

    def integral(self) -> complex | float:
        return np.sum(self.values * self.grid.weights)

    def norm_l1(self, w: Weight | None = None) -> float:
        dens = np.abs(self.values) * self.grid.weights
        if w is not None:
            dens = dens * w(self.grid.nodes)
        return float(dens.sum())

    def norm_l2_sq(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2 * self.grid.weights))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if self.grid.size else 0.0

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.grid.nodes, columns=list(self.grid.group.axis_names))
        if np.iscomplexobj(self.values):
            frame["real"] = self.values.real
            frame["imag"] = self.values.imag
        else:
            frame["value"] = self.values
        return frame


def zeros(grid: QuadratureGrid, label: str = "") -> GridFunction:
    return GridFunction(grid, np.zeros(grid.size), label)


def from_callable(grid: QuadratureGrid, func, label: str = "") -> GridFunction:
    return GridFunction(grid, np.asarray(func(grid.nodes)), label)


@lru_cache(maxsize=32)
def _neighbor_mask(grid: QuadratureGrid, nbhd: NeighborhoodSpec, right: bool) -> np.ndarray:
    return grid.relative_points(nbhd, right=right)


def _masked_max(mask: np.ndarray, values: np.ndarray) -> np.ndarray:
    return np.where(mask, np.abs(values)[None, :], 0.0).max(axis=1)


def maximal_left(f: GridFunction, q: NeighborhoodSpec | None = None) -> GridFunction:
    """``M_Q f(x) = max |f(y)|`` over nodes ``y ∈ xQ``."""
    q = q or f.grid.group.q_neighborhood
    mask = _neighbor_mask(f.grid, q, False)
    return GridFunction(f.grid, _masked_max(mask, f.values), f"M_{q.label}[{f.label}]")


def maximal_right(f: GridFunction, q: NeighborhoodSpec | None = None) -> GridFunction:
    """``M^R_Q f(x) = max |f(y)|`` over nodes ``y ∈ Qx``."""
    q = q or f.grid.group.q_neighborhood
    mask = _neighbor_mask(f.grid, q, True)
    return GridFunction(f.grid, _masked_max(mask, f.values), f"MR_{q.label}[{f.label}]")


@dataclass(frozen=True)
class AmalgamReport:
    norm_two_sided: float
    norm_left: float
    norm_right: float
    l1w: float
    linf: float
    linf_constant: float
    swap_gap: float
    weight_label: str

    @property
    def ordered(self) -> bool:
        slack = 1e-12 * max(1.0, self.norm_two_sided)
        return (self.norm_left + slack >= self.l1w
                and self.norm_right + slack >= self.l1w
                and self.norm_two_sided + slack >= self.norm_left)

    def to_dict(self) -> dict:
        return {
            "norm_two_sided": self.norm_two_sided,
            "norm_left": self.norm_left,
            "norm_right": self.norm_right,
            "l1w": self.l1w,
            "linf": self.linf,
            "linf_constant": self.linf_constant,
            "swap_gap": self.swap_gap,
            "weight": self.weight_label,
        }


def linf_constant(grid: QuadratureGrid, p: NeighborhoodSpec | None = None) -> float:
    """``C = 1/μ(P)`` of the embedding ``‖f‖_∞ <= C ‖f‖_{W^L}``."""
    p = p or grid.group.p_neighborhood
    return 1.0 / neighborhood_measure(grid.group, p)


def amalgam_norms(f: GridFunction, w: Weight | None = None,
                  q: NeighborhoodSpec | None = None) -> AmalgamReport:
    grid = f.grid
    wv = np.ones(grid.size) if w is None else w(grid.nodes)
    dens = wv * grid.weights
    left = maximal_left(f, q)
    right = maximal_right(f, q)
    two_sided = maximal_right(left, q)
    swapped = maximal_left(right, q)
    swap_gap = float(np.max(np.abs(two_sided.values - swapped.values))) if grid.size else 0.0
    if swap_gap > SWAP_IDENTITY_TOL:
        logger.warning("M^R M f and M M^R f differ by %.3g on %s (grid effect)", swap_gap, f.label)
    return AmalgamReport(
        norm_two_sided=float(np.sum(two_sided.values * dens)),
        norm_left=float(np.sum(left.values * dens)),
        norm_right=float(np.sum(right.values * dens)),
        l1w=float(np.sum(np.abs(f.values) * dens)),
        linf=f.max_abs(),
        linf_constant=linf_constant(grid),
        swap_gap=swap_gap,
        weight_label="w=1" if w is None else w.label,
    )


def wnorm(f: GridFunction, w: Weight | None = None, q: NeighborhoodSpec | None = None) -> float:
    """Windowed ``‖f‖_{W_w} = ‖M^R_Q M_Q f‖_{L¹_w}``."""
    two_sided = maximal_right(maximal_left(f, q), q)
    wv = 1.0 if w is None else w(f.grid.nodes)
    return float(np.sum(two_sided.values * wv * f.grid.weights))


def linf_embedding(f: GridFunction, p: NeighborhoodSpec | None = None) -> tuple[float, float, float]:
    """Return ``(‖f‖_∞, C, ‖f‖_{W^L})``; the embedding asserts the first <= C times the last."""
    constant = linf_constant(f.grid, p)
    norm_left = float(np.sum(maximal_left(f).values * f.grid.weights))
    return f.max_abs(), constant, norm_left


def convolve(f: GridFunction, g: GridFunction) -> GridFunction:
    """``(f∗g)(x) = Σ_y f(y) g(inv(y)·x) μ(y)`` over grid nodes."""
    if f.grid is not g.grid:
        raise DomainError("convolve needs both functions on the same grid")
    grid = f.grid
    table = grid.displacement_table
    padded = np.append(g.values, 0)
    gathered = padded[table]
    values = gathered @ (f.values * grid.weights)
    return GridFunction(grid, values, f"({f.label}*{g.label})")


def reflect(f: GridFunction) -> GridFunction:
    """``f^∨(x) = f(inv(x))``."""
    padded = np.append(f.values, 0)
    return GridFunction(f.grid, padded[f.grid.inverse_index], f"{f.label}^v")


def symmetrize_min(f: GridFunction) -> GridFunction:
    """``min(f(x), f(inv(x)))``; out-of-window inverses count as 0."""
    return f.minimum(reflect(f))


@dataclass(frozen=True)
class SynthesisBound:
    bound: float
    bound_sq: float
    measured: float
    rel: int

    @property
    def passed(self) -> bool:
        return self.measured <= self.bound * (1 + 1e-9) + 1e-14

    def to_dict(self) -> dict:
        return {"bound": self.bound, "bound_sq": self.bound_sq,
                "measured": self.measured, "rel": self.rel, "passed": self.passed}


def synthesis_operator_norm(theta: GridFunction, family: PointFamily) -> float:
    """Largest singular value of ``c ↦ Σ c_λ Θ(inv(λ)·)`` as a map into L²."""
    if len(family) == 0:
        return 0.0
    grid = theta.grid
    g = grid.group
    shifted = g.mul(np.repeat(g.inv(family.points), grid.size, axis=0),
                    np.tile(grid.nodes, (len(family), 1)))
    columns = theta.at(shifted).reshape(len(family), grid.size).T
    return float(svdvals(np.sqrt(grid.weights)[:, None] * columns)[0])


def synthesis_norm_bound(theta: GridFunction, family: PointFamily,
                         q: NeighborhoodSpec | None = None) -> SynthesisBound:
    """Bound on ``‖c ↦ Σ c_λ L_λΘ‖`` from the separation of ``family``.

    The squared operator norm is at most
    ``rel(Λ)/μ(Q) · ‖Θ‖_{L¹} · ‖Θ^∨‖_{W^L}``.
    """
    if np.any(theta.values.real < 0) or np.iscomplexobj(theta.values):
        raise DomainError("synthesis_norm_bound needs a nonnegative real profile")
    grid = theta.grid
    q = q or grid.group.q_neighborhood
    rel = relative_separation(family, q, grid) if len(family) else 0
    mu_q = neighborhood_measure(grid.group, q)
    l1 = theta.norm_l1()
    left_reflected = float(np.sum(maximal_left(reflect(theta), q).values * grid.weights))
    bound_sq = rel / mu_q * l1 * left_reflected
    measured = synthesis_operator_norm(theta, family)
    result = SynthesisBound(math.sqrt(bound_sq), bound_sq, measured, rel)
    logger.info("Synthesis bound %.6g (measured %.6g, rel=%d)", result.bound, measured, rel)
    return result


@dataclass(frozen=True)
class DiscreteSumCheck:
    lhs: np.ndarray
    rhs: np.ndarray

    @property
    def max_excess(self) -> float:
        return float(np.max(self.lhs - self.rhs)) if len(self.lhs) else 0.0


def discrete_sum_bound(phi: GridFunction, psi: GridFunction, family: PointFamily,
                       x_points, y_points, q: NeighborhoodSpec | None = None) -> DiscreteSumCheck:
    """Both sides of ``Σ_λ Φ(λ⁻¹x)Ψ(y⁻¹λ) <= rel/μ(Q)·(M_QΨ ∗ M^R_QΦ)(y⁻¹x)``."""
    grid = phi.grid
    g = grid.group
    q = q or g.q_neighborhood
    x_points = g.validate(x_points)
    y_points = g.validate(y_points)
    lam = family.points
    m = len(lam)
    lhs = np.zeros(len(x_points))
    for k, (x, y) in enumerate(zip(x_points, y_points)):
        left = phi.at(g.mul(g.inv(lam), np.repeat(x[None, :], m, axis=0)))
        right = psi.at(g.mul(np.repeat(g.inv(y[None, :]), m, axis=0), lam))
        lhs[k] = float(np.sum(left * right))
    rel = relative_separation(family, q, grid)
    profile = convolve(maximal_left(psi, q), maximal_right(phi, q))
    rhs = rel / neighborhood_measure(g, q) * profile.at(g.mul(g.inv(y_points), x_points))
    return DiscreteSumCheck(lhs, rhs)
