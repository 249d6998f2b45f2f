"""Convolution-dominated kernels and matrices with envelope tracking.

Every operation returns its result together with an envelope that dominates
it at all sampled pairs. The theoretical envelope of an operation is combined
with the fitted one by a pointwise maximum; how far the fitted envelope pokes
above the theoretical one is kept as ``theory_excess``.

The holomorphic functional calculus evaluates ``φ(T) = Σ aₙ (T − 1)ⁿ`` for
operators close to the identity. The series stops once the a priori tail
bound ``C_φ 2^{−n}`` is below tolerance.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import pandas as pd
from scipy.linalg import svdvals

from rkhs_tools.envelope import (
    GridFunction,
    amalgam_norms,
    convolve,
    maximal_left,
    maximal_right,
    symmetrize_min,
    wnorm,
)
from rkhs_tools.errors import DomainError, GateFailure
from rkhs_tools.group import NeighborhoodSpec, QuadratureGrid, Weight, neighborhood_measure
from rkhs_tools.pointset import PointFamily, relative_separation
from rkhs_tools.rkhs import KernelSpace, pair_envelope

logger = logging.getLogger(__name__)

SERIES_TOL = 1e-12
MAX_TERMS = 200
DIVERGENCE_WINDOW = 10
SOUNDNESS_TOL = 1e-12
_HUGE = 1e300


def _combine(theory: np.ndarray, fitted: np.ndarray) -> tuple[np.ndarray, float]:
    theory = np.minimum(np.nan_to_num(theory, nan=_HUGE, posinf=_HUGE), _HUGE)
    excess = float(np.max(fitted - theory)) if fitted.size else 0.0
    scale = max(float(np.max(fitted)) if fitted.size else 0.0, 1e-300)
    return np.maximum(theory, fitted), max(0.0, excess) / scale


@dataclass(frozen=True)
class CalculusReport:
    function: str
    gap: float
    gate: float
    gate_source: str
    ratio: float
    terms: int
    tail_bound: float
    residual: float | None
    term_norms: tuple[float, ...] = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "function": self.function,
            "gap": self.gap,
            "gate": self.gate,
            "gate_source": self.gate_source,
            "ratio": self.ratio,
            "terms": self.terms,
            "tail_bound": self.tail_bound,
            "residual": self.residual,
        }


@dataclass(frozen=True, eq=False)
class LocalizedKernel:
    """Kernel ``H(x, y)`` sampled on grid nodes, with an envelope.

    When ``space`` is set, ``coords`` is the matrix ``h`` with
    ``H(x, y) = Σ e_i(x) h_ij conj(e_j(y))`` in the orthonormal basis of the
    space, and compositions are exact.
    """

    grid: QuadratureGrid
    values: np.ndarray = field(repr=False)
    envelope: GridFunction = field(repr=False)
    label: str = "H"
    coords: np.ndarray | None = field(default=None, repr=False)
    space: KernelSpace | None = field(default=None, repr=False)
    theory_excess: float = 0.0
    calculus: CalculusReport | None = None

    @property
    def exact(self) -> bool:
        return self.coords is not None and self.space is not None

    def apply(self, f: np.ndarray) -> np.ndarray:
        """``T_H f`` on grid values."""
        return self.values @ (np.asarray(f) * self.grid.weights)

    def envelope_residual(self) -> float:
        """Largest ``max(|H(x,y)|, |H(y,x)|) − Φ(inv(y)x)``, relative to ``max |H|``."""
        magnitude = np.abs(self.values)
        magnitude = np.maximum(magnitude, magnitude.T)
        table = self.grid.displacement_table
        bound = np.append(self.envelope.values, 0.0)[table]
        scale = max(float(magnitude.max()), 1e-300)
        return float(np.max(magnitude - bound)) / scale

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "nodes": self.grid.size,
            "exact": self.exact,
            "envelope_norm": wnorm(self.envelope),
            "theory_excess": self.theory_excess,
            "calculus": self.calculus.to_dict() if self.calculus else None,
        }


def localized_kernel(values: np.ndarray, grid: QuadratureGrid, label: str = "H",
                     envelope: GridFunction | None = None, coords=None, space=None) -> LocalizedKernel:
    values = np.asarray(values)
    if values.shape != (grid.size, grid.size):
        raise DomainError(f"kernel {label} has shape {values.shape}, grid has {grid.size} nodes")
    fitted, _ = pair_envelope(values, grid, f"Φ[{label}]")
    excess = 0.0
    if envelope is not None:
        combined, excess = _combine(envelope.values, fitted.values)
        fitted = GridFunction(grid, combined, f"Φ[{label}]")
    return LocalizedKernel(grid, values, fitted, label, coords, space, excess)


def from_coords(space: KernelSpace, coords: np.ndarray, grid: QuadratureGrid, label: str = "H",
                envelope: GridFunction | None = None) -> LocalizedKernel:
    """Grid kernel ``E h E^H`` of coordinate matrix ``h``."""
    basis = space.values(grid.nodes)
    values = basis @ coords @ basis.conj().T
    return localized_kernel(values, grid, label, envelope, coords=np.asarray(coords), space=space)


def reproducing_kernel(space: KernelSpace, grid: QuadratureGrid, label: str = "K") -> LocalizedKernel:
    """Reproducing kernel of the space itself (identity coordinates)."""
    return from_coords(space, np.eye(space.rank), grid, label)


def _same_grid(a: LocalizedKernel, b: LocalizedKernel):
    if a.grid is not b.grid:
        raise DomainError(f"kernels {a.label} and {b.label} live on different grids")


def kernel_compose(h: LocalizedKernel, k: LocalizedKernel) -> LocalizedKernel:
    """``(H ⊙ L)(x, y) = ∫ H(x, z) L(z, y) dz`` with envelope ``Φ_H ∗ Φ_L + Φ_L ∗ Φ_H``."""
    _same_grid(h, k)
    grid = h.grid
    theory = convolve(h.envelope, k.envelope).values + convolve(k.envelope, h.envelope).values
    theory = GridFunction(grid, np.abs(theory), f"Φ[{h.label}⊙{k.label}]")
    label = f"({h.label}⊙{k.label})"
    if h.exact and k.exact and h.space is k.space:
        return from_coords(h.space, h.coords @ k.coords, grid, label, theory)
    values = h.values @ (grid.weights[:, None] * k.values)
    return localized_kernel(values, grid, label, theory)


def kernel_adjoint(h: LocalizedKernel) -> LocalizedKernel:
    """``H̃(x, y) = conj(H(y, x))``; the envelope is unchanged."""
    coords = None if h.coords is None else h.coords.conj().T
    return LocalizedKernel(h.grid, h.values.conj().T, h.envelope, f"{h.label}~", coords, h.space,
                           h.theory_excess)


def kernel_difference(h: LocalizedKernel, k: LocalizedKernel) -> LocalizedKernel:
    _same_grid(h, k)
    theory = GridFunction(h.grid, h.envelope.values + k.envelope.values)
    label = f"({h.label}-{k.label})"
    if h.exact and k.exact and h.space is k.space:
        return from_coords(h.space, h.coords - k.coords, h.grid, label, theory)
    return localized_kernel(h.values - k.values, h.grid, label, theory)


def operator_identity_residual(h: LocalizedKernel, k: LocalizedKernel, composed: LocalizedKernel,
                               count: int = 5, seed: int = 0) -> float:
    """Relative gap between ``T_H T_L f`` and ``T_{H⊙L} f`` on random grid vectors."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(count):
        f = rng.standard_normal(h.grid.size)
        left = h.apply(k.apply(f))
        right = composed.apply(f)
        worst = max(worst, float(np.linalg.norm(left - right) / max(np.linalg.norm(right), 1e-300)))
    return worst


def restricted_gap(h: LocalizedKernel, k: LocalizedKernel) -> float:
    """``‖P(T_H − T_K)P‖`` on the space of ``K``."""
    _same_grid(h, k)
    if h.exact and k.exact and h.space is k.space:
        diff = h.coords - k.coords
        return float(svdvals(diff)[0]) if diff.size else 0.0
    root = np.sqrt(h.grid.weights)
    proj = root[:, None] * k.values * root[None, :]
    diff = root[:, None] * (h.values - k.values) * root[None, :]
    return float(svdvals(proj @ diff @ proj)[0])


@dataclass(frozen=True, eq=False)
class CDMatrix:
    rows: PointFamily
    cols: PointFamily
    entries: np.ndarray = field(repr=False)
    envelope: GridFunction = field(repr=False)
    label: str = "M"
    weight: Weight | None = None
    theory_excess: float = 0.0
    calculus: CalculusReport | None = None

    @property
    def norm_bound(self) -> float:
        """``‖M‖_𝒞`` witness ``‖Θ‖_{W_w}``."""
        return wnorm(self.envelope, self.weight)

    def envelope_values(self) -> np.ndarray:
        """``min(Θ(inv(γ)λ), Θ(inv(λ)γ))`` for every entry."""
        forward, backward = _pair_displacements(self.rows, self.cols)
        bound = np.minimum(self.envelope.at(forward), self.envelope.at(backward))
        return bound.reshape(len(self.rows), len(self.cols))

    def envelope_violations(self) -> np.ndarray:
        """``|M| − bound`` relative to ``max |M|`` (positive entries violate)."""
        magnitude = np.abs(self.entries)
        scale = max(float(magnitude.max()) if magnitude.size else 0.0, 1e-300)
        return (magnitude - self.envelope_values()) / scale

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "shape": list(self.entries.shape),
            "norm_bound": self.norm_bound,
            "theory_excess": self.theory_excess,
            "calculus": self.calculus.to_dict() if self.calculus else None,
        }


def _pair_displacements(rows: PointFamily, cols: PointFamily) -> tuple[np.ndarray, np.ndarray]:
    g = rows.group
    m, n = len(rows), len(cols)
    forward = g.mul(np.repeat(g.inv(cols.points)[None, :, :], m, axis=0).reshape(-1, g.dim),
                    np.repeat(rows.points, n, axis=0))
    backward = g.mul(np.repeat(g.inv(rows.points), n, axis=0),
                     np.repeat(cols.points[None, :, :], m, axis=0).reshape(-1, g.dim))
    return forward, backward


def fit_matrix_envelope(rows: PointFamily, cols: PointFamily, entries: np.ndarray,
                        grid: QuadratureGrid, label: str = "Θ") -> GridFunction:
    """Bin ``|M_{λ,γ}|`` by the nodes of both ``inv(γ)λ`` and ``inv(λ)γ``."""
    entries = np.asarray(entries)
    if entries.shape != (len(rows), len(cols)):
        raise DomainError(f"entries have shape {entries.shape}, index sets are {len(rows)}x{len(cols)}")
    out = np.zeros(grid.size)
    magnitude = np.abs(entries).ravel()
    for disp in _pair_displacements(rows, cols):
        idx = grid.locate(disp)
        valid = idx >= 0
        np.maximum.at(out, idx[valid], magnitude[valid])
    return GridFunction(grid, out, label)


def cd_matrix(rows: PointFamily, cols: PointFamily, entries, grid: QuadratureGrid, label: str = "M",
              envelope: GridFunction | None = None, weight: Weight | None = None) -> CDMatrix:
    fitted = fit_matrix_envelope(rows, cols, entries, grid, f"Θ[{label}]")
    excess = 0.0
    if envelope is not None:
        combined, excess = _combine(envelope.values, fitted.values)
        fitted = GridFunction(grid, combined, f"Θ[{label}]")
    return CDMatrix(rows, cols, np.asarray(entries), fitted, label, weight, excess)


def bump(grid: QuadratureGrid, label: str = "φ_e") -> GridFunction:
    """1 at the node holding the identity, 0 elsewhere."""
    values = np.zeros(grid.size)
    idx = grid.locate(grid.group.identity[None, :])[0]
    if idx < 0:
        raise DomainError("grid window does not contain the identity")
    values[idx] = 1.0
    return GridFunction(grid, values, label)


def identity_matrix(family: PointFamily, grid: QuadratureGrid) -> CDMatrix:
    return CDMatrix(family, family, np.eye(len(family)), bump(grid), "I")


@dataclass(frozen=True)
class SchurReport:
    column_sums: float
    column_bound: float
    row_sums: float
    row_bound: float
    envelope_residual: float
    offending_entry: tuple[int, int] | None
    offending_row: int | None
    offending_col: int | None

    @property
    def passed(self) -> bool:
        return (self.envelope_residual <= SOUNDNESS_TOL and self.offending_row is None
                and self.offending_col is None)

    def to_dict(self) -> dict:
        return {
            "column_sums": self.column_sums,
            "column_bound": self.column_bound,
            "row_sums": self.row_sums,
            "row_bound": self.row_bound,
            "envelope_residual": self.envelope_residual,
            "offending_entry": list(self.offending_entry) if self.offending_entry else None,
            "offending_row": self.offending_row,
            "offending_col": self.offending_col,
            "passed": self.passed,
        }


def matrix_entry_bound_check(m: CDMatrix, q: NeighborhoodSpec | None = None) -> SchurReport:
    """Entry domination and the Schur sums ``Σ_λ |M_{λγ}| <= rel(Λ)/μ(Q)·‖M‖`` (and rows)."""
    grid = m.envelope.grid
    q = q or grid.group.q_neighborhood
    mu_q = neighborhood_measure(grid.group, q)
    norm = m.norm_bound
    magnitude = np.abs(m.entries)
    column_bound = relative_separation(m.rows, q, grid) / mu_q * norm
    row_bound = relative_separation(m.cols, q, grid) / mu_q * norm
    column_sums = magnitude.sum(axis=0)
    row_sums = magnitude.sum(axis=1)
    violations = m.envelope_violations()
    worst = float(violations.max()) if violations.size else 0.0
    entry = tuple(int(i) for i in np.unravel_index(np.argmax(violations), violations.shape)) \
        if worst > SOUNDNESS_TOL else None
    bad_col = int(np.argmax(column_sums)) if column_sums.size and column_sums.max() > column_bound * (1 + 1e-12) else None
    bad_row = int(np.argmax(row_sums)) if row_sums.size and row_sums.max() > row_bound * (1 + 1e-12) else None
    report = SchurReport(
        column_sums=float(column_sums.max()) if column_sums.size else 0.0,
        column_bound=column_bound,
        row_sums=float(row_sums.max()) if row_sums.size else 0.0,
        row_bound=row_bound,
        envelope_residual=worst,
        offending_entry=entry,
        offending_row=bad_row,
        offending_col=bad_col,
    )
    if not report.passed:
        logger.warning("Entry bound check failed for %s: entry=%s row=%s col=%s",
                       m.label, entry, bad_row, bad_col)
    return report


def product_envelope(phi: GridFunction, phi_prime: GridFunction, rel: int,
                     q: NeighborhoodSpec | None = None) -> GridFunction:
    """``rel/μ(Q)·[(M_QΦ′ ∗ M^R_QΦ) + (M_QΦ ∗ M^R_QΦ′)]``."""
    grid = phi.grid
    if phi_prime.grid is not grid:
        raise DomainError("envelopes live on different grids")
    q = q or grid.group.q_neighborhood
    factor = rel / neighborhood_measure(grid.group, q)
    first = convolve(maximal_left(phi_prime, q), maximal_right(phi, q))
    second = convolve(maximal_left(phi, q), maximal_right(phi_prime, q))
    return GridFunction(grid, factor * np.abs(first.values + second.values), "Θ[product]")


def _check_compatible(m: CDMatrix, n: CDMatrix):
    if len(m.cols) != len(n.rows) or not np.array_equal(m.cols.points, n.rows.points):
        raise DomainError(f"index mismatch: columns of {m.label} differ from rows of {n.label}")
    if m.envelope.grid is not n.envelope.grid:
        raise DomainError(f"envelopes of {m.label} and {n.label} live on different grids")


def cd_product(m: CDMatrix, n: CDMatrix, q: NeighborhoodSpec | None = None) -> CDMatrix:
    """Matrix product with the product envelope attached."""
    _check_compatible(m, n)
    grid = m.envelope.grid
    q = q or grid.group.q_neighborhood
    rel = relative_separation(m.cols, q, grid)
    theory = product_envelope(m.envelope, n.envelope, rel, q)
    return cd_matrix(m.rows, n.cols, m.entries @ n.entries, grid, f"{m.label}{n.label}", theory, m.weight)


def product_norm_bound(m: CDMatrix, n: CDMatrix, q: NeighborhoodSpec | None = None) -> float:
    """``2 rel(Γ)/μ(Q)·‖M‖‖N‖``."""
    grid = m.envelope.grid
    q = q or grid.group.q_neighborhood
    rel = relative_separation(m.cols, q, grid)
    return 2 * rel / neighborhood_measure(grid.group, q) * m.norm_bound * n.norm_bound


@dataclass(frozen=True)
class OperatorNormReport:
    p: float
    bound: float
    measured: float

    @property
    def passed(self) -> bool:
        return self.measured <= self.bound * (1 + 1e-12)

    def to_dict(self) -> dict:
        return {"p": self.p, "bound": self.bound, "measured": self.measured, "passed": self.passed}


def oplp_bound(m: CDMatrix, p: float = 2, q: NeighborhoodSpec | None = None) -> OperatorNormReport:
    """``‖M‖_{ℓᵖ→ℓᵖ} <= max(rel(Λ), rel(Γ))/μ(Q)·‖M‖`` with the measured norm beside it."""
    if p not in (1, 2, math.inf):
        raise DomainError(f"p must be 1, 2 or inf, got {p}")
    grid = m.envelope.grid
    q = q or grid.group.q_neighborhood
    rel = max(relative_separation(m.rows, q, grid), relative_separation(m.cols, q, grid))
    bound = rel / neighborhood_measure(grid.group, q) * m.norm_bound
    magnitude = np.abs(m.entries)
    if magnitude.size == 0:
        measured = 0.0
    elif p == 2:
        measured = float(svdvals(m.entries)[0])
    elif p == 1:
        measured = float(magnitude.sum(axis=0).max())
    else:
        measured = float(magnitude.sum(axis=1).max())
    return OperatorNormReport(p, bound, measured)


@dataclass(frozen=True)
class HoloSpec:
    """Power series ``φ(1 + u) = Σ aₙ uⁿ`` with ``|aₙ| <= C_φ (2/δ)ⁿ``."""

    name: str
    coefficient: Callable[[int], float] = field(compare=False)
    delta: float = 0.9
    c_phi: float = 1.0

    def __post_init__(self):
        if not 0 < self.delta <= 2:
            raise DomainError(f"delta must lie in (0, 2], got {self.delta}")

    @property
    def value_at_one(self) -> float:
        return self.coefficient(0)

    def coefficients(self, count: int) -> np.ndarray:
        out = np.array([self.coefficient(n) for n in range(count)], dtype=float)
        limits = self.c_phi * (2.0 / self.delta) ** np.arange(count)
        bad = np.flatnonzero(np.abs(out) > limits * (1 + 1e-12))
        if len(bad):
            n = int(bad[0])
            raise DomainError(f"coefficient a_{n} = {out[n]:.6g} of {self.name} exceeds "
                              f"C_phi (2/delta)^n = {limits[n]:.6g}")
        return out

    @classmethod
    def inverse(cls, delta: float = 0.9) -> "HoloSpec":
        return cls("inverse", lambda n: (-1.0) ** n, delta, 1.0)

    @classmethod
    def inverse_sqrt(cls, delta: float = 0.9) -> "HoloSpec":
        return cls("inverse_sqrt", _inverse_sqrt_coefficient, delta, 1.0)

    @classmethod
    def custom(cls, name: str, coefficients: Sequence[float], delta: float = 0.9,
               c_phi: float = 1.0) -> "HoloSpec":
        values = tuple(float(a) for a in coefficients)
        return cls(name, lambda n: values[n] if n < len(values) else 0.0, delta, c_phi)


def _inverse_sqrt_coefficient(n: int) -> float:
    # (1 + u)^(-1/2): a_{k+1} = -a_k (k + 1/2) / (k + 1)
    a = 1.0
    for k in range(n):
        a *= -(k + 0.5) / (k + 1)
    return a


def epsilon_threshold(theta: GridFunction, phi: GridFunction, delta: float,
                      w: Weight | None = None, iterations: int = 200) -> float:
    """Largest ``ε ∈ (0, δ/2]`` with ``‖min(εβ, Θ′ + Φ′)‖_{W_w} <= δ/4``.

    ``Θ′`` and ``Φ′`` are the inversion-symmetric minima and ``β = ‖Θ‖²_{L²}``.
    """
    if not delta > 0:
        raise DomainError(f"delta must be positive, got {delta}")
    beta = theta.norm_l2_sq()
    mass = symmetrize_min(theta).values + symmetrize_min(phi).values
    grid = theta.grid

    def size(eps: float) -> float:
        return wnorm(GridFunction(grid, np.minimum(eps * beta, mass)), w)

    target = delta / 4
    hi = delta / 2
    if size(hi) <= target:
        return hi
    lo = 1e-14
    if size(lo) > target:
        raise GateFailure("epsilon_threshold", size(lo), target,
                          "envelope mass too large; enlarge delta or the window")
    for _ in range(iterations):
        mid = math.sqrt(lo * hi) if hi / lo > 4 else 0.5 * (lo + hi)
        if size(mid) <= target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * hi:
            break
    logger.info("epsilon_threshold: eps=%.6g (delta=%.3g, beta=%.6g)", lo, delta, beta)
    return lo


def matrix_epsilon_threshold(phi: GridFunction, rel: int, delta: float, w: Weight | None = None,
                             q: NeighborhoodSpec | None = None) -> float:
    """``ε = 1/k`` for the smallest integer ``k >= 2/δ`` with ``‖min(1/k, φ_e + Φ)‖_{W_w} <= 1/L``.

    ``L = 4 C₁/δ`` and ``C₁ = max(1, 2 rel/μ(Q))``.
    """
    grid = phi.grid
    q = q or grid.group.q_neighborhood
    c1 = max(1.0, 2 * rel / neighborhood_measure(grid.group, q))
    limit = delta / (4 * c1)
    psi = bump(grid).values + phi.values

    def size(k: int) -> float:
        return wnorm(GridFunction(grid, np.minimum(1.0 / k, psi)), w)

    k = max(1, math.ceil(2 / delta))
    if size(k) > limit:
        lo = k
        hi = 2 * k
        while size(hi) > limit:
            lo, hi = hi, 2 * hi
            if hi > 1e14:
                raise GateFailure("matrix_epsilon_threshold", size(hi), limit,
                                  "no admissible k; envelope mass too large")
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if size(mid) <= limit:
                hi = mid
            else:
                lo = mid
        k = hi
    logger.info("matrix_epsilon_threshold: k=%d eps=%.6g (C1=%.4g, L=%.4g)", k, 1.0 / k, c1, 1 / limit)
    return 1.0 / k


def iterated_envelope_bounds(phi: GridFunction, n_max: int = 10, w: Weight | None = None) -> pd.DataFrame:
    """Measured ``‖Φ^{*n}‖_{W_w}`` against ``‖Φ‖_{W_w} ‖Φ‖_{W^R_w}^{n−1}``."""
    report = amalgam_norms(phi, w)
    first, right = report.norm_two_sided, report.norm_right
    rows = []
    power = phi
    for n in range(1, n_max + 1):
        if n > 1:
            power = convolve(power, phi)
        rows.append({"n": n, "measured": wnorm(power, w), "bound": first * right ** (n - 1)})
    return pd.DataFrame(rows)


def _tail(c_phi: float, n: int) -> float:
    """A priori bound ``C_φ Σ_{m>n} (2/δ)^m (δ/4)^m = C_φ 2^{−n}`` on the dropped terms."""
    return c_phi * 2.0 ** -n


def _diverging(norms: list[float]) -> bool:
    if len(norms) < DIVERGENCE_WINDOW + 1:
        return False
    recent = norms[-(DIVERGENCE_WINDOW + 1):]
    return recent[0] > 0 and all(b >= a for a, b in zip(recent, recent[1:]))


def _resolve_gate(gate: float | None, derive: Callable[[], float]) -> tuple[float, str]:
    if gate is not None:
        return float(gate), "explicit"
    return derive(), "derived"


def _check_gap(spec: HoloSpec, gap: float, gate: float, name: str,
               max_terms: int) -> tuple[float, np.ndarray]:
    if gap > gate:
        raise GateFailure(f"{name}.gap", gap, gate)
    ratio = 2 * gap / spec.delta
    if ratio >= 1:
        raise GateFailure(f"{name}.radius", ratio, 1.0, "gap exceeds the convergence radius delta/2")
    if ratio > 0.5:
        logger.warning("%s: gap %.3g above delta/4; the C_phi 2^-n tail bound does not cover it", name, gap)
    return ratio, spec.coefficients(max_terms + 1)


def holo_calculus_kernel(h: LocalizedKernel, k: LocalizedKernel, spec: HoloSpec, gate: float | None = None,
                         w: Weight | None = None, tol: float = SERIES_TOL,
                         max_terms: int = MAX_TERMS) -> LocalizedKernel:
    """``H_φ = a₀K + Σ aₙ (H − K)^{⊙n}`` with envelope ``|a₀|Θ′ + Σ|aₙ| Φ_ε^{*n}``."""
    _same_grid(h, k)
    name = "holo_calculus_kernel"
    grid = h.grid
    theta, phi = k.envelope, h.envelope
    gate, source = _resolve_gate(gate, lambda: epsilon_threshold(theta, phi, spec.delta, w))
    gap = restricted_gap(h, k)
    ratio, coeffs = _check_gap(spec, gap, gate, name, max_terms)

    exact = h.exact and k.exact and h.space is k.space
    if exact:
        base, diff = k.coords, h.coords - k.coords
        mult = lambda a, b: a @ b  # noqa: E731
        size = lambda a: float(svdvals(a)[0]) if a.size else 0.0  # noqa: E731
    else:
        base, diff = k.values, h.values - k.values
        mult = lambda a, b: a @ (grid.weights[:, None] * b)  # noqa: E731
        root = np.sqrt(grid.weights)
        size = lambda a: float(np.linalg.norm(root[:, None] * a * root[None, :]))  # noqa: E731

    result = coeffs[0] * base
    power = base
    norms: list[float] = []
    terms = 0
    for n in range(1, max_terms + 1):
        if _tail(spec.c_phi, n - 1) <= tol:
            break
        power = diff if n == 1 else mult(power, diff)
        term = coeffs[n] * power
        result = result + term
        norms.append(abs(coeffs[n]) * size(power))
        terms = n
        if _diverging(norms):
            raise GateFailure(f"{name}.divergence", norms[-1], norms[-DIVERGENCE_WINDOW - 1],
                              "term norms stopped decreasing")

    theta_sym = symmetrize_min(theta)
    phi_eps = GridFunction(grid, np.minimum(gate * theta.norm_l2_sq(),
                                            theta_sym.values + symmetrize_min(phi).values))
    theory = abs(coeffs[0]) * theta_sym.values
    conv = phi_eps
    for n in range(1, terms + 1):
        if n > 1:
            conv = convolve(conv, phi_eps)
        theory = theory + abs(coeffs[n]) * np.abs(conv.values)
    envelope = GridFunction(grid, theory, f"Φ[{spec.name}]")

    label = f"{spec.name}({h.label})"
    if exact:
        out = from_coords(h.space, result, grid, label, envelope)
        residual = _calculus_residual(spec.name, result, h.coords, k.coords, lambda a, b: a @ b)
    else:
        out = localized_kernel(result, grid, label, envelope)
        residual = _calculus_residual(spec.name, result, h.values, k.values, mult)
    tail = _tail(spec.c_phi, terms)
    report = CalculusReport(spec.name, gap, gate, source, ratio, terms, tail, residual, tuple(norms))
    logger.info("%s: %s gap=%.3g gate=%.3g (%s) terms=%d tail=%.3g residual=%s",
                name, spec.name, gap, gate, source, terms, tail, residual)
    return LocalizedKernel(out.grid, out.values, out.envelope, out.label, out.coords, out.space,
                           out.theory_excess, report)


def _calculus_residual(name: str, result, operator, identity, mult) -> float | None:
    if name == "inverse":
        check = mult(result, operator)
    elif name == "inverse_sqrt":
        check = mult(mult(result, result), operator)
    else:
        return None
    return float(np.max(np.abs(check - identity)))


def holo_calculus_matrix(m: CDMatrix, spec: HoloSpec, gate: float | None = None, w: Weight | None = None,
                         q: NeighborhoodSpec | None = None, tol: float = SERIES_TOL,
                         max_terms: int = MAX_TERMS) -> CDMatrix:
    """``φ(M) = Σ aₙ (M − I)ⁿ`` with per-term product envelopes."""
    if len(m.rows) != len(m.cols) or not np.array_equal(m.rows.points, m.cols.points):
        raise DomainError(f"{m.label} must be square over one index family")
    name = "holo_calculus_matrix"
    grid = m.envelope.grid
    q = q or grid.group.q_neighborhood
    rel = relative_separation(m.rows, q, grid)
    gate, source = _resolve_gate(gate, lambda: matrix_epsilon_threshold(m.envelope, rel, spec.delta, w, q))
    eye = np.eye(len(m.rows))
    diff = m.entries - eye
    gap = float(svdvals(diff)[0]) if diff.size else 0.0
    ratio, coeffs = _check_gap(spec, gap, gate, name, max_terms)

    result = coeffs[0] * eye
    power = eye
    norms: list[float] = []
    terms = 0
    for n in range(1, max_terms + 1):
        if _tail(spec.c_phi, n - 1) <= tol:
            break
        power = diff if n == 1 else power @ diff
        result = result + coeffs[n] * power
        norms.append(abs(coeffs[n]) * (float(svdvals(power)[0]) if power.size else 0.0))
        terms = n
        if _diverging(norms):
            raise GateFailure(f"{name}.divergence", norms[-1], norms[-DIVERGENCE_WINDOW - 1],
                              "term norms stopped decreasing")

    psi = GridFunction(grid, bump(grid).values + m.envelope.values)
    theory = abs(coeffs[0]) * bump(grid).values
    env = psi
    for n in range(1, terms + 1):
        if n > 1:
            env = product_envelope(env, psi, rel, q)
        theory = theory + abs(coeffs[n]) * env.values
    label = f"{spec.name}({m.label})"
    out = cd_matrix(m.rows, m.cols, result, grid, label, GridFunction(grid, theory), m.weight)
    residual = _calculus_residual(spec.name, result, m.entries, eye, lambda a, b: a @ b)
    tail = _tail(spec.c_phi, terms)
    report = CalculusReport(spec.name, gap, gate, source, ratio, terms, tail, residual, tuple(norms))
    logger.info("%s: %s gap=%.3g gate=%.3g (%s) terms=%d tail=%.3g residual=%s",
                name, spec.name, gap, gate, source, terms, tail, residual)
    return CDMatrix(out.rows, out.cols, out.entries, out.envelope, out.label, out.weight,
                    out.theory_excess, report)
