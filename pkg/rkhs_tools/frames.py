"""Frames, duals and Riesz sequences of reproducing kernels.

A :class:`VectorSystem` stores each member as a finite combination of kernel
slices, ``g_λ = Σ_μ E[μ, λ] k(·, μ)``, so Gramians are exact. Frame-type
constructions work inside a :class:`~rkhs_tools.rkhs.KernelSpace`: members are
kept by their coordinates in its orthonormal basis, and frame operators,
duals and expansions are exact on that space.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import pandas as pd
from scipy.linalg import eigh, eigvalsh

from rkhs_tools.cdalgebra import (
    CalculusReport,
    CDMatrix,
    HoloSpec,
    LocalizedKernel,
    cd_matrix,
    convolve,
    from_coords,
    holo_calculus_kernel,
    holo_calculus_matrix,
    localized_kernel,
    reproducing_kernel,
)
from rkhs_tools.envelope import (
    AmalgamReport,
    GridFunction,
    SynthesisBound,
    amalgam_norms,
    maximal_left,
    maximal_right,
    symmetrize_min,
    synthesis_norm_bound,
)
from rkhs_tools.errors import CoverError, DomainError, GateFailure, KernelError
from rkhs_tools.group import NeighborhoodSpec, QuadratureGrid, Weight, neighborhood_measure
from rkhs_tools.pointset import DisjointCover, PointFamily, is_separated, relative_separation, uniformity
from rkhs_tools.rkhs import Kernel, KernelCertificate, KernelSpace

logger = logging.getLogger(__name__)

KERNEL_SAMPLES = "kernel_samples"
WEIGHTED_KERNELS = "weighted_kernels"
DUAL = "dual"
TIGHT = "tight"
BIORTHOGONAL = "biorthogonal"
ORTHONORMAL = "orthonormal"

DUALITY_TOL = 1e-6
PARSEVAL_TOL = 1e-5
BIORTHOGONALITY_TOL = 1e-8
MOLECULE_RADIUS = 4.0
MOLECULE_THRESHOLD = 1e-3
CHECK_VECTORS = 20


@dataclass(frozen=True, eq=False)
class VectorSystem:
    kernel: Kernel
    centers: np.ndarray = field(repr=False)
    expansion: np.ndarray = field(repr=False)
    index: PointFamily
    kind: str
    label: str = "g"

    def __post_init__(self):
        if self.expansion.shape != (len(self.centers), len(self.index)):
            raise DomainError(f"expansion of {self.label} has shape {self.expansion.shape}; "
                              f"expected {(len(self.centers), len(self.index))}")

    def __len__(self) -> int:
        return len(self.index)

    def values(self, points) -> np.ndarray:
        """``[g_λ(x)]`` with one column per member."""
        if len(self) == 0:
            return np.zeros((len(np.atleast_2d(points)), 0))
        return self.kernel.matrix(points, self.centers) @ self.expansion

    def members(self, grid: QuadratureGrid) -> list[GridFunction]:
        values = self.values(grid.nodes)
        return [GridFunction(grid, values[:, k], f"{self.label}[{k}]") for k in range(len(self))]

    def coords(self, space: KernelSpace) -> np.ndarray:
        """Coordinates of the members projected onto ``space``."""
        if len(self) == 0:
            return np.zeros((space.rank, 0))
        return space.coords_of(self.centers, self.expansion)

    def to_dict(self) -> dict:
        return {"label": self.label, "kind": self.kind, "members": len(self),
                "centers": len(self.centers), "kernel": self.kernel.label}


def kernel_samples(kernel: Kernel, family: PointFamily, scale=None, kind: str = KERNEL_SAMPLES,
                   label: str = "k") -> VectorSystem:
    """``scale_λ · k(·, λ)`` for every member of ``family``."""
    scale = np.ones(len(family)) if scale is None else np.asarray(scale)
    return VectorSystem(kernel, family.points, np.diag(scale), family, kind, label)


def space_system(space: KernelSpace, coords: np.ndarray, index: PointFamily, kind: str,
                 label: str) -> VectorSystem:
    """System given by coordinates in the orthonormal basis of ``space``."""
    return VectorSystem(space.kernel, space.probes.points, space.basis @ coords, index, kind, label)


def gramian_entries(system: VectorSystem) -> np.ndarray:
    """``G[λ, λ'] = ⟨g_λ', g_λ⟩``."""
    kernel_gram = system.kernel.matrix(system.centers, system.centers)
    return system.expansion.conj().T @ kernel_gram @ system.expansion


def gramian(system: VectorSystem, grid: QuadratureGrid, certificate: "MoleculeCertificate | None" = None) -> CDMatrix:
    """Gramian as a CD matrix; with a molecule certificate the envelope ``Φ ∗ Φ`` is attached."""
    entries = gramian_entries(system)
    theory = None
    if certificate is not None:
        theory = convolve(certificate.envelope, certificate.envelope)
    return cd_matrix(system.index, system.index, entries, grid, f"G[{system.label}]", theory)


@dataclass(frozen=True)
class FrameReport:
    lower: float
    upper: float
    method: str
    dimension: int
    eigenvalues: tuple[float, ...] = field(repr=False)
    predicted_epsilon: float | None = None
    cover_hash: str | None = None

    @property
    def is_frame(self) -> bool:
        return self.lower > 1e-12

    @property
    def condition(self) -> float:
        return self.upper / self.lower if self.is_frame else math.inf

    @property
    def deviation(self) -> float:
        return max(self.upper - 1, 1 - self.lower)

    def eigenvalue_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"index": np.arange(len(self.eigenvalues)), "eigenvalue": self.eigenvalues})

    def to_dict(self) -> dict:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "condition": self.condition,
            "deviation": self.deviation,
            "method": self.method,
            "dimension": self.dimension,
            "is_frame": self.is_frame,
            "predicted_epsilon": self.predicted_epsilon,
            "cover_hash": self.cover_hash,
        }


def _report(eigenvalues: np.ndarray, method: str, dimension: int, **extra) -> FrameReport:
    eigenvalues = np.clip(np.asarray(eigenvalues, dtype=float), 0.0, None)
    if len(eigenvalues) == 0:
        return FrameReport(0.0, 0.0, method, dimension, (), **extra)
    return FrameReport(float(eigenvalues.min()), float(eigenvalues.max()), method, dimension,
                       tuple(float(e) for e in eigenvalues), **extra)


def frame_bounds(system: VectorSystem, space: KernelSpace, **extra) -> FrameReport:
    """Extreme eigenvalues of the frame operator on ``space``."""
    coords = system.coords(space)
    operator = coords @ coords.conj().T
    report = _report(eigvalsh((operator + operator.conj().T) / 2),
                     f"frame operator on span of {space.rank} probe slices", space.rank, **extra)
    if not report.is_frame:
        logger.warning("%s is not a frame on the probe span (A=%.3g)", system.label, report.lower)
    return report


def riesz_bounds(system: VectorSystem) -> FrameReport:
    """Extreme eigenvalues of the Gramian."""
    entries = gramian_entries(system)
    if entries.size == 0:
        return _report(np.array([]), "gramian", 0)
    return _report(eigvalsh((entries + entries.conj().T) / 2), "gramian", len(system))


@dataclass(frozen=True)
class MoleculeCertificate:
    envelope: GridFunction = field(repr=False)
    dominance_residual: float
    amalgam: AmalgamReport
    radius: float
    threshold: float
    decay: float
    outside: int

    @property
    def passed(self) -> bool:
        return self.dominance_residual <= 1e-12 and self.decay <= self.threshold

    def decay_profile(self, bins: int = 40) -> pd.DataFrame:
        """Max of the envelope per distance bin, relative to its peak."""
        grid = self.envelope.grid
        dist = grid.group.dist(grid.nodes)
        peak = max(self.envelope.max_abs(), 1e-300)
        edges = np.linspace(0.0, float(dist.max()), bins + 1)
        which = np.clip(np.searchsorted(edges, dist, side="right") - 1, 0, bins - 1)
        values = np.zeros(bins)
        np.maximum.at(values, which, self.envelope.values / peak)
        return pd.DataFrame({"distance": edges[:-1], "relative_envelope": values})

    def to_dict(self) -> dict:
        return {
            "dominance_residual": self.dominance_residual,
            "amalgam": self.amalgam.to_dict(),
            "radius": self.radius,
            "threshold": self.threshold,
            "decay": self.decay,
            "outside_pairs": self.outside,
            "passed": self.passed,
        }


def molecule_certify(system: VectorSystem, grid: QuadratureGrid, w: Weight | None = None,
                     radius: float = MOLECULE_RADIUS, threshold: float = MOLECULE_THRESHOLD,
                     region: np.ndarray | None = None) -> MoleculeCertificate:
    """Fit ``Φ`` with ``|g_λ(x)| <= min(Φ(inv(λ)x), Φ(inv(x)λ))`` and measure its decay.

    ``region`` restricts the sample points ``x`` to a mask of grid nodes.
    The certificate passes when ``max Φ`` at group distance ``>= radius`` is
    at most ``threshold`` times the peak of ``Φ``.
    """
    g = grid.group
    nodes = grid.nodes if region is None else grid.nodes[region]
    values = np.abs(system.values(nodes))
    lam = system.index.points
    n, m = len(nodes), len(lam)
    flat = values.ravel()
    forward = grid.locate(g.mul(np.tile(g.inv(lam), (n, 1)), np.repeat(nodes, m, axis=0)))
    backward = grid.locate(g.mul(np.repeat(g.inv(nodes), m, axis=0), np.tile(lam, (n, 1))))
    envelope = np.zeros(grid.size)
    for idx in (forward, backward):
        valid = idx >= 0
        np.maximum.at(envelope, idx[valid], flat[valid])
    inside = (forward >= 0) & (backward >= 0)
    outside = int(np.count_nonzero(~inside & (flat > 0)))
    padded = np.append(envelope, 0.0)
    bound = np.minimum(padded[forward], padded[backward])
    scale = max(float(flat.max()) if flat.size else 0.0, 1e-300)
    residual = float(np.max((flat - bound)[inside])) / scale if inside.any() else 0.0

    phi = GridFunction(grid, envelope, f"Φ[{system.label}]")
    peak = max(float(envelope.max()), 1e-300)
    far = g.dist(grid.nodes) >= radius
    decay = float(envelope[far].max()) / peak if far.any() else 0.0
    cert = MoleculeCertificate(phi, residual, amalgam_norms(phi, w), radius, threshold, decay, outside)
    log = logger.info if cert.passed else logger.warning
    log("Molecules %s: relative decay %.3g at radius %.3g (threshold %.3g)",
        system.label, decay, radius, threshold)
    return cert


def bessel_bound(certificate: MoleculeCertificate, family: PointFamily,
                 q: NeighborhoodSpec | None = None) -> SynthesisBound:
    """Upper frame bound implied by the molecule envelope (squared synthesis norm bound)."""
    return synthesis_norm_bound(certificate.envelope, family, q)


def _require_certificate(certificate: KernelCertificate | None, kernel: Kernel):
    if certificate is None or not certificate.passed:
        raise KernelError(f"{kernel.label} has no passing kernel certificate")


def _cover_weights(cover: DisjointCover, family: PointFamily) -> np.ndarray:
    if cover.family is not family and not np.array_equal(cover.family.points, family.points):
        raise CoverError("cover belongs to a different point family")
    if np.any(cover.measures <= 0):
        raise CoverError("cover has empty cells; weights must be positive")
    return np.asarray(cover.measures, dtype=float)


def _offset_index(offsets, size: float) -> int | None:
    """Position of the smallest recorded offset that is at least ``size``; ``None`` past the largest."""
    for k in range(len(offsets) - 1, -1, -1):
        if offsets[k] >= size:
            return k
    return None


def predicted_epsilon(certificate: KernelCertificate, u: NeighborhoodSpec) -> float | None:
    """``η̂(U)·‖Θ′‖_{W^L}`` from the WUC profile and the fitted envelope.

    ``None`` when ``U`` reaches past every offset of the profile.
    """
    size = max(max(abs(v) for v in u.lower), max(abs(v) for v in u.upper))
    wuc = certificate.wuc
    index = _offset_index(wuc.offsets, size)
    if index is None:
        logger.warning("%s extends to %.3g, past the largest WUC offset %.3g; no epsilon prediction",
                       u.label, size, wuc.offsets[0])
        return None
    eta = wuc.relative[index]
    return eta * maximal_left(symmetrize_min(certificate.theta)).norm_l1()


def almost_tight_frame(kernel: Kernel, family: PointFamily, cover: DisjointCover, space: KernelSpace,
                       certificate: KernelCertificate | None) -> tuple[VectorSystem, FrameReport]:
    """Weighted kernels ``μ(U_λ)^{1/2} k(·, λ)`` and their measured frame bounds."""
    _require_certificate(certificate, kernel)
    taus = _cover_weights(cover, family)
    system = kernel_samples(kernel, family, np.sqrt(taus), WEIGHTED_KERNELS, "sqrt(tau) k")
    prediction = predicted_epsilon(certificate, cover.neighborhood)
    report = frame_bounds(system, space, predicted_epsilon=prediction, cover_hash=cover.cover_hash())
    logger.info("Almost tight frame: A=%.6g B=%.6g (predicted eps %s)", report.lower, report.upper, prediction)
    return system, report


def weighted_kernel_envelope(theta: GridFunction, family: PointFamily, taus: np.ndarray,
                             q: NeighborhoodSpec | None = None) -> GridFunction:
    """``C·(M_QΘ ∗ M^R_QΘ)`` with ``C = max τ · rel(Λ)/μ(Q)``."""
    grid = theta.grid
    q = q or grid.group.q_neighborhood
    c = float(np.max(taus)) * relative_separation(family, q, grid) / neighborhood_measure(grid.group, q)
    profile = convolve(maximal_left(theta, q), maximal_right(theta, q))
    return GridFunction(grid, c * np.abs(profile.values), "Θ[weighted]")


def frame_operator_kernel(system: VectorSystem, grid: QuadratureGrid, envelope: GridFunction,
                          dual: VectorSystem | None = None, dual_envelope: GridFunction | None = None,
                          q: NeighborhoodSpec | None = None) -> LocalizedKernel:
    """``H(x, y) = Σ_λ g_λ(x) conj(h_λ(y))`` with envelope ``rel/μ(Q)·(M_QΦ ∗ M^R_QΦ)``.

    ``envelope`` (and ``dual_envelope``) must dominate the members as
    molecules; with no dual the system is paired with itself.
    """
    q = q or grid.group.q_neighborhood
    dual = dual or system
    phi = envelope if dual_envelope is None else GridFunction(
        grid, np.maximum(envelope.values, dual_envelope.values))
    c = relative_separation(system.index, q, grid) / neighborhood_measure(grid.group, q)
    theory = GridFunction(grid, c * np.abs(convolve(maximal_left(phi, q), maximal_right(phi, q)).values))
    values = system.values(grid.nodes) @ dual.values(grid.nodes).conj().T
    return localized_kernel(values, grid, f"S[{system.label},{dual.label}]", theory)


class Construction(NamedTuple):
    system: VectorSystem
    certificate: MoleculeCertificate | None
    calculus: CalculusReport | None
    residual: float


class Expansion(NamedTuple):
    analysis_first: float
    synthesis_first: float

    @property
    def worst(self) -> float:
        return max(self.analysis_first, self.synthesis_first)


def reconstruct(system: VectorSystem, dual: VectorSystem, space: KernelSpace,
                coords: np.ndarray) -> Expansion:
    """Relative residuals of ``Σ⟨f, g_λ⟩h_λ`` and ``Σ⟨f, h_λ⟩g_λ`` for the columns of ``coords``."""
    g = system.coords(space)
    h = dual.coords(space)
    norms = np.maximum(np.linalg.norm(coords, axis=0), 1e-300)
    first = h @ (g.conj().T @ coords)
    second = g @ (h.conj().T @ coords)
    return Expansion(float(np.max(np.linalg.norm(first - coords, axis=0) / norms)),
                     float(np.max(np.linalg.norm(second - coords, axis=0) / norms)))


def coefficient_norms(dual: VectorSystem, space: KernelSpace, coords: np.ndarray) -> np.ndarray:
    """ℓ² norms of ``(⟨f, h_λ⟩)_λ`` per column of ``coords``."""
    return np.linalg.norm(dual.coords(space).conj().T @ coords, axis=0)


def probe_region(space: KernelSpace, grid: QuadratureGrid) -> np.ndarray:
    """Grid nodes inside the coordinate hull of the probes."""
    coords = grid.coordinates(grid.nodes)
    probes = grid.coordinates(space.probes.points)
    inside = np.all((coords >= probes.min(axis=0) - 1e-12) & (coords <= probes.max(axis=0) + 1e-12), axis=1)
    if grid.group.id == "affine":
        inside &= np.isin(np.sign(grid.nodes[:, 1]), np.unique(np.sign(space.probes.points[:, 1])))
    return inside


def _frame_operator(space: KernelSpace, grid: QuadratureGrid, coords: np.ndarray, taus: np.ndarray,
                    envelope: GridFunction) -> LocalizedKernel:
    operator = (coords * taus[None, :]) @ coords.conj().T
    return from_coords(space, (operator + operator.conj().T) / 2, grid, "S", envelope)


def _ambient(space: KernelSpace, grid: QuadratureGrid, certificate: KernelCertificate | None) -> LocalizedKernel:
    k = reproducing_kernel(space, grid)
    if certificate is not None and certificate.theta.grid is grid:
        k = from_coords(space, k.coords, grid, "K", certificate.theta)
    return k


def dual_frame_molecules(kernel: Kernel, family: PointFamily, cover: DisjointCover, space: KernelSpace,
                         grid: QuadratureGrid, certificate: KernelCertificate | None = None,
                         delta: float = 0.9, gate: float | None = None, w: Weight | None = None,
                         tol: float = DUALITY_TOL, radius: float = MOLECULE_RADIUS,
                         threshold: float = MOLECULE_THRESHOLD, seed: int = 0) -> Construction:
    """Dual frame ``h_λ = S⁻¹(τ_λ k_λ)`` with ``S⁻¹`` from the holomorphic calculus."""
    taus = _cover_weights(cover, family)
    coords = space.kernel_coords(family.points)
    k = _ambient(space, grid, certificate)
    envelope = weighted_kernel_envelope(k.envelope, family, taus)
    s = _frame_operator(space, grid, coords, taus, envelope)
    inverse = holo_calculus_kernel(s, k, HoloSpec.inverse(delta), gate, w)
    dual_coords = inverse.coords @ (coords * taus[None, :])
    duals = space_system(space, dual_coords, family, DUAL, "h")
    frame = kernel_samples(kernel, family, label="k")
    checks = space.random_coords(CHECK_VECTORS, seed)
    expansion = reconstruct(frame, duals, space, checks)
    if expansion.worst > tol:
        raise GateFailure("dual_frame_molecules.duality", expansion.worst, tol)
    cert = molecule_certify(duals, grid, w, radius, threshold, probe_region(space, grid))
    logger.info("Dual frame: duality residual %.3g, molecules %s", expansion.worst,
                "pass" if cert.passed else "fail")
    return Construction(duals, cert, inverse.calculus, expansion.worst)


def tight_frame_molecules(kernel: Kernel, family: PointFamily, cover: DisjointCover, space: KernelSpace,
                          grid: QuadratureGrid, certificate: KernelCertificate | None = None,
                          delta: float = 0.9, gate: float | None = None, w: Weight | None = None,
                          tol: float = PARSEVAL_TOL, radius: float = MOLECULE_RADIUS,
                          threshold: float = MOLECULE_THRESHOLD, seed: int = 0) -> Construction:
    """Parseval frame ``g_λ = S^{-1/2}(τ_λ^{1/2} k_λ)``."""
    taus = _cover_weights(cover, family)
    coords = space.kernel_coords(family.points)
    k = _ambient(space, grid, certificate)
    envelope = weighted_kernel_envelope(k.envelope, family, taus)
    s = _frame_operator(space, grid, coords, taus, envelope)
    root = holo_calculus_kernel(s, k, HoloSpec.inverse_sqrt(delta), gate, w)
    tight = space_system(space, root.coords @ (coords * np.sqrt(taus)[None, :]), family, TIGHT, "g")
    checks = space.random_coords(CHECK_VECTORS, seed)
    tight_coords = tight.coords(space)
    energy = np.linalg.norm(tight_coords.conj().T @ checks, axis=0) ** 2
    residual = float(np.max(np.abs(energy - np.linalg.norm(checks, axis=0) ** 2)))
    if residual > tol:
        raise GateFailure("tight_frame_molecules.parseval", residual, tol)
    cert = molecule_certify(tight, grid, w, radius, threshold, probe_region(space, grid))
    logger.info("Tight frame: Parseval residual %.3g, molecules %s", residual, "pass" if cert.passed else "fail")
    return Construction(tight, cert, root.calculus, residual)


def canonical_dual(kernel: Kernel, family: PointFamily, u: NeighborhoodSpec, uniformity_gate: float,
                   space: KernelSpace, grid: QuadratureGrid, certificate: KernelCertificate | None = None,
                   point_grid: QuadratureGrid | None = None, covers=(), delta: float = 0.9,
                   gate: float | None = None, w: Weight | None = None, tol: float = DUALITY_TOL,
                   radius: float = MOLECULE_RADIUS, threshold: float = MOLECULE_THRESHOLD,
                   seed: int = 0) -> Construction:
    """Canonical dual ``S⁻¹ k_λ`` of the unweighted kernels.

    Requires ``𝒰(Λ; U) <= 1 + uniformity_gate`` (measured on ``point_grid``,
    default ``grid``). With ``τ = μ(U_λ₀)`` for the member of median cell
    measure, ``S⁻¹ = τ (τS)⁻¹`` and ``τS`` is inverted by the calculus.
    """
    measured = uniformity(family, u, point_grid or grid, extra_covers=covers)
    if measured.bound > 1 + uniformity_gate:
        raise GateFailure("canonical_dual.uniformity", measured.bound, 1 + uniformity_gate)
    cells = measured.cover.measures
    tau = float(cells[np.argsort(cells)[len(cells) // 2]])
    taus = np.full(len(family), tau)
    coords = space.kernel_coords(family.points)
    k = _ambient(space, grid, certificate)
    envelope = weighted_kernel_envelope(k.envelope, family, taus)
    s = _frame_operator(space, grid, coords, taus, envelope)
    inverse = holo_calculus_kernel(s, k, HoloSpec.inverse(delta), gate, w)
    duals = space_system(space, tau * (inverse.coords @ coords), family, DUAL, "canonical h")
    expansion = reconstruct(kernel_samples(kernel, family), duals, space, space.random_coords(CHECK_VECTORS, seed))
    if expansion.worst > tol:
        raise GateFailure("canonical_dual.duality", expansion.worst, tol)
    cert = molecule_certify(duals, grid, w, radius, threshold, probe_region(space, grid))
    logger.info("Canonical dual: uniformity %.6g, tau %.6g, duality residual %.3g",
                measured.bound, tau, expansion.worst)
    return Construction(duals, cert, inverse.calculus, expansion.worst)


def almost_orthogonal_riesz(kernel: Kernel, family: PointFamily, sep: NeighborhoodSpec,
                            grid: QuadratureGrid | None = None) -> tuple[VectorSystem, FrameReport]:
    """Normalized kernels ``k_λ/‖k_λ‖`` on a separated family, with Riesz bounds."""
    if not is_separated(family, sep, grid):
        raise CoverError(f"{family.label} is not {sep.label}-separated")
    norms = np.sqrt(np.real(kernel.diagonal(family.points))) if len(family) else np.ones(0)
    system = kernel_samples(kernel, family, 1.0 / norms, KERNEL_SAMPLES, "k~")
    report = riesz_bounds(system)
    logger.info("Riesz bounds of %s: A=%.6g B=%.6g", system.label, report.lower, report.upper)
    return system, report


def normalized_gramian(kernel: Kernel, family: PointFamily, grid: QuadratureGrid) -> CDMatrix:
    """``G̃[λ, λ'] = ⟨k̃_λ', k̃_λ⟩ = k(λ, λ')/(‖k_λ‖‖k_λ'‖)``."""
    values = kernel.matrix(family.points, family.points)
    norms = np.sqrt(np.real(np.diag(values)))
    return cd_matrix(family, family, values / np.outer(norms, norms), grid, "G~")


def _kernel_norms(kernel: Kernel, family: PointFamily) -> np.ndarray:
    return np.sqrt(np.real(kernel.diagonal(family.points)))


def biorthogonal_system(kernel: Kernel, family: PointFamily, grid: QuadratureGrid, delta: float = 0.9,
                        gate: float | None = None, w: Weight | None = None,
                        tol: float = BIORTHOGONALITY_TOL) -> tuple[VectorSystem, CDMatrix]:
    """Biorthogonal system ``h_λ'`` with ``⟨k_λ, h_λ'⟩ = δ_{λλ'}`` in the span of the kernels."""
    gram = normalized_gramian(kernel, family, grid)
    inverse = holo_calculus_matrix(gram, HoloSpec.inverse(delta), gate, w)
    norms = _kernel_norms(kernel, family)
    expansion = inverse.entries / np.outer(norms, norms)
    system = VectorSystem(kernel, family.points, expansion, family, BIORTHOGONAL, "h")
    pairing = biorthogonality_matrix(system)
    residual = float(np.max(np.abs(pairing - np.eye(len(family))))) if len(family) else 0.0
    if residual > tol:
        raise GateFailure("biorthogonal_system.biorthogonality", residual, tol)
    logger.info("Biorthogonal system on %d points: residual %.3g", len(family), residual)
    return system, inverse


def biorthogonality_matrix(system: VectorSystem) -> np.ndarray:
    """``B[λ, λ'] = ⟨k_λ, h_λ'⟩ = conj(h_λ'(λ))``."""
    return system.values(system.index.points).conj()


def orthonormalize(kernel: Kernel, family: PointFamily, grid: QuadratureGrid, delta: float = 0.9,
                   gate: float | None = None, w: Weight | None = None,
                   tol: float = BIORTHOGONALITY_TOL) -> tuple[VectorSystem, CDMatrix]:
    """Orthonormal system ``Σ_μ k̃_μ G̃^{-1/2}[μ, λ]`` in the span of the kernels."""
    gram = normalized_gramian(kernel, family, grid)
    root = holo_calculus_matrix(gram, HoloSpec.inverse_sqrt(delta), gate, w)
    expansion = root.entries / _kernel_norms(kernel, family)[:, None]
    system = VectorSystem(kernel, family.points, expansion, family, ORTHONORMAL, "e")
    entries = gramian_entries(system)
    residual = float(np.max(np.abs(entries - np.eye(len(family))))) if len(family) else 0.0
    if residual > tol:
        raise GateFailure("orthonormalize.gramian", residual, tol)
    return system, root


def kernel_sample_distance(system: VectorSystem) -> np.ndarray:
    """``min_c ‖g_λ − c·k̃_λ‖`` over unimodular ``c`` for unit members."""
    kernel, lam = system.kernel, system.index.points
    norms = _kernel_norms(kernel, system.index)
    # ⟨g_λ, k̃_λ⟩ = g_λ(λ)/‖k_λ‖
    overlap = np.abs(np.diag(system.values(lam))) / norms
    return np.sqrt(np.clip(2 - 2 * overlap, 0.0, None))


def interpolate(system: VectorSystem, a, grid: QuadratureGrid) -> GridFunction:
    """``f_a = Σ a_λ h_λ`` on grid nodes."""
    a = np.asarray(a)
    if a.shape != (len(system),):
        raise DomainError(f"coefficient sequence has shape {a.shape}; system has {len(system)} members")
    if system.kind != BIORTHOGONAL:
        logger.warning("interpolating with a %s system; node values are not guaranteed", system.kind)
    return GridFunction(grid, system.values(grid.nodes) @ a, "f_a")


def interpolation_nodes(system: VectorSystem, a) -> np.ndarray:
    """Values ``f_a(λ)`` of the interpolant at the index points."""
    return system.values(system.index.points) @ np.asarray(a)


def interpolation_norm(system: VectorSystem, kernel_report: FrameReport, a) -> tuple[float, float]:
    """``‖f_a‖`` and its bound ``‖a‖ / sqrt(A)`` from the lower Riesz bound of the normalized kernels."""
    a = np.asarray(a)
    gram = gramian_entries(system)
    norm = float(np.sqrt(max(np.real(a.conj() @ gram @ a), 0.0)))
    scale = 1.0 / float(np.min(_kernel_norms(system.kernel, system.index))) if len(system) else 0.0
    bound = scale * float(np.linalg.norm(a)) / math.sqrt(kernel_report.lower) if kernel_report.is_frame else math.inf
    return norm, bound


def frame_spectrum(system: VectorSystem, space: KernelSpace) -> np.ndarray:
    """Eigenvalues of the frame operator on ``space`` (ascending)."""
    coords = system.coords(space)
    return eigh((coords @ coords.conj().T + (coords @ coords.conj().T).conj().T) / 2, eigvals_only=True)
