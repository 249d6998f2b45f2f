"""Sampling families: separation, density, disjoint covers and uniformity."""
import hashlib
import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from rkhs_tools.errors import CoverError, DomainError
from rkhs_tools.group import (
    AFFINE,
    GroupSpec,
    NeighborhoodSpec,
    QuadratureGrid,
    affine_box,
    box,
    neighborhood_samples,
)

logger = logging.getLogger(__name__)

_CHUNK = 4_000_000


@dataclass(frozen=True, eq=False)
class PointFamily:
    group: GroupSpec
    points: np.ndarray = field(repr=False)
    label: str = "Lambda"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.size == 0:
            pts = np.zeros((0, self.group.dim))
        else:
            pts = self.group.validate(pts)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    def has_duplicates(self) -> bool:
        if len(self) < 2:
            return False
        return len(np.unique(self.points, axis=0)) < len(self)

    def translate(self, x) -> "PointFamily":
        """Left translate every member by ``x``."""
        if len(self) == 0:
            return self
        x = self.group.validate(x)
        moved = self.group.mul(np.repeat(x, len(self), axis=0), self.points)
        return PointFamily(self.group, moved, self.label)

    def extended(self, points) -> "PointFamily":
        return PointFamily(self.group, np.vstack([self.points, self.group.validate(points)]), self.label)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.points, columns=list(self.group.axis_names))

    @classmethod
    def from_frame(cls, group: GroupSpec, frame: pd.DataFrame, label: str = "Lambda") -> "PointFamily":
        missing = [c for c in group.axis_names if c not in frame.columns]
        if missing:
            raise DomainError(f"Point file is missing columns {missing}")
        return cls(group, frame[list(group.axis_names)].to_numpy(dtype=float), label)

    def digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.points).tobytes()).hexdigest()


def membership(group: GroupSpec, centers: np.ndarray, nbhd: NeighborhoodSpec,
               targets: np.ndarray) -> np.ndarray:
    """Boolean ``(len(centers), len(targets))``: ``inv(c)·t ∈ nbhd``."""
    centers = np.atleast_2d(centers)
    targets = np.atleast_2d(targets)
    out = np.zeros((len(centers), len(targets)), dtype=bool)
    if out.size == 0:
        return out
    inv_centers = group.inv(centers)
    rows = max(1, _CHUNK // max(len(targets), 1))
    for start in range(0, len(centers), rows):
        block = inv_centers[start:start + rows]
        left = np.repeat(block, len(targets), axis=0)
        right = np.tile(targets, (len(block), 1))
        out[start:start + len(block)] = group.contains(nbhd, group.mul(left, right)).reshape(len(block), -1)
    return out


def _probe_points(family: PointFamily, q: NeighborhoodSpec, probes) -> np.ndarray:
    g = family.group
    parts = [family.points]
    if isinstance(probes, QuadratureGrid):
        parts.append(probes.nodes)
    elif probes is not None:
        parts.append(g.validate(probes))
    offsets = neighborhood_samples(g, q, per_axis=5)
    if len(family):
        # probes x = λ·inv(o) put λ at every sampled position o of xQ
        shifted = g.mul(np.repeat(family.points, len(offsets), axis=0),
                        np.tile(g.inv(offsets), (len(family), 1)))
        parts.append(shifted)
    return np.vstack(parts)


def relative_separation(family: PointFamily, q: NeighborhoodSpec, probes=None) -> int:
    """``rel(Λ) = max_x #{λ : λ ∈ xQ}`` over probe points."""
    if len(family) == 0:
        return 0
    probe_pts = _probe_points(family, q, probes)
    counts = membership(family.group, probe_pts, q, family.points).sum(axis=1)
    return int(counts.max())


@dataclass(frozen=True)
class RelForms:
    point_in_xq: np.ndarray
    indicator_xq: np.ndarray
    indicator_lq: np.ndarray

    @property
    def agree(self) -> bool:
        return (np.array_equal(self.point_in_xq, self.indicator_xq)
                and np.array_equal(self.point_in_xq, self.indicator_lq))


def rel_forms(family: PointFamily, q: NeighborhoodSpec, probes=None) -> RelForms:
    """The three counting forms of ``rel``: ``#(Λ∩xQ)``, ``Σ 1_{xQ}(λ)``, ``Σ 1_{λQ}(x)``."""
    g = family.group
    probe_pts = _probe_points(family, q, probes)
    in_xq = membership(g, probe_pts, q, family.points)
    first = in_xq.sum(axis=1)
    second = np.array([int(np.count_nonzero(row)) for row in in_xq])
    third = membership(g, family.points, q, probe_pts).sum(axis=0)
    return RelForms(first, second, third)


@dataclass(frozen=True)
class DensityReport:
    dense: bool
    uncovered: np.ndarray

    def __bool__(self) -> bool:
        return self.dense


def is_dense(family: PointFamily, u: NeighborhoodSpec, grid: QuadratureGrid) -> DensityReport:
    """Every grid node lies in some ``λU``."""
    covered = np.zeros(grid.size, dtype=bool)
    if len(family):
        covered = membership(family.group, family.points, u, grid.nodes).any(axis=0)
    uncovered = np.flatnonzero(~covered)
    if len(uncovered):
        logger.debug("%d of %d nodes not covered by %s", len(uncovered), grid.size, u.label)
    return DensityReport(len(uncovered) == 0, uncovered)


def _product_hull(group: GroupSpec, u: NeighborhoodSpec) -> NeighborhoodSpec:
    """Box containing ``U·U⁻¹``."""
    if group.id != AFFINE:
        return u.scaled(2.0 + 1e-9, label=f"{u.label}{u.label}^-1")
    log_r = max(abs(u.lower[1]), abs(u.upper[1]))
    b_r = max(abs(u.lower[0]), abs(u.upper[0]))
    return affine_box(b_r * (1 + math.exp(2 * log_r)) * (1 + 1e-9), 2 * log_r * (1 + 1e-9),
                      mirror=u.mirror, symmetrize=False, label=f"{u.label}{u.label}^-1")


def _overlaps(group: GroupSpec, anchors: np.ndarray, x: np.ndarray, v: NeighborhoodSpec,
              samples: np.ndarray) -> np.ndarray:
    """For each anchor λ: some sampled ``x·s`` lies in ``λV`` (so ``λV ∩ xV ≠ ∅``)."""
    moved = group.mul(np.repeat(x[None, :], len(samples), axis=0), samples)
    return membership(group, anchors, v, moved).any(axis=1)


def is_separated(family: PointFamily, u: NeighborhoodSpec, grid: QuadratureGrid | None = None,
                 per_axis: int = 12) -> bool:
    """``λU ∩ λ'U = ∅`` for distinct members (pairwise sampled test, plus grid test)."""
    g = family.group
    if family.has_duplicates():
        return False
    if len(family) < 2:
        return True
    if grid is not None:
        counts = membership(g, family.points, u, grid.nodes).sum(axis=0)
        if np.any(counts > 1):
            logger.debug("Grid node shared by %d sets %s", int(counts.max()), u.label)
            return False
    samples = neighborhood_samples(g, u, per_axis)
    near = membership(g, family.points, _product_hull(g, u), family.points)
    np.fill_diagonal(near, False)
    for k in range(len(family)):
        others = np.flatnonzero(near[:, k])
        if len(others) and _overlaps(g, family.points[others], family.points[k], u, samples).any():
            return False
    return True


@dataclass(frozen=True, eq=False)
class DisjointCover:
    family: PointFamily
    neighborhood: NeighborhoodSpec
    grid: QuadratureGrid
    assignment: np.ndarray = field(repr=False)
    measures: np.ndarray = field(repr=False)
    order: tuple[int, ...] = field(repr=False, default=())

    @property
    def ratio(self) -> float:
        if len(self.measures) == 0:
            return math.inf
        low = float(self.measures.min())
        return math.inf if low <= 0 else float(self.measures.max()) / low

    def cover_hash(self) -> str:
        digest = hashlib.sha256(self.assignment.astype(np.int64).tobytes())
        digest.update(np.asarray(self.measures, dtype=float).tobytes())
        return digest.hexdigest()

    def verify(self) -> bool:
        """Measures add up to the window and every node sits in its member's set."""
        total_ok = abs(self.measures.sum() - self.grid.total_measure) <= 1e-10 * max(1.0, self.grid.total_measure)
        assigned_ok = bool(np.all(self.assignment >= 0))
        if not (total_ok and assigned_ok):
            return False
        g = self.family.group
        owners = self.family.points[self.assignment]
        rel = g.mul(g.inv(owners), self.grid.nodes)
        return bool(np.all(g.contains(self.neighborhood, rel)))

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.grid.nodes, columns=list(self.grid.group.axis_names))
        frame["member"] = self.assignment
        frame["weight"] = self.grid.weights
        return frame


def _greedy_assignment(member_mask: np.ndarray, order: np.ndarray) -> np.ndarray:
    permuted = member_mask[order]
    first = np.argmax(permuted, axis=0)
    return order[first]


def _build_cover(family, u, grid, member_mask, assignment, order) -> DisjointCover:
    measures = np.bincount(assignment, weights=grid.weights, minlength=len(family))
    return DisjointCover(family, u, grid, assignment, measures, tuple(int(i) for i in order))


def disjoint_cover(family: PointFamily, u: NeighborhoodSpec, grid: QuadratureGrid,
                   order=None, member_mask: np.ndarray | None = None) -> DisjointCover:
    """Greedy cover ``U_λn = λnU \\ ∪_{m<n} λmU`` in the given member order."""
    if member_mask is None:
        member_mask = membership(family.group, family.points, u, grid.nodes)
    covered = member_mask.any(axis=0) if len(family) else np.zeros(grid.size, dtype=bool)
    if not covered.all():
        uncovered = np.flatnonzero(~covered)
        raise CoverError(f"{family.label} is not {u.label}-dense: {len(uncovered)} uncovered nodes",
                         uncovered=uncovered)
    order = np.arange(len(family)) if order is None else np.asarray(order)
    assignment = _greedy_assignment(member_mask, order)
    return _build_cover(family, u, grid, member_mask, assignment, order)


def separated_dense_set(v: NeighborhoodSpec, u: NeighborhoodSpec, grid: QuadratureGrid,
                        candidates: np.ndarray | None = None, per_axis: int = 8,
                        seed: int = 0) -> PointFamily:
    """Greedy maximal V-packing of the grid nodes; V-separated and U-dense."""
    g = grid.group
    samples = neighborhood_samples(g, v, per_axis)
    rng = np.random.default_rng(seed)
    i = rng.integers(0, len(samples), 2000)
    j = rng.integers(0, len(samples), 2000)
    quotients = g.mul(samples[i], g.inv(samples[j]))
    if not np.all(g.contains(u, quotients)):
        raise CoverError(f"{v.label}{v.label}^-1 is not contained in {u.label}")

    pool = np.arange(grid.size) if candidates is None else np.flatnonzero(candidates)
    chosen: list[int] = []
    for node in pool:
        x = grid.nodes[node]
        if chosen and _overlaps(g, grid.nodes[chosen], x, v, samples).any():
            continue
        chosen.append(int(node))
    family = PointFamily(g, grid.nodes[chosen], label=f"packing[{v.label}]")
    logger.info("Separated dense set: %d points from %d candidates", len(family), len(pool))
    return family


@dataclass(frozen=True)
class UniformityReport:
    bound: float
    method: str
    candidates: int
    cover: DisjointCover | None = field(repr=False, default=None)

    def to_dict(self) -> dict:
        return {
            "bound": self.bound,
            "method": self.method,
            "candidates": self.candidates,
            "cover_hash": self.cover.cover_hash() if self.cover is not None else None,
        }


def _ratio(measures: np.ndarray) -> float:
    low = measures.min()
    return math.inf if low <= 0 else float(measures.max() / low)


def _rebalance(member_mask: np.ndarray, weights: np.ndarray, assignment: np.ndarray,
               rounds: int = 400) -> np.ndarray:
    """Move boundary nodes between members while the max/min ratio improves."""
    assignment = assignment.copy()
    m = member_mask.shape[0]
    measures = np.bincount(assignment, weights=weights, minlength=m)
    shared = member_mask.sum(axis=0) > 1
    for _ in range(rounds):
        current = _ratio(measures)
        best = None
        hi = int(np.argmax(measures))
        for node in np.flatnonzero((assignment == hi) & shared):
            targets = np.flatnonzero(member_mask[:, node])
            targets = targets[targets != hi]
            t = targets[np.argmin(measures[targets])]
            trial = measures.copy()
            trial[hi] -= weights[node]
            trial[t] += weights[node]
            score = _ratio(trial)
            if score < current - 1e-15 and (best is None or score < best[0]):
                best = (score, node, t)
        lo = int(np.argmin(measures))
        for node in np.flatnonzero(member_mask[lo] & (assignment != lo)):
            source = assignment[node]
            trial = measures.copy()
            trial[source] -= weights[node]
            trial[lo] += weights[node]
            score = _ratio(trial)
            if score < current - 1e-15 and (best is None or score < best[0]):
                best = (score, node, lo)
        if best is None:
            break
        _, node, target = best
        measures[assignment[node]] -= weights[node]
        measures[target] += weights[node]
        assignment[node] = target
    return assignment


def _exhaustive_min(member_mask: np.ndarray, weights: np.ndarray, limit: int):
    m = member_mask.shape[0]
    eligible = [np.flatnonzero(member_mask[:, k]) for k in range(member_mask.shape[1])]
    ambiguous = [k for k, e in enumerate(eligible) if len(e) > 1]
    combos = 1
    for k in ambiguous:
        combos *= len(eligible[k])
        if combos > limit:
            return None
    base_assignment = np.array([e[0] for e in eligible])
    base = np.bincount(base_assignment, weights=weights, minlength=m)
    for k in ambiguous:
        base[eligible[k][0]] -= weights[k]
    best_ratio, best_assignment = math.inf, base_assignment
    for choice in itertools.product(*[eligible[k] for k in ambiguous]):
        measures = base.copy()
        for k, member in zip(ambiguous, choice):
            measures[member] += weights[k]
        score = _ratio(measures)
        if score < best_ratio:
            best_ratio = score
            best_assignment = base_assignment.copy()
            best_assignment[ambiguous] = choice
    return best_ratio, best_assignment


def uniformity(family: PointFamily, u: NeighborhoodSpec, grid: QuadratureGrid,
               candidates: int = 6, seed: int = 0, exhaustive_limit: int = 4096,
               extra_covers=()) -> UniformityReport:
    """Upper bound on the U-uniformity of ``family`` (min max/min measure ratio over covers).

    Covers come from greedy orders (identity, reversed, seeded shuffles) and any
    ``extra_covers``, each improved by a rebalancing pass; tiny instances are
    solved exhaustively.
    """
    member_mask = membership(family.group, family.points, u, grid.nodes)
    greedy = disjoint_cover(family, u, grid, member_mask=member_mask)
    if family.has_duplicates():
        logger.warning("%s has repeated points; uniformity bound is +inf", family.label)
        return UniformityReport(math.inf, "duplicates", 1, greedy)

    exhaustive = _exhaustive_min(member_mask, grid.weights, exhaustive_limit)
    if exhaustive is not None:
        score, assignment = exhaustive
        cover = _build_cover(family, u, grid, member_mask, assignment, greedy.order)
        return UniformityReport(score, "exhaustive", 1, cover)

    rng = np.random.default_rng(seed)
    m = len(family)
    orders = [np.arange(m), np.arange(m)[::-1]]
    orders += [rng.permutation(m) for _ in range(max(0, candidates - 2))]
    starts = [(order, _greedy_assignment(member_mask, order)) for order in orders]
    starts += [(np.asarray(c.order) if c.order else np.arange(m), c.assignment) for c in extra_covers]

    best = None
    for order, assignment in starts:
        balanced = _rebalance(member_mask, grid.weights, assignment)
        cover = _build_cover(family, u, grid, member_mask, balanced, order)
        if best is None or cover.ratio < best.ratio:
            best = cover
    logger.info("Uniformity bound %.6g over %d candidate covers", best.ratio, len(starts))
    return UniformityReport(best.ratio, "greedy+rebalance", len(starts), best)


def split_count(measure_ratio: float, n: int) -> int:
    """``N_λ = floor(μ(W_λ)/μ(V) · N)``."""
    return int(math.floor(measure_ratio * n + 1e-12))


def split_number(eps: float) -> int:
    return max(10, 1 + math.ceil(2.0 / eps))


def _inner_radii(group: GroupSpec, u: NeighborhoodSpec) -> tuple[float, float]:
    radii = [min(-lo, hi) for lo, hi in zip(u.lower, u.upper)]
    if min(radii) <= 0:
        raise DomainError(f"{u.label} must contain the identity")
    if group.id == AFFINE:
        return radii[0], radii[1]
    return min(radii), min(radii)


def _packing_boxes(group: GroupSpec, u: NeighborhoodSpec):
    """Boxes V ⊂ W with ``V·V⁻¹·V ⊂ W`` and ``W⁻¹·W ⊂ U``."""
    r_first, r_second = _inner_radii(group, u)
    if group.id != AFFINE:
        r = r_first / 6.0
        return box(r, group.dim, label="V"), box(3 * r, group.dim, label="W"), (r,) * group.dim
    ra = r_second / 6.0
    spread = 1 + 2 * math.exp(2 * ra)
    rho = r_first * math.exp(-3 * ra) / (2 * spread)
    v = affine_box(rho, ra, label="V")
    w = affine_box(rho * spread, 3 * ra, label="W")
    return v, w, (rho, ra)


def _interior_candidates(grid: QuadratureGrid, v_radii) -> np.ndarray:
    """Nodes x whose half-size V neighbourhood stays inside the window."""
    g = grid.group
    half = [0.5 * r for r in v_radii]
    corners = []
    for signs in itertools.product((-1.0, 1.0), repeat=g.dim):
        if g.id == AFFINE:
            corners.append([signs[0] * half[0], math.exp(signs[1] * half[1])])
        else:
            corners.append([s * h for s, h in zip(signs, half)])
    ok = np.ones(grid.size, dtype=bool)
    for corner in corners:
        moved = g.mul(grid.nodes, np.repeat(np.asarray(corner)[None, :], grid.size, axis=0))
        ok &= grid.locate(moved) >= 0
    return ok


def _split_order(coords: np.ndarray, weights: np.ndarray, pieces: int, step: np.ndarray) -> np.ndarray:
    """Node order for cutting: columns of roughly square pieces, then the second axis."""
    if coords.shape[1] == 1:
        return np.lexsort((coords[:, 0],))
    extent = np.ptp(coords, axis=0) + step
    columns = max(1, int(round(math.sqrt(pieces * extent[0] / extent[1]))))
    columns = min(columns, pieces)
    per_column = math.ceil(pieces / columns)
    by_x = np.lexsort((coords[:, 1], coords[:, 0]))
    total = weights.sum()
    mids = np.cumsum(weights[by_x]) - 0.5 * weights[by_x]
    column = np.empty(len(coords), dtype=int)
    column[by_x] = np.minimum(columns - 1, np.floor(mids / (total * per_column / pieces)).astype(int))
    return np.lexsort((coords[:, 0], coords[:, 1], column))


@dataclass(frozen=True)
class NearUniformResult:
    family: PointFamily
    cover: DisjointCover = field(repr=False)
    split_number: int
    reference_measure: float
    pieces: tuple[int, ...]
    slack: float
    ratio: float
    bound: float
    seeds: int

    def to_dict(self) -> dict:
        return {
            "points": len(self.family),
            "split_number": self.split_number,
            "reference_measure": self.reference_measure,
            "seeds": self.seeds,
            "quantization_slack": self.slack,
            "cover_ratio": self.ratio,
            "ratio_bound": self.bound,
            "cover_hash": self.cover.cover_hash(),
        }


def near_uniform_set(u: NeighborhoodSpec, eps: float, grid: QuadratureGrid,
                     seed: int = 0) -> NearUniformResult:
    """Family with a cover of uniformity ``< 1 + ε`` up to node quantization.

    A V-separated, W-dense packing ``Λ₀`` is partitioned into cells ``W_λ``
    (V-cores first); each cell is cut into ``N_λ`` pieces of equal measure and
    the weight-median node of each piece becomes a member.
    """
    if not eps > 0:
        raise DomainError(f"eps must be positive, got {eps}")
    g = grid.group
    v, w, v_radii = _packing_boxes(g, u)
    rng = np.random.default_rng(seed)
    samples = neighborhood_samples(g, w, 6)
    picks = rng.integers(0, len(samples), (2000, 2))
    quotients = g.mul(g.inv(samples[picks[:, 0]]), samples[picks[:, 1]])
    if not np.all(g.contains(u, quotients)):
        raise CoverError(f"W^-1 W escapes {u.label}; choose a box-shaped U")

    interior = _interior_candidates(grid, v_radii)
    seeds = separated_dense_set(v, w, grid, candidates=interior, seed=seed)
    if len(seeds) == 0:
        raise CoverError(f"window is too small for {u.label}: no interior packing point")
    core_mask = membership(g, seeds.points, v, grid.nodes)
    cell_mask = membership(g, seeds.points, w, grid.nodes)
    if not cell_mask.any(axis=0).all():
        uncovered = np.flatnonzero(~cell_mask.any(axis=0))
        raise CoverError("window or grid too coarse: packing cells leave nodes uncovered",
                         uncovered=uncovered)
    cell = _greedy_assignment(cell_mask, np.arange(len(seeds)))
    has_core = core_mask.any(axis=0)
    cell[has_core] = np.argmax(core_mask[:, has_core], axis=0)

    core_measures = core_mask.astype(float) @ grid.weights
    reference = float(core_measures.min())
    n_split = split_number(eps)
    coords = grid.coordinates(grid.nodes)
    if g.id == AFFINE:
        coords = np.column_stack([coords, np.sign(grid.nodes[:, 1])])

    representatives, piece_of_node = [], np.full(grid.size, -1)
    pieces_per_cell, slack = [], 0.0
    for k in range(len(seeds)):
        nodes = np.flatnonzero(cell == k)
        cell_measure = grid.weights[nodes].sum()
        count = max(1, split_count(cell_measure / reference, n_split))
        target = cell_measure / count
        if grid.weights[nodes].max() > target / 2:
            raise CoverError(f"grid too coarse: node weight exceeds half of piece measure {target:.3g}")
        local = coords[nodes]
        if g.id == AFFINE:
            # keep sign components apart
            local = np.column_stack([local[:, 2] * 1e6 + local[:, 0], local[:, 1]])
        order = nodes[_split_order(local, grid.weights[nodes], count, grid.step)]
        mids = np.cumsum(grid.weights[order]) - 0.5 * grid.weights[order]
        piece = np.minimum(count - 1, np.floor(mids / target).astype(int))
        for p in range(count):
            members = order[piece == p]
            if len(members) == 0:
                raise CoverError("grid too coarse: an equal-measure piece is empty; refine the grid")
            cum = np.cumsum(grid.weights[members])
            median = members[np.searchsorted(cum, 0.5 * cum[-1])]
            piece_of_node[members] = len(representatives)
            representatives.append(grid.nodes[median])
            measure = cum[-1]
            slack = max(slack, abs(measure - target) / target)
        pieces_per_cell.append(count)

    family = PointFamily(g, np.asarray(representatives), label="near-uniform")
    measures = np.bincount(piece_of_node, weights=grid.weights, minlength=len(family))
    cover = DisjointCover(family, u, grid, piece_of_node, measures, tuple(range(len(family))))
    if not cover.verify():
        raise CoverError("quantization pushed a piece outside its member's U set; refine the grid")
    result = NearUniformResult(
        family=family,
        cover=cover,
        split_number=n_split,
        reference_measure=reference,
        pieces=tuple(pieces_per_cell),
        slack=slack,
        ratio=cover.ratio,
        bound=n_split / (n_split - 1),
        seeds=len(seeds),
    )
    logger.info("Near-uniform set: %d points, N=%d, cover ratio %.6g (bound %.6g, slack %.3g)",
                len(family), n_split, result.ratio, result.bound, slack)
    return result
