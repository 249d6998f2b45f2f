"""Group arithmetic, Haar quadrature and admissible weights.

Three concrete groups are supported: the real line, the plane (used with the
Gaussian-Fock measure) and the full affine group ``ℝ ⋊ ℝ*`` with points
``(b, a)``, ``a != 0``. Points are stored as float arrays of shape
``(m, dim)``; single points may be passed as 1-D arrays.
"""
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable

import numpy as np

from rkhs_tools.errors import DomainError

logger = logging.getLogger(__name__)

REAL_LINE = "real_line"
PLANE = "plane"
AFFINE = "affine"
GROUP_IDS = (REAL_LINE, PLANE, AFFINE)

AXIS_NAMES = {
    REAL_LINE: ("x",),
    PLANE: ("x", "y"),
    AFFINE: ("b", "a"),
}

# Above this many nodes the pair tables are not materialised.
MAX_PAIR_TABLE_NODES = 6000


@dataclass(frozen=True)
class NeighborhoodSpec:
    """Coordinate box around the identity used as Q, P, U or V.

    For the affine group the scale axis is measured in ``log|a|`` when
    ``log_scale`` is set, ``mirror`` adds the ``a < 0`` component and
    ``symmetrize`` intersects the box with its inverse image.
    """

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    closed_lower: bool = False
    closed_upper: bool = False
    log_scale: bool = False
    mirror: bool = False
    symmetrize: bool = False
    label: str = "Q"

    def box_contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        coords = pts.copy()
        inside = np.ones(len(pts), dtype=bool)
        if self.log_scale:
            scale = pts[:, -1]
            if not self.mirror:
                inside &= scale > 0
            with np.errstate(divide="ignore"):
                coords[:, -1] = np.log(np.abs(scale))
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        if self.closed_lower:
            inside &= np.all(coords >= lower, axis=1)
        else:
            inside &= np.all(coords > lower, axis=1)
        if self.closed_upper:
            inside &= np.all(coords <= upper, axis=1)
        else:
            inside &= np.all(coords < upper, axis=1)
        return inside

    def scaled(self, factor: float, label: str | None = None) -> "NeighborhoodSpec":
        """Box with every half-width multiplied by ``factor``."""
        return NeighborhoodSpec(
            lower=tuple(factor * v for v in self.lower),
            upper=tuple(factor * v for v in self.upper),
            closed_lower=self.closed_lower,
            closed_upper=self.closed_upper,
            log_scale=self.log_scale,
            mirror=self.mirror,
            symmetrize=self.symmetrize,
            label=label or self.label,
        )

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "lower": list(self.lower),
            "upper": list(self.upper),
            "closed": [self.closed_lower, self.closed_upper],
            "log_scale": self.log_scale,
            "mirror": self.mirror,
            "symmetrize": self.symmetrize,
        }


def box(radius, dim: int = 1, closed: bool = False, label: str = "Q") -> NeighborhoodSpec:
    """Symmetric box ``(-r, r)^dim`` (closed when requested)."""
    radii = np.broadcast_to(np.asarray(radius, dtype=float), (dim,))
    return NeighborhoodSpec(
        lower=tuple(-float(r) for r in radii),
        upper=tuple(float(r) for r in radii),
        closed_lower=closed,
        closed_upper=closed,
        label=label,
    )


def affine_box(b_radius: float, log_radius: float, mirror: bool = False,
               symmetrize: bool = True, label: str = "Q") -> NeighborhoodSpec:
    return NeighborhoodSpec(
        lower=(-float(b_radius), -float(log_radius)),
        upper=(float(b_radius), float(log_radius)),
        log_scale=True,
        mirror=mirror,
        symmetrize=symmetrize,
        label=label,
    )


@dataclass(frozen=True)
class GroupSpec:
    id: str
    q_neighborhood: NeighborhoodSpec
    p_neighborhood: NeighborhoodSpec
    haar_scale: float = 1.0

    def __post_init__(self):
        if self.id not in GROUP_IDS:
            raise DomainError(f"Unknown group '{self.id}'; expected one of {GROUP_IDS}")
        if not self.haar_scale > 0:
            raise DomainError(f"haar_scale must be positive, got {self.haar_scale}")

    @property
    def dim(self) -> int:
        return 1 if self.id == REAL_LINE else 2

    @property
    def axis_names(self) -> tuple[str, ...]:
        return AXIS_NAMES[self.id]

    @property
    def is_abelian(self) -> bool:
        return self.id != AFFINE

    @property
    def identity(self) -> np.ndarray:
        if self.id == AFFINE:
            return np.array([0.0, 1.0])
        return np.zeros(self.dim)

    def validate(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.dim:
            raise DomainError(f"{self.id} points need {self.dim} coordinates, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise DomainError(f"{self.id} points must be finite")
        if self.id == AFFINE and np.any(pts[:, 1] == 0):
            raise DomainError("affine points need a != 0")
        return pts

    def mul(self, x, y) -> np.ndarray:
        x = self.validate(x)
        y = self.validate(y)
        if self.id != AFFINE:
            return x + y
        b = x[:, 0] + x[:, 1] * y[:, 0]
        a = x[:, 1] * y[:, 1]
        return np.column_stack([b, a])

    def inv(self, x) -> np.ndarray:
        x = self.validate(x)
        if self.id != AFFINE:
            return -x
        return np.column_stack([-x[:, 0] / x[:, 1], 1.0 / x[:, 1]])

    def haar_density(self, x) -> np.ndarray:
        """Density of the left Haar measure w.r.t. coordinate measure."""
        x = self.validate(x)
        if self.id == AFFINE:
            return self.haar_scale / x[:, 1] ** 2
        return np.full(len(x), self.haar_scale)

    def modular(self, x) -> np.ndarray:
        x = self.validate(x)
        if self.id == AFFINE:
            return 1.0 / np.abs(x[:, 1])
        return np.ones(len(x))

    def dist(self, x) -> np.ndarray:
        """Distance from the identity in a left-invariant metric.

        Affine points are measured by the hyperbolic distance of ``b + i|a|``
        from ``i``; the group acts on the upper half-plane by isometries (the
        ``a < 0`` component by reflections), so ``dist(xy) <= dist(x) + dist(y)``.
        """
        x = self.validate(x)
        if self.id == AFFINE:
            a = np.abs(x[:, 1])
            return np.arccosh(1.0 + (x[:, 0] ** 2 + (a - 1.0) ** 2) / (2.0 * a))
        return np.linalg.norm(x, axis=1)

    def contains(self, nbhd: NeighborhoodSpec, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        inside = nbhd.box_contains(pts)
        if nbhd.symmetrize and np.any(inside):
            idx = np.flatnonzero(inside)
            inside[idx] = nbhd.box_contains(self.inv(pts[idx]))
        return inside

    def to_dict(self) -> dict:
        return {
            "group": self.id,
            "haar_scale": self.haar_scale,
            "q": self.q_neighborhood.to_dict(),
            "p": self.p_neighborhood.to_dict(),
        }


def real_line(q_radius: float = 1.0, haar_scale: float = 1.0) -> GroupSpec:
    return GroupSpec(
        id=REAL_LINE,
        q_neighborhood=box(q_radius, 1, label="Q"),
        p_neighborhood=box(q_radius / 2, 1, label="P"),
        haar_scale=haar_scale,
    )


def plane(q_radius: float = 1.0, haar_scale: float = 1.0) -> GroupSpec:
    return GroupSpec(
        id=PLANE,
        q_neighborhood=box(q_radius, 2, label="Q"),
        p_neighborhood=box(q_radius / 2, 2, label="P"),
        haar_scale=haar_scale,
    )


def affine(q_b: float = 1.0, q_log: float = math.log(2.0), mirror: bool = True) -> GroupSpec:
    # PP lies in the raw Q box when |b1 + a1 b2| < q_b, i.e. rho (1 + e^{q_log/2}) <= q_b;
    # both boxes are symmetrised so the inverse side follows.
    p_log = q_log / 2
    p_b = q_b / (1.0 + math.exp(p_log))
    return GroupSpec(
        id=AFFINE,
        q_neighborhood=affine_box(q_b, q_log, mirror=mirror, label="Q"),
        p_neighborhood=affine_box(p_b, p_log, mirror=False, label="P"),
    )


def mul(g: GroupSpec, x, y) -> np.ndarray:
    out = g.mul(x, y)
    return out[0] if np.ndim(x) == 1 and np.ndim(y) == 1 else out


def inv(g: GroupSpec, x) -> np.ndarray:
    out = g.inv(x)
    return out[0] if np.ndim(x) == 1 else out


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Midpoint quadrature of the left Haar measure on a coordinate window.

    Affine grids are uniform in ``log|a|`` per sign component; node order is
    component-major, then C-order over the axes.
    """

    group: GroupSpec
    window: tuple[tuple[float, float], ...]
    resolution: tuple[int, ...]
    signs: tuple[int, ...]
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    origin: np.ndarray = field(repr=False)
    step: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def total_measure(self) -> float:
        return float(self.weights.sum())

    def measure(self, mask=None) -> float:
        if mask is None:
            return self.total_measure
        return float(self.weights[np.asarray(mask)].sum())

    def coordinates(self, points) -> np.ndarray:
        """Coordinates in which the grid is uniform."""
        pts = np.atleast_2d(np.asarray(points, dtype=float)).copy()
        if self.group.id == AFFINE:
            with np.errstate(divide="ignore"):
                pts[:, 1] = np.log(np.abs(pts[:, 1]))
        return pts

    def locate(self, points) -> np.ndarray:
        """Index of the cell containing each point, -1 outside the window."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        coords = self.coordinates(pts)
        res = np.asarray(self.resolution)
        with np.errstate(invalid="ignore"):
            cell = np.floor((coords - self.origin) / self.step)
        valid = np.all(np.isfinite(cell), axis=1)
        cell = np.where(np.isfinite(cell), cell, -1).astype(np.int64)
        valid &= np.all((cell >= 0) & (cell < res), axis=1)
        flat = np.zeros(len(pts), dtype=np.int64)
        if valid.any():
            flat[valid] = np.ravel_multi_index(tuple(cell[valid].T), self.resolution)
        per_component = int(np.prod(res))
        if self.group.id == AFFINE:
            component = np.full(len(pts), -1)
            for k, sign in enumerate(self.signs):
                component[np.sign(pts[:, 1]) == sign] = k
            valid &= component >= 0
            flat = flat + np.maximum(component, 0) * per_component
        return np.where(valid, flat, -1)

    @cached_property
    def inverse_index(self) -> np.ndarray:
        return self.locate(self.group.inv(self.nodes))

    @cached_property
    def displacement_table(self) -> np.ndarray:
        """``D[i, j]`` = node of ``inv(x_j)·x_i`` (or -1)."""
        self._require_pair_tables()
        n = self.size
        inv_nodes = self.group.inv(self.nodes)
        table = np.empty((n, n), dtype=np.int32)
        chunk = max(1, 2_000_000 // max(n, 1))
        for start in range(0, n, chunk):
            rows = self.nodes[start:start + chunk]
            left = np.repeat(inv_nodes[None, :, :], len(rows), axis=0).reshape(-1, self.group.dim)
            right = np.repeat(rows, n, axis=0)
            table[start:start + len(rows)] = self.locate(self.group.mul(left, right)).reshape(len(rows), n)
        logger.debug("Built %dx%d displacement table", n, n)
        return table

    def _require_pair_tables(self):
        if self.size > MAX_PAIR_TABLE_NODES:
            raise DomainError(
                f"grid has {self.size} nodes; pair tables are limited to {MAX_PAIR_TABLE_NODES}"
            )

    def relative_points(self, nbhd: NeighborhoodSpec, right: bool = False) -> np.ndarray:
        """Boolean ``(n, n)`` matrix: ``inv(x_i)·x_j ∈ nbhd`` (``x_j·inv(x_i)`` if right)."""
        self._require_pair_tables()
        n = self.size
        inv_nodes = self.group.inv(self.nodes)
        mask = np.empty((n, n), dtype=bool)
        chunk = max(1, 2_000_000 // max(n, 1))
        for start in range(0, n, chunk):
            stop = min(n, start + chunk)
            if right:
                left = np.tile(self.nodes, (stop - start, 1))
                rgt = np.repeat(inv_nodes[start:stop], n, axis=0)
            else:
                left = np.repeat(inv_nodes[start:stop], n, axis=0)
                rgt = np.tile(self.nodes, (stop - start, 1))
            mask[start:stop] = self.group.contains(nbhd, self.group.mul(left, rgt)).reshape(stop - start, n)
        np.fill_diagonal(mask, True)
        return mask

    def describe(self) -> dict:
        return {
            "group": self.group.id,
            "window": [list(w) for w in self.window],
            "resolution": list(self.resolution),
            "signs": list(self.signs),
            "nodes": self.size,
            "measure": self.total_measure,
        }


def make_grid(g: GroupSpec, window, resolution, mirror: bool = False) -> QuadratureGrid:
    """Midpoint grid over ``window`` (one ``(lo, hi)`` pair per axis).

    For the affine group the second pair bounds ``a`` and must not touch 0;
    ``mirror`` adds the component with the opposite sign of ``a``.
    """
    window = tuple((float(lo), float(hi)) for lo, hi in window)
    if np.isscalar(resolution):
        resolution = (int(resolution),) * g.dim
    resolution = tuple(int(r) for r in resolution)
    if len(window) != g.dim or len(resolution) != g.dim:
        raise DomainError(f"{g.id} needs {g.dim} window axes and resolutions")
    if any(r < 1 for r in resolution):
        raise DomainError(f"resolution must be positive per axis, got {resolution}")
    for lo, hi in window:
        if not hi > lo:
            raise DomainError(f"degenerate window axis [{lo}, {hi}]")

    signs: tuple[int, ...] = (1,)
    lows = [lo for lo, _ in window]
    highs = [hi for _, hi in window]
    if g.id == AFFINE:
        a_lo, a_hi = window[1]
        if a_lo <= 0 <= a_hi:
            raise DomainError(f"affine window [{a_lo}, {a_hi}] touches a = 0")
        sign = 1 if a_lo > 0 else -1
        lows[1], highs[1] = sorted((math.log(abs(a_lo)), math.log(abs(a_hi))))
        signs = (sign, -sign) if mirror else (sign,)

    origin = np.asarray(lows)
    step = (np.asarray(highs) - origin) / np.asarray(resolution)
    axes = [origin[k] + (np.arange(resolution[k]) + 0.5) * step[k] for k in range(g.dim)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, g.dim)
    cell = float(np.prod(step))

    blocks, weights = [], []
    for sign in signs:
        pts = mesh.copy()
        if g.id == AFFINE:
            pts[:, 1] = sign * np.exp(mesh[:, 1])
            # db da / a^2 with da = |a| dlog|a|
            weights.append(cell * g.haar_scale / np.abs(pts[:, 1]))
        else:
            weights.append(np.full(len(pts), cell * g.haar_scale))
        blocks.append(pts)

    grid = QuadratureGrid(
        group=g,
        window=window,
        resolution=resolution,
        signs=signs,
        nodes=np.vstack(blocks),
        weights=np.concatenate(weights),
        origin=origin,
        step=step,
    )
    logger.debug("Grid %s window=%s resolution=%s nodes=%d measure=%.6g",
                 g.id, window, resolution, grid.size, grid.total_measure)
    return grid


def neighborhood_grid(g: GroupSpec, nbhd: NeighborhoodSpec, resolution: int = 201) -> QuadratureGrid:
    """Grid over the bounding box of ``nbhd``."""
    window = [(lo, hi) for lo, hi in zip(nbhd.lower, nbhd.upper)]
    if g.id == AFFINE:
        if nbhd.log_scale:
            window[1] = (math.exp(nbhd.lower[1]), math.exp(nbhd.upper[1]))
        return make_grid(g, window, resolution, mirror=nbhd.mirror)
    return make_grid(g, window, resolution)


@lru_cache(maxsize=64)
def neighborhood_measure(g: GroupSpec, nbhd: NeighborhoodSpec, resolution: int = 201) -> float:
    """Haar measure of ``nbhd`` by fine quadrature over its bounding box."""
    grid = neighborhood_grid(g, nbhd, resolution)
    value = grid.measure(g.contains(nbhd, grid.nodes))
    logger.debug("mu(%s) = %.8g on %d nodes", nbhd.label, value, grid.size)
    return value


def neighborhood_samples(g: GroupSpec, nbhd: NeighborhoodSpec, per_axis: int = 12) -> np.ndarray:
    """Points of ``nbhd`` on a regular sub-grid, identity included."""
    grid = neighborhood_grid(g, nbhd, per_axis)
    pts = grid.nodes[g.contains(nbhd, grid.nodes)]
    return np.vstack([g.identity[None, :], pts])


@dataclass(frozen=True)
class Weight:
    label: str
    evaluator: Callable[[np.ndarray], np.ndarray] = field(compare=False)

    def __call__(self, points) -> np.ndarray:
        return np.asarray(self.evaluator(np.atleast_2d(points)), dtype=float)


def unit_weight() -> Weight:
    return Weight("w=1", lambda pts: np.ones(len(pts)))


def polynomial_weight(g: GroupSpec, exponent: float) -> Weight:
    """``(1 + |x|)^s`` on abelian groups, ``(1 + |log|a||)^s`` on the affine group."""
    if exponent == 0:
        return unit_weight()
    if g.id == AFFINE:
        return Weight(f"(1+|log a|)^{exponent:g}",
                      lambda pts: (1.0 + np.abs(np.log(np.abs(pts[:, 1])))) ** exponent)
    return Weight(f"(1+|x|)^{exponent:g}",
                  lambda pts: (1.0 + np.linalg.norm(pts, axis=1)) ** exponent)


@dataclass(frozen=True)
class WeightReport:
    label: str
    pairs: int
    below_one: float
    submultiplicativity: float
    tol: float

    @property
    def max_violation(self) -> float:
        return max(self.below_one, self.submultiplicativity)

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tol

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "pairs": self.pairs,
            "below_one": self.below_one,
            "submultiplicativity": self.submultiplicativity,
            "tol": self.tol,
            "passed": self.passed,
        }


def check_weight(g: GroupSpec, w: Weight, grid: QuadratureGrid, tol: float = 1e-10,
                 max_pairs: int = 250_000, seed: int = 0) -> WeightReport:
    """Report the worst violation of ``w >= 1`` and ``w(xy) <= w(x) w(y)``."""
    nodes = grid.nodes
    n = len(nodes)
    if n * n <= max_pairs:
        i, j = np.divmod(np.arange(n * n), n)
    else:
        rng = np.random.default_rng(seed)
        i = rng.integers(0, n, max_pairs)
        j = rng.integers(0, n, max_pairs)
    wx = w(nodes)
    below_one = float(max(0.0, np.max(1.0 - wx))) if n else 0.0
    products = w(g.mul(nodes[i], nodes[j]))
    excess = products - wx[i] * wx[j]
    submult = float(max(0.0, np.max(excess))) if len(excess) else 0.0
    report = WeightReport(w.label, len(i), below_one, submult, tol)
    if not report.passed:
        logger.warning("Weight %s fails admissibility: below_one=%.3g submult=%.3g",
                       w.label, below_one, submult)
    return report
