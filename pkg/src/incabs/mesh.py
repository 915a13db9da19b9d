"""Uniform meshes over the state-input box and the operating regions grown on them.

Grid indices are lexicographic with dimension 0 slowest (C order). Operating
regions are axis-aligned boxes of grid indices, optionally extended by a
partially filled layer on one face (see :class:`OperatingRegion`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .errors import (
    AlreadyFull,
    BudgetTooSmall,
    IndexOutOfRange,
    InvalidDomain,
    RegionOutOfMesh,
    TooFewPoints,
)

POSITION_SLACK = 1e-12


@dataclass(frozen=True)
class DomainBox:
    """Closed box X x U; the first ``n`` coordinates are states, the last ``m`` inputs."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    n: int
    m: int = 0

    def __post_init__(self):
        lower = tuple(float(v) for v in self.lower)
        upper = tuple(float(v) for v in self.upper)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if self.n < 1 or self.m < 0:
            raise InvalidDomain(f"need n >= 1 and m >= 0, got n={self.n}, m={self.m}")
        if len(lower) != self.n + self.m or len(upper) != self.n + self.m:
            raise InvalidDomain(
                f"bounds have {len(lower)}/{len(upper)} entries, expected n+m={self.n + self.m}"
            )
        for i, (lo, hi) in enumerate(zip(lower, upper)):
            if not (math.isfinite(lo) and math.isfinite(hi)) or not lo < hi:
                raise InvalidDomain(f"dimension {i}: need lower < upper, got [{lo}, {hi}]")

    @property
    def dim(self) -> int:
        return self.n + self.m

    @classmethod
    def cube(cls, low: float, high: float, n: int, m: int = 0) -> "DomainBox":
        return cls((low,) * (n + m), (high,) * (n + m), n, m)

    def contains(self, position, slack: float = POSITION_SLACK) -> bool:
        p = np.asarray(position, dtype=float)
        return bool(np.all(p >= np.asarray(self.lower) - slack) and np.all(p <= np.asarray(self.upper) + slack))

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        return lo + (hi - lo) * rng.random((count, self.dim))


@dataclass(frozen=True)
class SamplePoint:
    position: tuple[float, ...]
    value: tuple[float, ...]


@dataclass(frozen=True)
class UniformMesh:
    domain: DomainBox
    points_per_dim: tuple[int, ...]
    spacing: tuple[float, ...] = field(init=False)
    s_max: int = field(init=False)

    def __post_init__(self):
        counts = tuple(int(c) for c in self.points_per_dim)
        object.__setattr__(self, "points_per_dim", counts)
        if len(counts) != self.domain.dim:
            raise InvalidDomain(f"{len(counts)} point counts for a {self.domain.dim}-dimensional domain")
        for i, c in enumerate(counts):
            if c < 2:
                raise TooFewPoints(f"dimension {i} has {c} points; at least 2 are required")
        spacing = tuple((hi - lo) / (c - 1) for lo, hi, c in zip(self.domain.lower, self.domain.upper, counts))
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "s_max", math.prod(counts))

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return self.points_per_dim

    @property
    def full_box(self) -> "BoxRegion":
        return BoxRegion((0,) * self.dim, tuple(c - 1 for c in self.points_per_dim))

    def axis_values(self, axis: int) -> np.ndarray:
        lo = self.domain.lower[axis]
        return lo + np.arange(self.points_per_dim[axis]) * self.spacing[axis]

    def positions(self, indices: np.ndarray) -> np.ndarray:
        """Vectorised :func:`point_of_index` over an (N, d) integer array."""
        idx = np.asarray(indices, dtype=np.int64).reshape(-1, self.dim)
        return np.asarray(self.domain.lower) + idx * np.asarray(self.spacing)

    def flat(self, indices: np.ndarray) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.int64).reshape(-1, self.dim)
        return np.ravel_multi_index(tuple(idx.T), self.shape)

    def unflat(self, flat: np.ndarray) -> np.ndarray:
        return np.stack(np.unravel_index(np.asarray(flat, dtype=np.int64), self.shape), axis=1)

    def iter_chunks(self, chunk: int = 1 << 16) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        """Stream all grid points as (indices, positions) blocks in lexicographic order."""
        for start in range(0, self.s_max, chunk):
            idx = self.unflat(np.arange(start, min(start + chunk, self.s_max)))
            yield idx, self.positions(idx)

    def nearest_index(self, position) -> tuple[int, ...]:
        p = np.asarray(position, dtype=float)
        k = np.rint((p - np.asarray(self.domain.lower)) / np.asarray(self.spacing)).astype(np.int64)
        return tuple(int(v) for v in np.clip(k, 0, np.asarray(self.points_per_dim) - 1))


def build_mesh(domain: DomainBox, points_per_dim: int | Sequence[int]) -> UniformMesh:
    if isinstance(points_per_dim, (int, np.integer)):
        points_per_dim = (int(points_per_dim),) * domain.dim
    return UniformMesh(domain, tuple(points_per_dim))


def point_of_index(mesh: UniformMesh, idx: Sequence[int]) -> np.ndarray:
    idx = tuple(int(i) for i in idx)
    if len(idx) != mesh.dim or any(not 0 <= i < c for i, c in zip(idx, mesh.points_per_dim)):
        raise IndexOutOfRange(f"grid index {idx} outside mesh shape {mesh.shape}")
    return mesh.positions(np.array([idx]))[0]


def mesh_diameter(mesh: UniformMesh) -> float:
    """Diagonal length of one mesh cell."""
    return math.sqrt(sum(h * h for h in mesh.spacing))


def interpolation_radius(d: int, delta: float) -> float:
    """Upper bound on the interpolation radius of a d-dimensional element of diameter ``delta``."""
    return math.sqrt(d / (2.0 * (d + 1))) * delta


# ------------------------------------------------------------------ regions


@dataclass(frozen=True)
class BoxRegion:
    """Inclusive box ``lo <= idx <= hi`` of grid indices."""

    lo: tuple[int, ...]
    hi: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(int(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(int(v) for v in self.hi))
        if len(self.lo) != len(self.hi) or any(a > b for a, b in zip(self.lo, self.hi)):
            raise RegionOutOfMesh(f"malformed box lo={self.lo} hi={self.hi}")

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def extents(self) -> tuple[int, ...]:
        return tuple(b - a + 1 for a, b in zip(self.lo, self.hi))

    @property
    def size(self) -> int:
        return math.prod(self.extents)

    def contains(self, idx) -> bool:
        return all(a <= int(i) <= b for a, i, b in zip(self.lo, idx, self.hi))

    def contains_many(self, idx: np.ndarray) -> np.ndarray:
        idx = np.asarray(idx).reshape(-1, self.dim)
        return np.all((idx >= np.asarray(self.lo)) & (idx <= np.asarray(self.hi)), axis=1)

    def indices(self) -> np.ndarray:
        grid = np.indices(self.extents).reshape(self.dim, -1).T
        return grid + np.asarray(self.lo, dtype=np.int64)

    def corners(self) -> np.ndarray:
        axes = [sorted({a, b}) for a, b in zip(self.lo, self.hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=1).astype(np.int64)

    def within(self, other: "BoxRegion") -> bool:
        return all(a >= c and b <= e for a, b, c, e in zip(self.lo, self.hi, other.lo, other.hi))


@dataclass(frozen=True)
class OperatingRegion:
    """A box plus an optional partially filled layer stacked on one of its faces.

    ``partial`` lives in the layer just outside ``box`` along ``axis`` on
    ``side`` (+1 above ``box.hi``, -1 below ``box.lo``), and its footprint
    stays inside the box's face. Such a set is closed under taking the convex
    hull and intersecting with the grid, and its hull vertices are cheap to
    list (:func:`region_vertices`).
    """

    box: BoxRegion
    partial: "OperatingRegion | None" = None
    axis: int = -1
    side: int = 0

    @property
    def dim(self) -> int:
        return self.box.dim

    @property
    def size(self) -> int:
        return self.box.size + (self.partial.size if self.partial is not None else 0)

    @property
    def is_box(self) -> bool:
        return self.partial is None

    def contains(self, idx) -> bool:
        if self.box.contains(idx):
            return True
        return self.partial is not None and self.partial.contains(idx)

    def contains_many(self, idx: np.ndarray) -> np.ndarray:
        inside = self.box.contains_many(idx)
        if self.partial is not None:
            inside |= self.partial.contains_many(idx)
        return inside

    def boxes(self) -> list[BoxRegion]:
        out = [self.box]
        if self.partial is not None:
            out.extend(self.partial.boxes())
        return out

    def indices(self) -> np.ndarray:
        return _sorted_rows(np.concatenate([b.indices() for b in self.boxes()]))

    def bounding_box(self) -> BoxRegion:
        # the partial layer can only extend the box along its own axis
        if self.partial is None:
            return self.box
        lo, hi = list(self.box.lo), list(self.box.hi)
        if self.side > 0:
            hi[self.axis] += 1
        else:
            lo[self.axis] -= 1
        return BoxRegion(lo, hi)

    def to_dict(self) -> dict:
        out = {"lo": list(self.box.lo), "hi": list(self.box.hi)}
        if self.partial is not None:
            out.update(axis=self.axis, side=self.side, partial=self.partial.to_dict())
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "OperatingRegion":
        box = BoxRegion(data["lo"], data["hi"])
        if "partial" not in data:
            return cls(box)
        return cls(box, cls.from_dict(data["partial"]), int(data["axis"]), int(data["side"]))


class Expansion(NamedTuple):
    region: OperatingRegion
    new_points: np.ndarray  # (k, d) grid indices, lexicographic
    overflow: bool


def _sorted_rows(idx: np.ndarray) -> np.ndarray:
    if len(idx) == 0:
        return idx.reshape(0, idx.shape[1] if idx.ndim == 2 else 0)
    order = np.lexsort(idx.T[::-1])
    return idx[order]


def _as_region(region: BoxRegion | OperatingRegion) -> OperatingRegion:
    return region if isinstance(region, OperatingRegion) else OperatingRegion(region)


def _check_in_mesh(mesh: UniformMesh, region: OperatingRegion) -> None:
    if region.dim != mesh.dim or not region.bounding_box().within(mesh.full_box):
        raise RegionOutOfMesh(f"region {region.to_dict()} does not fit mesh shape {mesh.shape}")


def region_corners(mesh: UniformMesh, region: BoxRegion) -> list[tuple[int, ...]]:
    """Distinct corners of a box region; collapsed dimensions contribute one coordinate."""
    _check_in_mesh(mesh, _as_region(region))
    return [tuple(int(v) for v in c) for c in _sorted_rows(region.corners())]


def region_vertices(region: BoxRegion | OperatingRegion) -> np.ndarray:
    """Vertices of the convex hull of a region's grid points, lexicographically sorted."""
    region = _as_region(region)
    corners = region.box.corners()
    if region.partial is None:
        return _sorted_rows(corners)
    a, s = region.axis, region.side
    far = region.box.hi[a] if s > 0 else region.box.lo[a]
    thick = region.box.extents[a] >= 2
    keep = []
    for c in corners:
        if thick and c[a] == far:
            above = c.copy()
            above[a] += s
            # strictly between the opposite face and the partial layer
            if region.partial.contains(above):
                continue
        keep.append(c)
    verts = np.concatenate([np.array(keep, dtype=np.int64).reshape(-1, region.dim), region_vertices(region.partial)])
    return _sorted_rows(np.unique(verts, axis=0))


# ------------------------------------------------------------------ growth


def _face(box: BoxRegion, axis: int, side: int) -> BoxRegion:
    lo, hi = list(box.lo), list(box.hi)
    layer = box.hi[axis] + 1 if side > 0 else box.lo[axis] - 1
    lo[axis] = hi[axis] = layer
    return BoxRegion(lo, hi)


def _extend(box: BoxRegion, axis: int, side: int, layers: int) -> tuple[BoxRegion, BoxRegion]:
    """Grow ``box`` by ``layers`` along ``axis``; returns (new box, added slab)."""
    lo, hi = list(box.lo), list(box.hi)
    slab_lo, slab_hi = list(box.lo), list(box.hi)
    if side > 0:
        hi[axis] += layers
        slab_lo[axis] = box.hi[axis] + 1
        slab_hi[axis] = hi[axis]
    else:
        lo[axis] -= layers
        slab_lo[axis] = lo[axis]
        slab_hi[axis] = box.lo[axis] - 1
    return BoxRegion(lo, hi), BoxRegion(slab_lo, slab_hi)


def _pick_axis(box: BoxRegion, limit: BoxRegion, order: Sequence[int], balanced: bool):
    for a in order:
        up = limit.hi[a] - box.hi[a]
        down = box.lo[a] - limit.lo[a]
        if up <= 0 and down <= 0:
            continue
        if balanced:
            side = 1 if up >= down else -1
        else:
            side = 1 if up > 0 else -1
        avail = up if side > 0 else down
        other = down if side > 0 else up
        return a, side, avail, other
    return None


def _start_point(face: BoxRegion, balanced: bool) -> tuple[int, ...]:
    if balanced:
        return tuple((a + b) // 2 for a, b in zip(face.lo, face.hi))
    return face.lo


def _fill(region: OperatingRegion, room: int, limit: BoxRegion, order, balanced: bool, partial: bool):
    """Add up to ``room`` grid points inside ``limit``; returns (region, added boxes, used)."""
    added: list[BoxRegion] = []
    used = 0
    while room > used:
        left = room - used
        if region.partial is not None:
            face = _face(region.box, region.axis, region.side)
            sub, boxes, n = _fill(region.partial, left, face, order, balanced, partial)
            added += boxes
            used += n
            if sub.partial is None and sub.box == face:
                grown, _ = _extend(region.box, region.axis, region.side, 1)
                region = OperatingRegion(grown)
                continue
            region = OperatingRegion(region.box, sub, region.axis, region.side)
            break
        pick = _pick_axis(region.box, limit, order, balanced)
        if pick is None:
            break
        axis, side, avail, other = pick
        slab = region.box.size // region.box.extents[axis]
        if slab <= left:
            layers = min(left // slab, avail)
            if balanced and other > 0:
                layers = min(layers, max(1, avail - other))
            grown, slab_box = _extend(region.box, axis, side, layers)
            added.append(slab_box)
            used += slab_box.size
            region = OperatingRegion(grown)
            continue
        if not partial:
            break
        face = _face(region.box, axis, side)
        start = _start_point(face, balanced)
        seed = BoxRegion(start, start)
        added.append(seed)
        used += 1
        region = OperatingRegion(region.box, OperatingRegion(seed), axis, side)
    return region, added, used


def _collect(boxes: list[BoxRegion], dim: int) -> np.ndarray:
    if not boxes:
        return np.zeros((0, dim), dtype=np.int64)
    return _sorted_rows(np.concatenate([b.indices() for b in boxes]))


def _normalize_order(order: Sequence[int] | None, dim: int) -> tuple[int, ...]:
    if order is None:
        return tuple(range(dim))
    order = tuple(int(a) for a in order)
    if sorted(order) != list(range(dim)):
        raise ValueError(f"expansion order {order} is not a permutation of 0..{dim - 1}")
    return order


def is_full(mesh: UniformMesh, region: BoxRegion | OperatingRegion) -> bool:
    region = _as_region(region)
    return region.partial is None and region.box == mesh.full_box


def expand_region(
    mesh: UniformMesh,
    region: BoxRegion | OperatingRegion,
    budget: int,
    order: Sequence[int] | None = None,
    *,
    partial: bool = False,
    balanced: bool = False,
) -> Expansion:
    """Grow ``region`` so that new points plus its carried vertices fit in ``budget``.

    With ``partial=False`` the result stays a box; when not even one slab fits,
    the smallest slab along the next dimension of ``order`` is added anyway and
    ``overflow`` is set. With ``partial=True`` a slab that does not fit is
    filled incrementally as a partial layer, so the budget is always honoured.
    """
    region = _as_region(region)
    _check_in_mesh(mesh, region)
    if is_full(mesh, region):
        raise AlreadyFull("operating region already covers the whole mesh")
    if budget < 1:
        raise BudgetTooSmall(f"budget must be positive, got {budget}")
    order = _normalize_order(order, mesh.dim)
    carried = len(region_vertices(region))
    room = budget - carried
    if room < 1:
        raise BudgetTooSmall(f"budget {budget} leaves no room next to {carried} carried vertices")
    if not partial and region.partial is not None:
        raise ValueError("box-only expansion needs a box region")
    grown, boxes, used = _fill(region, room, mesh.full_box, order, balanced, partial)
    overflow = False
    if used == 0:
        # box mode only: one slab does not fit, take the smallest legal one
        axis, side, _, _ = _pick_axis(region.box, mesh.full_box, order, balanced)
        box, slab = _extend(region.box, axis, side, 1)
        grown, boxes, overflow = OperatingRegion(box), [slab], True
    return Expansion(grown, _collect(boxes, mesh.dim), overflow)


def initial_region(
    mesh: UniformMesh,
    budget: int,
    start: Sequence[int] | BoxRegion,
    order: Sequence[int] | None = None,
    *,
    partial: bool = True,
    balanced: bool = False,
) -> Expansion:
    """First operating region: grown from a start index (or given as a box) within ``budget`` points."""
    order = _normalize_order(order, mesh.dim)
    if isinstance(start, BoxRegion):
        region = OperatingRegion(start)
        _check_in_mesh(mesh, region)
        return Expansion(region, region.indices(), region.size > budget)
    start = tuple(int(v) for v in start)
    point_of_index(mesh, start)
    if budget < 1:
        raise BudgetTooSmall(f"budget must be positive, got {budget}")
    seed = OperatingRegion(BoxRegion(start, start))
    grown, boxes, _ = _fill(seed, budget - 1, mesh.full_box, order, balanced, partial)
    return Expansion(grown, _collect([seed.box, *boxes], mesh.dim), False)


def start_index(mesh: UniformMesh, where: str) -> tuple[int, ...]:
    if where == "left_corner":
        return (0,) * mesh.dim
    if where == "center":
        return tuple((c - 1) // 2 for c in mesh.points_per_dim)
    raise ValueError(f"unknown start region {where!r}")
