"""
Uniform grid over the centered unit hypercube.

Each of the ``d`` dimensions is split into ``b`` intervals of width
``1/b`` starting at ``lo[j]``.  Cells are addressed by tuples of ``d``
integers in ``[0, b-1]``; tuples compare lexicographically, which is the
deterministic tie-break used everywhere.  The ``b**d`` cells are never
materialized: histograms are sparse and neighbourhoods are enumerated
lazily.
"""

from __future__ import annotations

import heapq
import math
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterator, Sequence, Tuple

import numpy as np

from .errors import ValidationError

CellIndex = Tuple[int, ...]

# slack when converting a real distance bound into a whole number of rings
RING_EPS = 1e-9


@dataclass(frozen=True)
class GridSpec:
    b: int
    lo: Tuple[float, ...]

    def __post_init__(self):
        if int(self.b) != self.b or self.b < 1:
            raise ValidationError(f"b must be a positive integer, got {self.b!r}")
        object.__setattr__(self, "b", int(self.b))
        object.__setattr__(self, "lo", tuple(float(v) for v in np.ravel(self.lo)))
        if not self.lo:
            raise ValidationError("grid needs at least one dimension")

    @classmethod
    def for_params(cls, params, b: int) -> "GridSpec":
        return cls(b=b, lo=tuple(params.lo))

    @property
    def d(self) -> int:
        return len(self.lo)

    @property
    def n_cells(self) -> int:
        return self.b**self.d

    def check_cell(self, c: Sequence[int]) -> CellIndex:
        c = tuple(int(i) for i in c)
        if len(c) != self.d or any(i < 0 or i >= self.b for i in c):
            raise ValidationError(f"cell {c} out of bounds for b={self.b}, d={self.d}")
        return c


def cells_of(spec: GridSpec, points) -> np.ndarray:
    """Vectorised :func:`cell_of` for an ``n x d`` array; returns int64 indices."""
    pts = np.asarray(points, dtype=float).reshape(-1, spec.d)
    raw = np.floor((pts - np.asarray(spec.lo)) * spec.b)
    # the upper face belongs to the last cell; rounding may push 0 to -1 ulp
    return np.clip(raw, 0, spec.b - 1).astype(np.int64)


def cell_of(spec: GridSpec, p) -> CellIndex:
    return tuple(int(i) for i in cells_of(spec, p)[0])


def centroid(spec: GridSpec, c: Sequence[int]) -> np.ndarray:
    c = spec.check_cell(c)
    return np.array([lo + (i + 0.5) / spec.b for lo, i in zip(spec.lo, c)])


def ring_of(origin: Sequence[int], c: Sequence[int]) -> int:
    """Offset ring ``sum_j |c_j - origin_j|``; the centroid L1 distance is ``ring / b``."""
    return sum(abs(a - o) for a, o in zip(c, origin))


def max_ring(spec: GridSpec, delta_max: float) -> int:
    """Largest ring whose centroid L1 distance ``r / b`` does not exceed ``delta_max``."""
    if delta_max < 0:
        raise ValidationError(f"delta_max must be non-negative, got {delta_max}")
    return min(int(math.floor(delta_max * spec.b + RING_EPS)), spec.d * (spec.b - 1))


@dataclass(frozen=True)
class GridHistogram:
    spec: GridSpec
    counts: Dict[CellIndex, int]
    total: int

    def __getitem__(self, c: CellIndex) -> int:
        return self.counts.get(c, 0)

    def to_dict(self) -> dict:
        return {
            "b": self.spec.b,
            "lo": list(self.spec.lo),
            "total": self.total,
            "counts": [[list(c), n] for c, n in sorted(self.counts.items())],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GridHistogram":
        spec = GridSpec(b=data["b"], lo=tuple(data["lo"]))
        counts = {spec.check_cell(c): int(n) for c, n in data["counts"]}
        if any(n <= 0 for n in counts.values()) or sum(counts.values()) != data["total"]:
            raise ValidationError("histogram counts must be positive and sum to total")
        return cls(spec, counts, int(data["total"]))


def build_histogram(spec: GridSpec, reference) -> GridHistogram:
    pts = np.asarray(reference, dtype=float).reshape(-1, spec.d)
    counts = Counter(map(tuple, cells_of(spec, pts).tolist()))
    return GridHistogram(spec, dict(counts), len(pts))


def shells(spec: GridSpec, origin: Sequence[int], delta_max: float) -> Iterator[CellIndex]:
    """Yield in-bounds cells ring by ring around ``origin``.

    Ring ``r`` holds the cells whose offsets from ``origin`` have L1 norm
    ``r``; their centroids all sit at L1 distance ``r / b`` from the
    origin's centroid.  Rings are produced lazily in ascending order,
    cells within a ring lexicographically, stopping after the last ring
    within ``delta_max``.
    """
    origin = spec.check_cell(origin)
    for r in range(max_ring(spec, delta_max) + 1):
        yield from _ring(spec.b, origin, r)


def _ring(b: int, origin: CellIndex, r: int) -> Iterator[CellIndex]:
    d = len(origin)
    # reach[j]: largest offset budget dims j.. can still absorb
    reach = [0] * (d + 1)
    for j in range(d - 1, -1, -1):
        reach[j] = reach[j + 1] + max(origin[j], b - 1 - origin[j])
    if r > reach[0]:
        return
    prefix = []

    def rec(j: int, rem: int):
        o = origin[j]
        if j == d - 1:
            for i in sorted({o - rem, o + rem}):
                if 0 <= i < b:
                    yield tuple(prefix) + (i,)
            return
        for i in range(max(0, o - rem), min(b - 1, o + rem) + 1):
            left = rem - abs(i - o)
            if left <= reach[j + 1]:
                prefix.append(i)
                yield from rec(j + 1, left)
                prefix.pop()

    yield from rec(0, r)


def traversal_order(
    spec: GridSpec, y, origin: Sequence[int], delta_max: float
) -> Iterator[Tuple[CellIndex, int]]:
    """Yield ``(cell, ring)`` for every cell within ``delta_max`` of ``origin``.

    Cells come out sorted by the L1 distance from ``y`` to their centroid
    (computed with ``math.fsum``), ties broken by cell index.  The
    distance is separable across dimensions, so the enumeration is a
    best-first walk over per-dimension candidate lists sorted by cost:
    every node's parent is obtained by stepping back its last advanced
    dimension, which never increases cost.  Subtrees that cannot reach
    a ring within bound are pruned, so the walk only touches cells near
    the allowed neighbourhood regardless of ``b**d``.
    """
    origin = spec.check_cell(origin)
    y = np.asarray(y, dtype=float).ravel()
    b, d = spec.b, spec.d
    limit = max_ring(spec, delta_max)

    order, cost, off, sufmin = [], [], [], []
    for j in range(d):
        lo, o, yj = spec.lo[j], origin[j], float(y[j])
        f = [abs(yj - (lo + (i + 0.5) / b)) for i in range(b)]
        idx = sorted(range(b), key=lambda i: (f[i], abs(i - o), i))
        order.append(idx)
        cost.append([f[i] for i in idx])
        dist = [abs(i - o) for i in idx]
        off.append(dist)
        suf = dist[:]
        for r in range(b - 2, -1, -1):
            suf[r] = min(suf[r], suf[r + 1])
        sufmin.append(suf)

    def node(ranks):
        c = tuple(order[j][r] for j, r in enumerate(ranks))
        return (math.fsum(cost[j][r] for j, r in enumerate(ranks)), c, ranks)

    root = (0,) * d
    if sum(sufmin[j][0] for j in range(d)) > limit:
        return
    heap = [node(root) + (0,)]
    while heap:
        level = heap[0][0]
        batch = []
        while heap and heap[0][0] == level:
            _, c, ranks, p = heapq.heappop(heap)
            ring = sum(off[j][r] for j, r in enumerate(ranks))
            if ring <= limit:
                batch.append((c, ring))
            fixed = sum(off[j][ranks[j]] for j in range(p))
            for j in range(p, d):
                rj = ranks[j] + 1
                if rj < b and fixed + sufmin[j][rj] <= limit:
                    child = ranks[:j] + (rj,) + ranks[j + 1 :]
                    heapq.heappush(heap, node(child) + (j,))
                fixed += off[j][ranks[j]]
        batch.sort()
        yield from batch
