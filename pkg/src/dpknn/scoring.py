"""
Outlier scorers.

``exact_knn_score`` / ``exact_wknn_score`` are the brute-force baselines:
distance to the k-th nearest reference point, and the sum of distances
to all k nearest.  ``grid_score`` replaces the reference points by the
centroids of their grid cells weighted by cell counts, which may be
exact or noisy depending on the provider.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ValidationError
from .grid import cell_of, traversal_order
from .privacy import CountProvider

THRESHOLD = "threshold"
EXHAUSTED = "exhausted"
CAP = "cap"

DEFAULT_MAX_VISITED = 10**6


@dataclass(frozen=True)
class OutlierScore:
    value: float
    cells_visited: int = 0
    terminated_by: Optional[str] = None


@dataclass(frozen=True)
class ScoringConfig:
    """Parameters of a grid scorer.

    ``delta_max`` bounds the centroid L1 distance between the cell of the
    query point and any visited cell; ``None`` means the whole grid.
    """

    k: int
    b: int = 2
    weighted: bool = False
    delta_max: Optional[float] = None
    max_visited_cells: int = DEFAULT_MAX_VISITED
    epsilon: Optional[float] = None

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValidationError(f"k must be a positive integer, got {self.k!r}")
        if int(self.b) != self.b or self.b < 1:
            raise ValidationError(f"b must be a positive integer, got {self.b!r}")
        if self.delta_max is not None and not self.delta_max > 0:
            raise ValidationError(f"delta_max must be positive, got {self.delta_max!r}")
        if int(self.max_visited_cells) != self.max_visited_cells or self.max_visited_cells < 1:
            raise ValidationError("max_visited_cells must be a positive integer")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValidationError(f"epsilon must be positive, got {self.epsilon!r}")

    def resolved_delta_max(self, d: int) -> float:
        return float(d) if self.delta_max is None else float(self.delta_max)


def _check_k(n: int, k: int) -> None:
    if int(k) != k or k < 1:
        raise ValidationError(f"k must be a positive integer, got {k!r}")
    if k > n:
        raise ValidationError(f"k={k} exceeds the reference set size {n}")


def knn_distances(reference, queries, k: int) -> np.ndarray:
    """Sorted distances from each query to its ``k`` nearest reference points.

    Returns an array of shape ``(len(queries), k)``.
    """
    ref = np.asarray(reference, dtype=float)
    q = np.atleast_2d(np.asarray(queries, dtype=float))
    ref = ref.reshape(len(ref), -1)
    if q.shape[1] != ref.shape[1]:
        raise ValidationError(f"dimension mismatch: {q.shape[1]} vs {ref.shape[1]}")
    _check_k(len(ref), k)
    out = np.empty((len(q), k))
    # bound the size of the pairwise distance block
    step = max(1, 2**22 // max(len(ref), 1))
    for start in range(0, len(q), step):
        block = q[start : start + step]
        d2 = ((block[:, None, :] - ref[None, :, :]) ** 2).sum(axis=2)
        part = np.partition(d2, k - 1, axis=1)[:, :k]
        out[start : start + step] = np.sqrt(np.sort(part, axis=1))
    return out


def knn_scores(reference, queries, k: int, weighted: bool = False) -> np.ndarray:
    dist = knn_distances(reference, queries, k)
    return dist.sum(axis=1) if weighted else dist[:, -1]


def exact_knn_score(reference, y, k: int) -> OutlierScore:
    return OutlierScore(float(knn_scores(reference, y, k)[0]))


def exact_wknn_score(reference, y, k: int) -> OutlierScore:
    return OutlierScore(float(knn_scores(reference, y, k, weighted=True)[0]))


def grid_score(provider: CountProvider, y, cfg: ScoringConfig) -> OutlierScore:
    """Score one preprocessed point by walking grid cells outward.

    Candidate cells lie within ``delta_max`` (centroid L1 distance) of
    the cell containing ``y`` and are visited in ascending L1 distance
    from ``y`` to their centroids.  Each visit adds the cell count to a
    running total ``Q``; the distance credited to a cell is its centroid
    distance to the home cell.  The weighted score sums count times
    distance, the basic score is the distance of the last visited cell.
    The walk stops once ``Q >= k``, when candidates run out, or at
    ``max_visited_cells``.
    """
    spec = provider.spec
    if spec.b != cfg.b:
        raise ValidationError(f"provider grid has b={spec.b}, config has b={cfg.b}")
    y = np.asarray(y, dtype=float).ravel()
    home = cell_of(spec, y)
    delta_max = cfg.resolved_delta_max(spec.d)

    total = 0
    terms = []
    last = 0.0
    visited = 0
    for c, ring in traversal_order(spec, y, home, delta_max):
        q = provider.query(c)
        total += q
        dist = ring / spec.b
        if cfg.weighted:
            terms.append(q * dist)
        else:
            last = dist
        visited += 1
        if total >= cfg.k:
            reason = THRESHOLD
            break
        if visited >= cfg.max_visited_cells:
            reason = CAP
            break
    else:
        reason = EXHAUSTED
    # fsum is order independent, so equal visit sets give equal scores
    value = math.fsum(terms) if cfg.weighted else last
    return OutlierScore(value, visited, reason)


def grid_scores(provider: CountProvider, points, cfg: ScoringConfig) -> list:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return [grid_score(provider, p, cfg) for p in pts]
