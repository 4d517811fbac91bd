"""
Laplace noise and count providers for grid cells.

A count query on a grid cell has global sensitivity 1 under replacement
of one record, so Laplace noise of scale ``1/epsilon`` makes each cell
count epsilon-DP.  The noisy provider fixes one noise value per cell for
its whole lifetime.  Instead of drawing ``b**d`` values up front, the
noise of a cell is derived from a keyed hash of ``(seed, cell)``; the
first query of a cell memoizes the value and every later query returns
the same float.
"""

from __future__ import annotations

import hashlib
import itertools
import math
import struct
from collections import Counter
from typing import Dict, Iterable, Optional, Sequence

import numpy as np

from .errors import ValidationError
from .grid import CellIndex, GridHistogram, GridSpec, build_histogram, cells_of

COUNT_SENSITIVITY = 1.0

_TWO53 = float(2**53)


def laplace_scale(epsilon: float, sensitivity: float = COUNT_SENSITIVITY) -> float:
    if not epsilon > 0 or not math.isfinite(epsilon):
        raise ValidationError(f"epsilon must be a positive finite number, got {epsilon!r}")
    return sensitivity / epsilon


def laplace_from_uniform(u, scale: float):
    """Inverse-CDF map of ``u`` in (0, 1) onto Laplace(0, scale).

    ``v = u - 1/2`` and the sample is ``-scale * sign(v) * log(1 - 2|v|)``.
    Works elementwise on arrays.
    """
    v = np.asarray(u, dtype=float) - 0.5
    out = -scale * np.sign(v) * np.log1p(-2.0 * np.abs(v))
    return float(out) if out.ndim == 0 else out


def _open_unit(bits53):
    # midpoint of the k-th of 2**53 equal slots: never exactly 0 or 1
    return (np.asarray(bits53, dtype=np.float64) + 0.5) / _TWO53


class LaplaceSampler:
    """Sequential Laplace(0, scale) draws from a seeded PCG64 stream."""

    def __init__(self, scale: float, seed: int = 0):
        if not scale > 0:
            raise ValidationError(f"scale must be positive, got {scale!r}")
        self.scale = float(scale)
        self.seed = int(seed)
        self._rng = np.random.Generator(np.random.PCG64(self.seed))

    @classmethod
    def for_epsilon(cls, epsilon: float, seed: int = 0) -> "LaplaceSampler":
        return cls(laplace_scale(epsilon), seed)

    @property
    def variance(self) -> float:
        return 2.0 * self.scale**2

    def sample(self, size: Optional[int] = None):
        n = 1 if size is None else int(size)
        bits = self._rng.integers(0, 2**53, size=n, dtype=np.int64)
        out = laplace_from_uniform(_open_unit(bits), self.scale)
        return float(out[0]) if size is None else out


def laplace_sample(sampler: LaplaceSampler) -> float:
    return sampler.sample()


def cell_noise(seed: int, cell: Sequence[int], scale: float) -> float:
    """Noise for ``cell``: a pure function of the seed, the cell and the scale."""
    key = struct.pack("<q", int(seed))
    msg = struct.pack(f"<{len(cell)}q", *cell)
    digest = hashlib.blake2b(msg, key=key, digest_size=8, person=b"dpknn-cell").digest()
    bits = int.from_bytes(digest, "little") >> 11
    return laplace_from_uniform((bits + 0.5) / _TWO53, scale)


class CountProvider:
    """Per-cell counts, exact or Laplace-perturbed.

    Parameters
    ----------
    histogram : GridHistogram
        Exact counts of the reference set.
    epsilon : float, optional
        Privacy budget.  ``None`` gives the exact (non-private) provider.
    seed : int
        Key of the noise field in noisy mode.

    Notes
    -----
    Noisy counts are not clipped and may be negative.  ``epsilon`` is
    metadata only: repeated queries reuse the memoized noise, so no
    budget is consumed per query.
    """

    def __init__(self, histogram: GridHistogram, epsilon: Optional[float] = None, seed: int = 0):
        self.histogram = histogram
        self.epsilon = epsilon
        self.seed = int(seed)
        self.scale = None if epsilon is None else laplace_scale(epsilon)
        self._noise: Dict[CellIndex, float] = {}

    @property
    def spec(self) -> GridSpec:
        return self.histogram.spec

    @property
    def noisy(self) -> bool:
        return self.scale is not None

    def noise(self, c: CellIndex) -> float:
        eta = self._noise.get(c)
        if eta is None:
            # pure in (seed, c): racing first queries agree on the value
            eta = self._noise.setdefault(c, cell_noise(self.seed, c, self.scale))
        return eta

    def query(self, c: CellIndex):
        if self.scale is None:
            return self.histogram.counts.get(c, 0)
        return self.histogram.counts.get(c, 0) + self.noise(c)

    __call__ = query


def exact_provider(histogram: GridHistogram) -> CountProvider:
    return CountProvider(histogram)


def noisy_provider(histogram: GridHistogram, epsilon: float, seed: int) -> CountProvider:
    return CountProvider(histogram, epsilon=epsilon, seed=seed)


def query_count(provider: CountProvider, c: Sequence[int]):
    return provider.query(provider.spec.check_cell(c))


def count_change(spec: GridSpec, dataset, neighbour) -> int:
    """Largest per-cell count difference between two datasets of equal size."""
    h1 = build_histogram(spec, dataset).counts
    h2 = build_histogram(spec, neighbour).counts
    return max((abs(h1.get(c, 0) - h2.get(c, 0)) for c in h1.keys() | h2.keys()), default=0)


def neighbours(dataset: Sequence, domain: Sequence) -> Iterable[tuple]:
    """Every dataset obtained by replacing exactly one record with a domain value."""
    for i in range(len(dataset)):
        for x2 in domain:
            yield tuple(dataset[:i]) + (x2,) + tuple(dataset[i + 1 :])


def verify_sensitivity(domain: Sequence, size: int, spec: GridSpec) -> int:
    """Exhaustive global sensitivity of the per-cell count query.

    Enumerates every dataset of ``size`` records drawn from ``domain``
    (a list of points) and every replacement neighbour of it, and
    returns the largest change of any single cell count.
    """
    pts = np.array([np.ravel(p) for p in domain], dtype=float)
    cells = [tuple(c) for c in cells_of(spec, pts).tolist()]
    worst = 0
    for data in itertools.combinations_with_replacement(range(len(cells)), size):
        base = Counter(cells[i] for i in data)
        for other in neighbours(data, range(len(cells))):
            moved = Counter(cells[i] for i in other)
            change = max(abs(base[c] - moved[c]) for c in base.keys() | moved.keys())
            worst = max(worst, change)
    return worst
