"""
Max-abs scaling and centering onto a unit hypercube.

Each feature is divided by its maximum absolute value on the reference
set, mapped linearly from [-1, 1] onto [0, 1] and then shifted by the
mean of the mapped reference values.  Test points may fall outside the
reference range; with ``clamp=True`` their mapped coordinates are
clipped to [0, 1] before the shift, so every transformed point lies in
the box ``[-mean, 1 - mean]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class RawDataset:
    """An ``n x d`` matrix of feature values with optional outlier flags.

    ``labels`` is a boolean vector, ``True`` marking an outlier.
    """

    points: np.ndarray
    labels: Optional[np.ndarray] = None
    feature_names: tuple = field(default=())

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValidationError(f"points must be a non-empty 2-d matrix, got shape {pts.shape}")
        check_finite(pts)
        object.__setattr__(self, "points", pts)
        if self.labels is not None:
            lab = np.asarray(self.labels)
            if lab.shape != (pts.shape[0],):
                raise ValidationError(
                    f"labels must have one entry per row: {lab.shape} vs {pts.shape[0]} rows"
                )
            if not np.isin(lab, (0, 1)).all():
                raise ValidationError("labels must be binary (inlier=0/False, outlier=1/True)")
            object.__setattr__(self, "labels", lab.astype(bool))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]


def check_finite(points: np.ndarray) -> None:
    bad = np.argwhere(~np.isfinite(points))
    if len(bad):
        row, col = bad[0]
        raise ValidationError(
            f"non-finite value {points[row, col]!r} at row {row}, column {col}"
        )


@dataclass(frozen=True)
class PreprocessParams:
    alpha: np.ndarray
    mean: np.ndarray

    @property
    def d(self) -> int:
        return len(self.alpha)

    @property
    def lo(self) -> np.ndarray:
        """Lower corner of the centered hypercube."""
        return -self.mean

    def to_dict(self) -> dict:
        return {"alpha": self.alpha.tolist(), "mean": self.mean.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "PreprocessParams":
        return cls(np.asarray(data["alpha"], dtype=float), np.asarray(data["mean"], dtype=float))


def _to_unit(alpha: np.ndarray, points: np.ndarray) -> np.ndarray:
    return (points / alpha + 1.0) / 2.0


def fit_preprocessor(reference) -> PreprocessParams:
    """Fit per-dimension scales and post-scaling means on reference data.

    Parameters
    ----------
    reference : RawDataset or array_like
        Reference (inlier) points, ``n x d``.

    Returns
    -------
    PreprocessParams
        ``alpha[j] = max_i |x_ij|`` (1 for an all-zero column) and the
        mean of the reference values after mapping onto [0, 1].
    """
    pts = reference.points if isinstance(reference, RawDataset) else RawDataset(reference).points
    alpha = np.abs(pts).max(axis=0)
    # an all-zero column carries no distance information; any positive scale works
    alpha = np.where(alpha > 0, alpha, 1.0)
    mean = _to_unit(alpha, pts).mean(axis=0)
    return PreprocessParams(alpha=alpha, mean=mean)


def transform(params: PreprocessParams, points, clamp: bool = False) -> np.ndarray:
    """Map raw points (a vector or an ``n x d`` matrix) into the centered hypercube."""
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts2 = pts.reshape(1, -1) if single else pts
    if pts2.ndim != 2 or pts2.shape[1] != params.d:
        raise ValidationError(f"expected points of dimension {params.d}, got shape {pts.shape}")
    check_finite(pts2)
    with np.errstate(over="ignore"):
        u = _to_unit(params.alpha, pts2)
    if clamp:
        u = np.clip(u, 0.0, 1.0)
    elif not np.isfinite(u).all():
        raise ValidationError("point overflows the fitted scale; use clamp=True")
    out = u - params.mean
    return out[0] if single else out


def inverse_transform(params: PreprocessParams, coords) -> np.ndarray:
    """Undo :func:`transform` for unclamped points."""
    u = np.asarray(coords, dtype=float) + params.mean
    return (2.0 * u - 1.0) * params.alpha
