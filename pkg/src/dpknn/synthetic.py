"""Synthetic labelled data for smoke tests and sanity sweeps."""

import numpy as np

from .preprocessing import RawDataset


def gaussian_with_uniform_outliers(seed=0, n_inliers=200, n_outliers=20, d=2,
                                   center=1.5, sigma=0.5, box=3.0, gap=4.0):
    """Gaussian inliers plus uniform outliers kept away from them.

    Inliers are ``N(center, sigma^2 I)``.  Outliers are uniform on
    ``[-box, box]^d`` conditioned on lying more than ``gap * sigma``
    from the inlier mean, so the classes are separable by construction.
    Inliers come first, outliers last.
    """
    rng = np.random.default_rng(seed)
    inliers = rng.normal(center, sigma, size=(n_inliers, d))
    outliers = np.empty((0, d))
    while len(outliers) < n_outliers:
        cand = rng.uniform(-box, box, size=(4 * n_outliers, d))
        keep = np.linalg.norm(cand - center, axis=1) > gap * sigma
        outliers = np.vstack([outliers, cand[keep]])
    points = np.vstack([inliers, outliers[:n_outliers]])
    labels = np.r_[np.zeros(n_inliers, dtype=bool), np.ones(n_outliers, dtype=bool)]
    return RawDataset(points, labels, tuple(f"x{j}" for j in range(d)))
