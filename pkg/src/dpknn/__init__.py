"""Differentially private k-NN outlier detection on a uniform grid."""

from .errors import ValidationError
from .evaluation import (
    ExperimentConfig,
    MetricsRecord,
    ScoredTestSet,
    auroc,
    average_precision,
    make_split,
    precision_at_n,
    run_experiment,
    sweep,
)
from .grid import GridHistogram, GridSpec, build_histogram, cell_of, centroid, shells
from .preprocessing import PreprocessParams, RawDataset, fit_preprocessor, transform
from .privacy import CountProvider, LaplaceSampler, laplace_sample, query_count, verify_sensitivity
from .scoring import OutlierScore, ScoringConfig, exact_knn_score, exact_wknn_score, grid_score

__version__ = "0.1.0"
