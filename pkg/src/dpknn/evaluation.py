"""
Metrics, the train/test protocol and the experiment sweep.
"""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import rankdata

from .errors import UndefinedMetricError, ValidationError
from .grid import GridSpec, build_histogram
from .preprocessing import RawDataset, fit_preprocessor, transform
from .privacy import CountProvider
from .scoring import ScoringConfig, grid_score, knn_scores, DEFAULT_MAX_VISITED

ALGORITHMS = ("knn", "wknn", "grid_knn", "grid_wknn", "dp_grid_knn", "dp_grid_wknn")
PRIVATE = ("dp_grid_knn", "dp_grid_wknn")
DEFAULT_EPSILONS = (5.0, 2.5, 1.25, 0.6, 0.3, 0.15, 0.075, 0.035, 0.015)
DEFAULT_SEEDS = tuple(range(10))


# -- metrics ---------------------------------------------------------------


@dataclass(frozen=True)
class ScoredTestSet:
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=float).ravel()
        y = np.asarray(self.labels).ravel()
        if s.shape != y.shape:
            raise ValidationError(f"{len(s)} scores but {len(y)} labels")
        if not np.isin(y, (0, 1)).all():
            raise ValidationError("labels must be binary")
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "labels", y.astype(bool))

    @property
    def n_pos(self) -> int:
        return int(self.labels.sum())


def _as_set(scores, labels=None) -> ScoredTestSet:
    return scores if isinstance(scores, ScoredTestSet) else ScoredTestSet(scores, labels)


def auroc(scores, labels=None) -> float:
    """Area under the ROC curve via the Mann-Whitney U statistic (ties count 1/2)."""
    s = _as_set(scores, labels)
    n_pos = s.n_pos
    n_neg = len(s.labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC needs both outliers and inliers")
    ranks = rankdata(s.scores)
    u = ranks[s.labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _descending(s: ScoredTestSet) -> np.ndarray:
    # stable: equal scores keep their test-set order
    return np.argsort(-s.scores, kind="stable")


def average_precision(scores, labels=None) -> float:
    s = _as_set(scores, labels)
    if s.n_pos == 0:
        raise UndefinedMetricError("average precision needs at least one outlier")
    hits = s.labels[_descending(s)]
    ranks = np.flatnonzero(hits) + 1
    return float(np.mean(np.arange(1, len(ranks) + 1) / ranks))


def precision_at_n(scores, labels=None, n: Optional[int] = None) -> float:
    """Fraction of outliers among the ``n`` top-scored points (default: number of outliers)."""
    s = _as_set(scores, labels)
    if n is None:
        n = s.n_pos
    if not 1 <= n <= len(s.scores):
        raise ValidationError(f"n={n} outside [1, {len(s.scores)}]")
    return float(s.labels[_descending(s)[:n]].mean())


# -- protocol --------------------------------------------------------------


def make_split(data: RawDataset, m_outliers: int, train_frac: float = 0.8, seed: int = 0):
    """Split a labelled dataset into an inlier reference set and a labelled test set.

    The first ``m_outliers`` minority rows (file order) become the test
    outliers; any further minority rows are left out.  Inliers are
    shuffled with ``seed``; the first ``floor(train_frac * n_inliers)``
    form the reference set and the rest join the outliers in the test
    set, whose row order is shuffled with the same generator.

    Returns
    -------
    (RawDataset, RawDataset)
        Reference set (all inliers) and labelled test set.
    """
    if data.labels is None:
        raise ValidationError("make_split needs labelled data")
    if not 0 < train_frac < 1:
        raise ValidationError(f"train_frac must lie in (0, 1), got {train_frac}")
    minority = np.flatnonzero(data.labels)
    inliers = np.flatnonzero(~data.labels)
    if m_outliers < 1 or m_outliers > len(minority):
        raise ValidationError(
            f"requested {m_outliers} outliers but the minority class has {len(minority)} rows"
        )
    rng = np.random.default_rng(seed)
    inliers = inliers[rng.permutation(len(inliers))]
    n_ref = int(math.floor(train_frac * len(inliers) + 1e-9))
    if n_ref < 1 or n_ref == len(inliers):
        raise ValidationError(f"split of {len(inliers)} inliers leaves an empty part")
    ref_rows = np.sort(inliers[:n_ref])
    test_rows = np.concatenate([inliers[n_ref:], minority[:m_outliers]])
    test_rows = test_rows[rng.permutation(len(test_rows))]
    names = data.feature_names
    reference = RawDataset(data.points[ref_rows], np.zeros(n_ref, dtype=bool), names)
    test = RawDataset(data.points[test_rows], data.labels[test_rows], names)
    return reference, test


# -- sweep -----------------------------------------------------------------


@dataclass
class MetricsRecord:
    dataset: str
    algorithm: str
    k: int
    b: Optional[int]
    epsilon: Optional[float]
    seed: Optional[int]
    auroc: float
    ap: float
    p_at_n: float
    n_used: int
    cells_visited_mean: Optional[float] = None
    terminated_by_counts: Dict[str, int] = field(default_factory=dict)

    @property
    def group(self) -> tuple:
        return (self.dataset, self.algorithm, self.k, self.b, self.epsilon)


@dataclass
class ExperimentConfig:
    """Declarative description of a sweep.

    ``split`` is ``"per_seed"`` (each seed redraws the inlier split and
    keys the Laplace noise; non-private algorithms are scored once per
    split) or ``"fixed"`` (one split drawn with ``split_seed``; the seeds
    only drive the noise).
    """

    datasets: Sequence[str] = ()
    algorithms: Sequence[str] = ALGORITHMS
    k: Sequence[int] = (5,)
    b: Sequence[int] = tuple(range(2, 11))
    epsilon: Sequence[float] = DEFAULT_EPSILONS
    seeds: Sequence[int] = DEFAULT_SEEDS
    train_frac: float = 0.8
    delta_max: Optional[float] = None
    max_visited_cells: int = DEFAULT_MAX_VISITED
    split: str = "per_seed"
    split_seed: int = 0
    workers: int = 1

    def to_dict(self) -> dict:
        """Plain JSON-ready view, used as run metadata next to results files."""
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, (tuple, list, range)) else v
        return out

    def validate(self) -> None:
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown:
            raise ValidationError(f"unknown algorithms: {sorted(unknown)}")
        if self.split not in ("fixed", "per_seed"):
            raise ValidationError(f"split must be 'fixed' or 'per_seed', got {self.split!r}")
        if not self.algorithms or not self.k:
            raise ValidationError("need at least one algorithm and one k")
        if any(a.startswith("grid") or a.startswith("dp") for a in self.algorithms) and not self.b:
            raise ValidationError("grid algorithms need at least one b")
        if any(a in PRIVATE for a in self.algorithms) and not (self.epsilon and self.seeds):
            raise ValidationError("private algorithms need epsilon values and seeds")
        for e in self.epsilon:
            if not e > 0:
                raise ValidationError(f"epsilon must be positive, got {e}")


def _metrics(scores, labels) -> Tuple[float, float, float]:
    s = ScoredTestSet(scores, labels)
    return auroc(s), average_precision(s), precision_at_n(s)


def _grid_record(name, algo, k, b, eps, seed, provider, test_unit, labels, cfg):
    scfg = ScoringConfig(
        k=k,
        b=b,
        weighted=algo.endswith("wknn"),
        delta_max=cfg.delta_max,
        max_visited_cells=cfg.max_visited_cells,
        epsilon=eps,
    )
    results = [grid_score(provider, p, scfg) for p in test_unit]
    scores = [r.value for r in results]
    a, ap, pn = _metrics(scores, labels)
    reasons = Counter(r.terminated_by for r in results)
    return MetricsRecord(
        name, algo, k, b, eps, seed, a, ap, pn, len(scores),
        cells_visited_mean=float(np.mean([r.cells_visited for r in results])),
        terminated_by_counts=dict(sorted(reasons.items())),
    )


def evaluate_split(name, reference: RawDataset, test: RawDataset, cfg: ExperimentConfig,
                   split_seed: Optional[int], noise_seeds: Sequence[int],
                   include_nonprivate: bool = True) -> List[MetricsRecord]:
    """All configured algorithms on one train/test split."""
    params = fit_preprocessor(reference)
    ref_unit = transform(params, reference.points)
    test_unit = transform(params, test.points, clamp=True)
    labels = test.labels
    out = []
    algos = [a for a in cfg.algorithms if include_nonprivate or a in PRIVATE]
    for k in cfg.k:
        for algo in algos:
            if algo in ("knn", "wknn"):
                scores = knn_scores(ref_unit, test_unit, k, weighted=algo == "wknn")
                out.append(MetricsRecord(name, algo, k, None, None, split_seed,
                                         *_metrics(scores, labels), len(scores)))
    for b in cfg.b:
        if not any(a not in ("knn", "wknn") for a in algos):
            break
        hist = build_histogram(GridSpec.for_params(params, b), ref_unit)
        exact = CountProvider(hist)
        for k in cfg.k:
            for algo in ("grid_knn", "grid_wknn"):
                if algo in algos:
                    out.append(_grid_record(name, algo, k, b, None, split_seed, exact,
                                            test_unit, labels, cfg))
        for eps in cfg.epsilon:
            for seed in noise_seeds:
                provider = CountProvider(hist, epsilon=eps, seed=seed)
                for k in cfg.k:
                    for algo in PRIVATE:
                        if algo in algos:
                            out.append(_grid_record(name, algo, k, b, eps, seed, provider,
                                                    test_unit, labels, cfg))
    return out


def _task(args):
    name, data, m, cfg, split_seed, noise_seeds, include_nonprivate = args
    try:
        reference, test = make_split(data, m, cfg.train_frac, split_seed)
        return evaluate_split(name, reference, test, cfg, split_seed, noise_seeds,
                              include_nonprivate)
    except ValidationError as exc:
        raise ValidationError(f"dataset {name!r}, split seed {split_seed}: {exc}") from exc
    except Exception as exc:
        raise RuntimeError(f"dataset {name!r}, split seed {split_seed}: {exc!r}") from exc


def _order_key(cfg: ExperimentConfig, names: Sequence[str]):
    def key(r: MetricsRecord):
        return (
            names.index(r.dataset),
            ALGORITHMS.index(r.algorithm),
            list(cfg.k).index(r.k),
            -1 if r.b is None else list(cfg.b).index(r.b),
            -1 if r.epsilon is None else list(cfg.epsilon).index(r.epsilon),
            -1 if r.seed is None else r.seed,
        )

    return key


def sweep(datasets: Dict[str, Tuple[RawDataset, int]], cfg: ExperimentConfig) -> List[MetricsRecord]:
    """Run ``cfg`` on in-memory labelled datasets ``{name: (data, m_outliers)}``.

    Records come back in a fixed order independent of ``workers``.
    """
    cfg.validate()
    tasks = []
    for name, (data, m) in datasets.items():
        if cfg.split == "fixed":
            tasks.append((name, data, m, cfg, cfg.split_seed, list(cfg.seeds), True))
        else:
            for s in cfg.seeds:
                tasks.append((name, data, m, cfg, s, [s], True))
    if cfg.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            chunks = list(pool.map(_task, tasks))
    else:
        chunks = [_task(t) for t in tasks]
    records = [r for chunk in chunks for r in chunk]
    if cfg.split == "fixed":
        for r in records:
            if r.algorithm not in PRIVATE:
                r.seed = None
    return sorted(records, key=_order_key(cfg, list(datasets)))


def run_experiment(cfg: ExperimentConfig) -> List[MetricsRecord]:
    """Load every manifest in ``cfg.datasets`` and run the sweep."""
    from .io import load_dataset, load_manifest

    data = {}
    for path in cfg.datasets:
        manifest = load_manifest(path)
        data[manifest.name] = (load_dataset(manifest), manifest.m_outliers)
    return sweep(data, cfg)


def summarize(records: Sequence[MetricsRecord]) -> Dict[tuple, dict]:
    """Mean and sample standard deviation of the metrics per configuration group."""
    groups: Dict[tuple, List[MetricsRecord]] = {}
    for r in records:
        groups.setdefault(r.group, []).append(r)
    out = {}
    for key, rows in groups.items():
        stats = {}
        for metric in ("auroc", "ap", "p_at_n"):
            vals = np.array([getattr(r, metric) for r in rows])
            stats[metric] = (float(vals.mean()), float(vals.std(ddof=1)) if len(vals) > 1 else 0.0)
        stats["n"] = len(rows)
        out[key] = stats
    return out
