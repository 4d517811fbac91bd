from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpknn.errors import UndefinedMetricError, ValidationError
from dpknn.evaluation import (
    DEFAULT_EPSILONS,
    ExperimentConfig,
    auroc,
    average_precision,
    make_split,
    precision_at_n,
    summarize,
    sweep,
)
from dpknn.preprocessing import RawDataset
from dpknn.synthetic import gaussian_with_uniform_outliers
from oracles import oracle_auroc


def test_auroc_examples():
    assert auroc([0.9, 0.5, 0.1], [1, 0, 0]) == 1.0
    assert auroc([0.3] * 6, [1, 0, 1, 0, 0, 1]) == 0.5
    # pairs (0.8,0.8)=1/2, (0.8,0.1)=1, (0.3,0.8)=0, (0.3,0.1)=1
    assert oracle_auroc([0.8, 0.8, 0.3, 0.1], [1, 0, 1, 0]) == Fraction(5, 8)
    assert auroc([0.8, 0.8, 0.3, 0.1], [1, 0, 1, 0]) == 0.625


def test_auroc_single_class_undefined():
    with pytest.raises(UndefinedMetricError):
        auroc([0.1, 0.2], [1, 1])
    with pytest.raises(UndefinedMetricError):
        auroc([0.1, 0.2], [0, 0])


def test_average_precision_examples():
    assert average_precision([0.9, 0.7, 0.6, 0.4], [1, 0, 1, 0]) == pytest.approx(5 / 6)
    assert average_precision([4, 3, 2, 1], [1, 1, 0, 0]) == 1.0
    assert average_precision([4, 3, 2, 1, 0], [0, 0, 0, 0, 1]) == pytest.approx(1 / 5)
    with pytest.raises(UndefinedMetricError):
        average_precision([1, 2], [0, 0])


def test_precision_at_n_examples():
    assert precision_at_n([0.9, 0.8, 0.7], [1, 0, 1], n=2) == 0.5
    assert precision_at_n([4, 3, 2, 1], [1, 1, 0, 0]) == 1.0
    assert precision_at_n([1, 2, 3, 4], [1, 1, 0, 0]) == 0.0
    for n in (0, 4):
        with pytest.raises(ValidationError):
            precision_at_n([1, 2, 3], [1, 0, 1], n=n)


def test_ties_broken_by_original_order():
    assert precision_at_n([1.0, 1.0], [1, 0], n=1) == 1.0
    assert precision_at_n([1.0, 1.0], [0, 1], n=1) == 0.0
    assert average_precision([1.0, 1.0], [0, 1]) == 0.5


def test_mismatched_lengths_rejected():
    with pytest.raises(ValidationError):
        auroc([1, 2, 3], [1, 0])


scores_labels = st.integers(2, 60).flatmap(lambda n: st.tuples(
    st.lists(st.integers(-5, 5).map(float), min_size=n, max_size=n),
    st.lists(st.booleans(), min_size=n, max_size=n),
)).filter(lambda t: 0 < sum(t[1]) < len(t[1]))


@given(scores_labels)
@settings(max_examples=300, deadline=None)
def test_auroc_equals_pairwise_oracle(sl):
    s, y = sl
    assert auroc(s, y) == pytest.approx(float(oracle_auroc(s, y)), abs=1e-12)


@given(scores_labels, st.sampled_from(["exp", "affine", "cube"]))
@settings(max_examples=200, deadline=None)
def test_metrics_invariant_under_increasing_transforms(sl, kind):
    s, y = np.array(sl[0]), sl[1]
    t = {"exp": np.exp, "affine": lambda v: 3 * v + 7, "cube": lambda v: v**3 + v}[kind](s)
    assert auroc(t, y) == pytest.approx(auroc(s, y), abs=1e-12)
    assert average_precision(t, y) == average_precision(s, y)
    assert precision_at_n(t, y) == precision_at_n(s, y)


def test_large_input_against_oracle():
    rng = np.random.default_rng(0)
    s = rng.integers(0, 50, 1000).astype(float)
    y = rng.random(1000) < 0.2
    assert auroc(s, y) == pytest.approx(float(oracle_auroc(s, y)), abs=1e-12)


def toy(n_in=10, n_out=2, extra_minority=0):
    pts = np.arange(n_in + n_out + extra_minority, dtype=float).reshape(-1, 1)
    labels = [0] * n_in + [1] * (n_out + extra_minority)
    return RawDataset(pts, labels)


def test_toy_split_sizes():
    ref, test = make_split(toy(), 2, 0.8, seed=0)
    assert ref.n == 8 and test.n == 4 and test.labels.sum() == 2
    assert not ref.labels.any()


def test_first_m_minority_rows_are_outliers():
    data = RawDataset(np.arange(15.0).reshape(-1, 1), [1, 0, 0, 1, 0, 1, 0, 0, 0, 1, 0, 0, 0, 0, 1])
    _, test = make_split(data, 3, 0.8, seed=4)
    assert sorted(test.points[test.labels, 0].tolist()) == [0.0, 3.0, 5.0]
    # later minority rows are left out entirely
    assert 9.0 not in test.points[:, 0] and 14.0 not in test.points[:, 0]


@pytest.mark.parametrize("n_in, n_ref, n_test, m", [
    (142, 113, 35, 6), (500, 400, 140, 40), (357, 285, 82, 10), (138, 110, 38, 10),
])
def test_reference_and_test_sizes(n_in, n_ref, n_test, m):
    ref, test = make_split(toy(n_in, m, extra_minority=3), m, 0.8, seed=1)
    assert (ref.n, test.n, int(test.labels.sum())) == (n_ref, n_test, m)


@given(st.integers(2, 80), st.integers(1, 10), st.integers(0, 10), st.integers(0, 10**6),
       st.floats(0.1, 0.9))
@settings(max_examples=200, deadline=None)
def test_split_conservation(n_in, m, extra, seed, frac):
    data = toy(n_in, m, extra)
    try:
        ref, test = make_split(data, m, frac, seed)
    except ValidationError:
        assert int(frac * n_in + 1e-9) in (0, n_in)
        return
    assert ref.n + test.n == n_in + m
    used = np.r_[ref.points[:, 0], test.points[:, 0]]
    assert len(np.unique(used)) == len(used)


def test_split_depends_on_seed_but_sizes_do_not():
    data = toy(50, 5)
    r0, _ = make_split(data, 5, 0.8, 0)
    r1, _ = make_split(data, 5, 0.8, 1)
    assert r0.n == r1.n and not np.array_equal(r0.points, r1.points)
    r0b, _ = make_split(data, 5, 0.8, 0)
    assert np.array_equal(r0.points, r0b.points)


def test_inlier_row_order_changes_split_not_sizes():
    pts = np.arange(60.0).reshape(-1, 1)
    labels = np.r_[np.zeros(50), np.ones(10)]
    perm = np.r_[np.random.default_rng(3).permutation(50), np.arange(50, 60)]
    a, ta = make_split(RawDataset(pts, labels), 5, 0.8, 0)
    b, tb = make_split(RawDataset(pts[perm], labels), 5, 0.8, 0)
    assert (a.n, ta.n) == (b.n, tb.n) == (40, 15)
    assert not np.array_equal(np.sort(a.points[:, 0]), np.sort(b.points[:, 0]))


def test_split_errors():
    with pytest.raises(ValidationError):
        make_split(toy(10, 2), 3)
    with pytest.raises(ValidationError):
        make_split(RawDataset(np.ones((4, 1))), 1)
    with pytest.raises(ValidationError):
        make_split(toy(), 2, train_frac=1.0)


def test_default_epsilons():
    assert DEFAULT_EPSILONS == (5, 2.5, 1.25, 0.6, 0.3, 0.15, 0.075, 0.035, 0.015)
    cfg = ExperimentConfig()
    assert len(cfg.seeds) == 10 and cfg.train_frac == 0.8 and cfg.split == "per_seed"


@pytest.fixture(scope="module")
def small_data():
    return {"syn": (gaussian_with_uniform_outliers(seed=1, n_inliers=60, n_outliers=8), 8)}


def test_sweep_record_arity(small_data):
    cfg = ExperimentConfig(k=(3,), b=(2, 3), epsilon=(1.0,), seeds=(0, 1, 2), split="fixed")
    recs = sweep(small_data, cfg)
    by_algo = {}
    for r in recs:
        by_algo.setdefault(r.algorithm, []).append(r)
    assert len(by_algo["knn"]) == 1 and by_algo["knn"][0].seed is None
    assert len(by_algo["grid_knn"]) == 2
    assert len(by_algo["dp_grid_wknn"]) == 6
    for r in recs:
        assert 0 <= r.auroc <= 1 and 0 <= r.ap <= 1 and 0 <= r.p_at_n <= 1
    stats = summarize(recs)
    key = next(k for k in stats if k[1] == "dp_grid_knn" and k[3] == 2)
    vals = [r.auroc for r in recs if r.group == key]
    assert stats[key]["auroc"][0] == pytest.approx(np.mean(vals))
    assert stats[key]["auroc"][1] == pytest.approx(np.std(vals, ddof=1))


def test_per_seed_split_scores_nonprivate_per_seed(small_data):
    cfg = ExperimentConfig(algorithms=("knn", "dp_grid_knn"), k=(3,), b=(2,), epsilon=(1.0,),
                           seeds=(0, 1, 2))
    recs = sweep(small_data, cfg)
    assert [r.seed for r in recs if r.algorithm == "knn"] == [0, 1, 2]
    assert [r.seed for r in recs if r.algorithm == "dp_grid_knn"] == [0, 1, 2]


def test_sweep_deterministic_and_worker_independent(small_data):
    cfg = ExperimentConfig(k=(3, 5), b=(2, 4), epsilon=(2.0, 0.5), seeds=(0, 1))
    a = sweep(small_data, cfg)
    b = sweep(small_data, cfg)
    cfg.workers = 2
    c = sweep(small_data, cfg)
    assert a == b == c


def test_sweep_reports_failing_combination():
    data = {"tiny": (toy(10, 2), 2)}
    with pytest.raises(ValidationError, match="tiny"):
        sweep(data, ExperimentConfig(algorithms=("knn",), k=(50,), seeds=(0,)))


@pytest.mark.parametrize("kw", [dict(algorithms=("nope",)), dict(split="x"),
                                dict(epsilon=(0.0,)), dict(k=())])
def test_config_validation(kw):
    with pytest.raises(ValidationError):
        ExperimentConfig(**kw).validate()
