import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dpknn.errors import ValidationError
from dpknn.preprocessing import (
    PreprocessParams,
    RawDataset,
    fit_preprocessor,
    inverse_transform,
    transform,
)

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def matrices(min_rows=1, max_rows=30, max_d=5):
    shape = st.tuples(st.integers(min_rows, max_rows), st.integers(1, max_d))
    return shape.flatmap(lambda s: arrays(float, s, elements=finite))


def test_one_dimensional_fit():
    params = fit_preprocessor(np.array([[1.0], [2.0], [4.0]]))
    assert params.alpha[0] == 4.0
    # unit values 0.625, 0.75, 1.0
    assert params.mean[0] == pytest.approx(0.7916666666666666, abs=1e-12)
    assert transform(params, np.array([2.0]))[0] == pytest.approx(-0.0416666666666667, abs=1e-12)


def test_test_point_clamped_to_unit_interval():
    params = fit_preprocessor(np.array([[1.0], [2.0], [4.0]]))
    # 6 maps to 1.25 before clamping
    assert transform(params, np.array([6.0]))[0] == pytest.approx(1.25 - params.mean[0])
    assert transform(params, np.array([6.0]), clamp=True)[0] == pytest.approx(1.0 - params.mean[0])
    assert transform(params, np.array([-9.0]), clamp=True)[0] == pytest.approx(-params.mean[0])


def test_all_zero_column_gets_unit_scale():
    params = fit_preprocessor(np.array([[0.0, 1.0], [0.0, -3.0]]))
    assert params.alpha.tolist() == [1.0, 3.0]
    assert np.allclose(transform(params, np.array([[0.0, 1.0]]))[0, 0], 0.0)


def test_dimension_mismatch_rejected():
    params = fit_preprocessor(np.ones((3, 2)))
    with pytest.raises(ValidationError):
        transform(params, np.ones((2, 3)))


@pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
def test_non_finite_rejected_with_location(bad):
    pts = np.ones((4, 3))
    pts[2, 1] = bad
    with pytest.raises(ValidationError, match="row 2, column 1"):
        RawDataset(pts)


def test_labels_must_be_binary():
    with pytest.raises(ValidationError):
        RawDataset(np.ones((3, 1)), np.array([0, 1, 2]))
    with pytest.raises(ValidationError):
        RawDataset(np.ones((3, 1)), np.array([0, 1]))
    assert RawDataset(np.ones((2, 1)), [1, 0]).labels.dtype == bool


def test_params_round_trip():
    params = fit_preprocessor(np.random.default_rng(1).normal(size=(20, 3)))
    back = PreprocessParams.from_dict(params.to_dict())
    assert np.array_equal(back.alpha, params.alpha) and np.array_equal(back.mean, params.mean)


@given(matrices())
@settings(max_examples=200, deadline=None)
def test_reference_lands_in_centered_cube(pts):
    params = fit_preprocessor(pts)
    z = transform(params, pts)
    lo = params.lo
    assert np.all(z >= lo - 1e-12) and np.all(z <= lo + 1 + 1e-12)
    assert np.allclose(z.mean(axis=0), 0.0, atol=1e-9)


@given(matrices(min_rows=2))
@settings(max_examples=200, deadline=None)
def test_order_preserved_per_dimension(pts):
    z = transform(fit_preprocessor(pts), pts)
    for j in range(pts.shape[1]):
        a, b = pts[:-1, j], pts[1:, j]
        za, zb = z[:-1, j], z[1:, j]
        assert np.all((a < b) <= (za <= zb))
        assert np.all((a > b) <= (za >= zb))


@given(matrices())
@settings(max_examples=200, deadline=None)
def test_inverse_round_trip(pts):
    params = fit_preprocessor(pts)
    back = inverse_transform(params, transform(params, pts))
    assert np.allclose(back, pts, rtol=1e-9, atol=1e-9 * np.abs(pts).max(initial=1.0))


@given(matrices(), arrays(float, 5, elements=finite))
@settings(max_examples=100, deadline=None)
def test_clamped_queries_stay_in_cube(pts, q):
    params = fit_preprocessor(pts)
    q = np.resize(q, params.d)
    z = transform(params, q, clamp=True)
    assert np.all(z >= params.lo - 1e-12) and np.all(z <= params.lo + 1 + 1e-12)
