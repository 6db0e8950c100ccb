from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from repcx.complexity import (
    loo_nn_error,
    loo_nn_predict,
    loo_predictions,
    squared_distance,
    subsample,
    subset_mean_complexity,
)
from repcx.errors import DimensionError, InsufficientDataError, ParameterError
from repcx.pointset import LabeledPointSet

from oracles import loo_brute_predictions, subset_mean_brute


def pset(points, labels):
    return LabeledPointSet(np.asarray(points, dtype=np.float32), np.asarray(labels))


# ---------------------------------------------------------------------------
# squared_distance
# ---------------------------------------------------------------------------

def test_squared_distance_identity():
    a = np.array([1.5, -2.0, 3.25])
    assert squared_distance(a, a) == 0.0


def test_squared_distance_3_4_5():
    assert squared_distance([0.0, 0.0], [3.0, 4.0]) == 25.0


def test_squared_distance_length_mismatch():
    with pytest.raises(DimensionError):
        squared_distance([1.0], [1.0, 2.0])


def test_squared_distance_vs_compensated_sum():
    g = np.random.default_rng(11)
    for _ in range(20):
        a = g.standard_normal(120).astype(np.float32)
        b = g.standard_normal(120).astype(np.float32)
        got = squared_distance(a, b)
        want = math.fsum((float(x) - float(y)) ** 2 for x, y in zip(a, b))
        assert got == pytest.approx(want, rel=1e-12)


@settings(deadline=None, max_examples=50)
@given(
    st.lists(st.floats(-100, 100), min_size=1, max_size=32),
    st.integers(0, 2**16),
)
def test_squared_distance_nonnegative_symmetric(vals, seed):
    a = np.array(vals)
    b = np.random.default_rng(seed).uniform(-100, 100, len(vals))
    d = squared_distance(a, b)
    assert d >= 0.0
    assert d == squared_distance(b, a)


# ---------------------------------------------------------------------------
# loo_nn_predict
# ---------------------------------------------------------------------------

def test_predict_nearest_wins():
    s = pset([[0.0], [1.0], [2.5]], [0, 0, 1])
    # distances from point 2: 6.25 and 2.25 -> index 1 is nearest
    assert loo_nn_predict(s, 2) == 0


def test_predict_tie_lowest_index():
    s = pset([[0.0], [1.0], [2.0]], [0, 1, 0])
    # from point 1 both neighbors sit at distance 1; index 0 wins
    assert loo_nn_predict(s, 1) == 0


def test_predict_duplicate_points():
    s = pset([[3.0, 3.0], [3.0, 3.0]], [4, 4])
    assert loo_nn_predict(s, 0) == 4


def test_predict_errors():
    s = pset([[0.0]], [1])
    with pytest.raises(InsufficientDataError):
        loo_nn_predict(s, 0)
    s2 = pset([[0.0], [1.0]], [0, 1])
    with pytest.raises(ParameterError):
        loo_nn_predict(s2, 2)


def test_predict_matches_engine(any_backend, rng):
    pts = rng.random((60, 5), dtype=np.float32)
    labels = rng.integers(0, 4, 60)
    s = pset(pts, labels)
    preds = loo_predictions(s.points, s.labels)
    for i in range(s.n):
        assert loo_nn_predict(s, i) == preds[i]


# ---------------------------------------------------------------------------
# loo_nn_error
# ---------------------------------------------------------------------------

def test_error_two_points_opposite_labels(any_backend):
    est = loo_nn_error(pset([[0.0], [1.0]], [0, 1]))
    assert est.value == 1.0
    assert est.subset_count == 1
    assert est.subset_size == 2
    assert est.per_subset == (1.0,)
    assert est.dropped_tail == 0


def test_error_single_class_is_zero(any_backend, rng):
    pts = rng.random((30, 3), dtype=np.float32)
    assert loo_nn_error(pset(pts, np.zeros(30, dtype=np.int64))).value == 0.0


def test_error_requires_two_points():
    with pytest.raises(InsufficientDataError):
        loo_nn_error(pset(np.zeros((1, 2)), [0]))


def test_error_matches_brute_force_oracle(any_backend):
    g = np.random.default_rng(99)
    pts = g.random((200, 8), dtype=np.float32)
    labels = g.integers(0, 2, 200)
    s = pset(pts, labels)
    preds = loo_predictions(s.points, s.labels)
    want = loo_brute_predictions(s.points, s.labels)
    assert np.array_equal(preds, want)
    est = loo_nn_error(s)
    assert est.value == int((want != s.labels).sum()) / 200


@pytest.mark.parametrize(
    "n,d,classes",
    [(2, 1, 2), (7, 1, 3), (25, 2, 5), (64, 33, 4), (120, 300, 10), (50, 3, 2)],
)
def test_engine_vs_oracle_shapes(any_backend, n, d, classes):
    g = np.random.default_rng(n * 1000 + d)
    pts = (g.random((n, d)) * 4 - 2).astype(np.float32)
    labels = g.integers(0, classes, n)
    # plant duplicates so the tie rule is exercised
    if n >= 6:
        pts[3] = pts[1]
        pts[5] = pts[0]
    got = loo_predictions(pts, labels)
    want = loo_brute_predictions(pts, labels)
    assert np.array_equal(got, want)


def test_value_granularity(any_backend, rng):
    for n in (2, 5, 17):
        pts = rng.random((n, 3), dtype=np.float32)
        labels = rng.integers(0, 3, n)
        v = loo_nn_error(pset(pts, labels)).value
        assert 0.0 <= v <= 1.0
        assert v * n == round(v * n)  # multiple of 1/n


def test_scale_translation_invariance(any_backend, rng):
    pts = rng.random((40, 6), dtype=np.float32)
    labels = rng.integers(0, 3, 40)
    base = loo_nn_error(pset(pts, labels)).value
    for c in (0.5, 3.0):
        t = rng.standard_normal(6).astype(np.float32)
        moved = (pts * np.float32(c) + t).astype(np.float32)
        assert loo_nn_error(pset(moved, labels)).value == base


def test_duplicate_point_law(any_backend, rng):
    pts = rng.random((20, 4), dtype=np.float32)
    labels = rng.integers(0, 3, 20)
    i = 7
    pts2 = np.vstack([pts, pts[i : i + 1]])
    labels2 = np.append(labels, labels[i])
    preds = loo_predictions(pts2, labels2)
    assert preds[i] == labels[i]
    assert preds[20] == labels[i]


def test_permutation_invariance_without_ties(any_backend, rng):
    pts = rng.random((50, 5), dtype=np.float32)
    labels = rng.integers(0, 4, 50)
    base = loo_nn_error(pset(pts, labels)).value
    perm = rng.permutation(50)
    assert loo_nn_error(pset(pts[perm], labels[perm])).value == base


def test_all_identical_points_tie_rule(any_backend):
    # every query resolves to the lowest other index
    pts = np.ones((10, 3), dtype=np.float32)
    labels = np.array([2, 5, 2, 2, 1, 2, 2, 2, 2, 2], dtype=np.int64)
    preds = loo_predictions(pts, labels)
    want = np.full(10, labels[0])
    want[0] = labels[1]
    assert np.array_equal(preds, want)


def test_zero_dim_points(any_backend):
    # d = 0: all distances are zero, lowest index wins everywhere
    pts = np.zeros((4, 0), dtype=np.float32)
    labels = np.array([3, 1, 3, 3], dtype=np.int64)
    preds = loo_predictions(pts, labels)
    assert np.array_equal(preds, [1, 3, 3, 3])


# ---------------------------------------------------------------------------
# subset mean
# ---------------------------------------------------------------------------

def test_subset_counting_and_tail(any_backend):
    g = np.random.default_rng(5)
    pts = g.random((25, 4), dtype=np.float32)
    labels = g.integers(0, 2, 25)
    est = subset_mean_complexity(pset(pts, labels), 10)
    assert est.subset_count == 2
    assert est.dropped_tail == 5
    assert est.n_points == 25
    want_value, want_per, want_tail = subset_mean_brute(pts, labels, 10)
    assert est.per_subset == tuple(want_per)
    assert est.value == want_value
    assert est.dropped_tail == want_tail


def test_subset_divides_evenly(any_backend):
    g = np.random.default_rng(6)
    pts = g.random((60, 3), dtype=np.float32)
    labels = g.integers(0, 3, 60)
    est = subset_mean_complexity(pset(pts, labels), 10)
    assert est.subset_count == 6
    assert est.dropped_tail == 0
    assert est.value == sum(est.per_subset) / 6


def test_subset_collapses_to_plain_loo(any_backend, rng):
    pts = rng.random((12, 4), dtype=np.float32)
    labels = rng.integers(0, 2, 12)
    s = pset(pts, labels)
    assert subset_mean_complexity(s, 12) == loo_nn_error(s)
    assert subset_mean_complexity(s, 40) == loo_nn_error(s)


def test_subset_size_validation():
    s = pset(np.zeros((4, 1)), [0, 0, 1, 1])
    with pytest.raises(ParameterError):
        subset_mean_complexity(s, 1)


def test_value_is_mean_of_per_subset(any_backend, rng):
    pts = rng.random((47, 2), dtype=np.float32)
    labels = rng.integers(0, 2, 47)
    est = subset_mean_complexity(pset(pts, labels), 10)
    assert est.value == sum(est.per_subset) / est.subset_count
    for v in est.per_subset:
        assert v * est.subset_size == round(v * est.subset_size)


# ---------------------------------------------------------------------------
# subsample
# ---------------------------------------------------------------------------

def test_subsample_full_is_identity(rng):
    pts = rng.random((30, 2), dtype=np.float32)
    labels = rng.integers(0, 2, 30)
    s = pset(pts, labels)
    out = subsample(s, 30, seed=9)
    assert np.array_equal(out.points, s.points)
    assert np.array_equal(out.labels, s.labels)


def test_subsample_empty():
    s = pset(np.zeros((5, 2)), [0, 1, 0, 1, 0])
    assert subsample(s, 0, seed=1).n == 0


def test_subsample_deterministic_and_sorted(rng):
    pts = rng.random((1000, 2), dtype=np.float32)
    labels = rng.integers(0, 2, 1000)
    s = pset(pts, labels)
    a = subsample(s, 100, seed=42)
    b = subsample(s, 100, seed=42)
    assert np.array_equal(a.points, b.points)
    assert np.array_equal(a.labels, b.labels)
    # stored order preserved means selected rows appear in original order
    idx = [np.flatnonzero((pts == row).all(axis=1))[0] for row in a.points[:20]]
    assert idx == sorted(idx)
    c = subsample(s, 100, seed=43)
    assert not np.array_equal(a.points, c.points)


def test_subsample_range_check():
    s = pset(np.zeros((3, 1)), [0, 1, 0])
    with pytest.raises(ParameterError):
        subsample(s, 4, seed=0)


# ---------------------------------------------------------------------------
# determinism
# ---------------------------------------------------------------------------

def test_thread_count_does_not_change_results(rng):
    from repcx import backend

    pts = rng.random((300, 16), dtype=np.float32)
    labels = rng.integers(0, 5, 300)
    s = pset(pts, labels)
    results = []
    for n in (1, 2):
        backend.configure_threads(n)
        results.append(loo_nn_error(s))
    backend.configure_threads()
    assert results[0] == results[1]
