import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from llsvm.dataset import LabeledDataset
from llsvm.errors import (
    DimensionMismatchError,
    EmptyDatasetError,
    InsufficientPointsError,
    InvalidProblemError,
    InvalidRadiusError,
)
from llsvm.spatial import build_index


def make(points):
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    return LabeledDataset(points, np.ones(len(points)))


def scan_range(points, x0, r):
    return np.array([i for i, p in enumerate(points) if np.linalg.norm(p - x0) <= r], dtype=int)


def scan_knn(points, x0, k):
    d = [float(np.linalg.norm(p - x0)) for p in points]
    order = sorted(range(len(points)), key=lambda i: (d[i], i))[:k]
    return np.array(order), np.array([d[i] for i in order])


def test_dataset_validation():
    ds = LabeledDataset([[0.5, -0.2], [1.0, 0.0]], [1, -1])
    assert (ds.n, ds.dim, ds.radius_bound) == (2, 2, 1.0)
    with pytest.raises(InvalidProblemError):
        LabeledDataset([[0.0]], [0])
    with pytest.raises(InvalidProblemError):
        LabeledDataset([[3.0, 4.0]], [1], radius_bound=4.0)
    assert LabeledDataset([[3.0, 4.0]], [1], radius_bound=5.0).radius_bound == 5.0
    with pytest.raises(EmptyDatasetError):
        LabeledDataset(np.zeros((0, 2)), [])
    with pytest.raises(InvalidProblemError):
        LabeledDataset([[np.nan]], [1])


def test_build_examples():
    assert build_index(make([[0, 0], [1, 1], [2, 0]])).count == 3
    assert build_index(make([[1, 1], [1, 1], [1, 1]])).count == 3


def test_range_examples():
    idx = build_index(make([-1.0, 0.0, 1.0]))
    assert idx.range_query([0.0], 0.5).tolist() == [1]
    # closed ball
    assert idx.range_query([0.0], 1.0).tolist() == [0, 1, 2]
    with pytest.raises(InvalidRadiusError):
        idx.range_query([0.0], 0.0)
    with pytest.raises(InvalidRadiusError):
        idx.range_query([0.0], -1.0)
    with pytest.raises(DimensionMismatchError):
        idx.range_query([0.0, 1.0], 1.0)


def test_query_at_training_point():
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(300, 2))
    idx = build_index(make(pts))
    for i in (0, 17, 299):
        assert i in idx.range_query(pts[i], 1e-12)


def test_knn_examples():
    idx = build_index(make([0.0, 1.0, 2.0]))
    i, d = idx.knn_query([0.1], 1)
    assert i.tolist() == [0] and d[0] == pytest.approx(0.1)
    i, d = idx.knn_query([0.1], 3)
    assert i.tolist() == [0, 1, 2] and np.all(np.diff(d) >= 0)
    with pytest.raises(InsufficientPointsError):
        idx.knn_query([0.0], 4)


def test_knn_ties_by_index():
    # integer grid, many points at identical distances, tree path in use
    g = np.arange(-5, 5)
    pts = np.array([(a, b) for a in g for b in g], dtype=float)
    idx = build_index(make(pts))
    assert idx.uses_tree
    for k in (1, 4, 5, 9, 13, 50):
        got_i, got_d = idx.knn_query([0.0, 0.0], k)
        exp_i, exp_d = scan_knn(pts, np.zeros(2), k)
        assert got_i.tolist() == exp_i.tolist()
        np.testing.assert_array_equal(got_d, exp_d)


def test_boundary_points_tree():
    g = np.arange(-6, 7)
    pts = np.array([(a, b) for a in g for b in g], dtype=float)
    idx = build_index(make(pts))
    got = idx.range_query([0.0, 0.0], 5.0)
    assert got.tolist() == scan_range(pts, np.zeros(2), 5.0).tolist()
    # (3, 4) and friends sit exactly on the circle of radius 5
    assert any(np.array_equal(pts[i], [3.0, 4.0]) for i in got)


def test_large_3d_against_scan():
    rng = np.random.default_rng(3)
    pts = rng.random((10_000, 3))
    idx = build_index(make(pts))
    for _ in range(100):
        x0, r = rng.random(3), rng.uniform(0.01, 0.2)
        d = np.sqrt(((pts - x0) ** 2).sum(1))
        assert idx.range_query(x0, r).tolist() == np.flatnonzero(d <= r).tolist()


@settings(max_examples=50, deadline=None)
@given(
    n=st.integers(1, 400),
    d=st.integers(1, 8),
    seed=st.integers(0, 2 ** 32 - 1),
    dup=st.booleans(),
)
def test_oracle_equivalence(n, d, seed, dup):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(n, d))
    if dup and n > 3:
        pts[1:3] = pts[0]
    idx = build_index(make(pts), leaf_size=int(rng.integers(1, 32)))
    for _ in range(5):
        x0 = rng.normal(size=d)
        r = float(rng.uniform(0.1, 3.0))
        assert idx.range_query(x0, r).tolist() == scan_range(pts, x0, r).tolist()
        k = int(rng.integers(1, n + 1))
        gi, gd = idx.knn_query(x0, k)
        ei, ed = scan_knn(pts, x0, k)
        assert gi.tolist() == ei.tolist()
        np.testing.assert_allclose(gd, ed, rtol=1e-14)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), k=st.integers(1, 50))
def test_nesting_and_kth_radius(seed, k):
    rng = np.random.default_rng(seed)
    pts = rng.random((200, 2))
    idx = build_index(make(pts))
    x0 = rng.random(2)
    r1, r2 = sorted(rng.uniform(0.05, 0.6, size=2))
    assert set(idx.range_query(x0, r1)) <= set(idx.range_query(x0, r2))
    kth = idx.kth_nn_distance(x0, k)
    assert idx.range_query(x0, kth).size >= k
    assert idx.range_query(x0, kth * (1 - 1e-9)).size < k


def test_dataset_not_mutated():
    pts = np.random.default_rng(0).normal(size=(100, 2))
    ds = make(pts)
    before = ds.points.copy()
    idx = build_index(ds)
    idx.range_query([0, 0], 1.0)
    idx.knn_query([0, 0], 10)
    np.testing.assert_array_equal(ds.points, before)
    assert not ds.points.flags.writeable
