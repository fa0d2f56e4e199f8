import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from llsvm.classifier import (
    EMPTY_BALL_FALLBACK,
    SINGLE_CLASS_SHORTCUT,
    TIE,
    ZERO_BANDWIDTH_GROWN,
    EmptyBallPolicy,
    FixedBandwidth,
    KnnBandwidth,
    LLSVMConfig,
    kbr_predict,
    knn_predict,
    linear_predict,
    poly_map,
    predict,
    predict_batch,
    resolve_bandwidth,
    train_global_linear,
)
from llsvm.dataset import LabeledDataset
from llsvm.errors import DegenerateProblemError, InsufficientPointsError, InvalidSpecError
from llsvm.kernels import KernelSpec
from llsvm.solver import LocalProblem, solve
from llsvm.spatial import build_index
from llsvm.synthetic import gen_two_spirals, gen_uniform_1d_smooth


def ds1(x, y):
    return LabeledDataset(np.asarray(x, dtype=float)[:, None], y)


def fixed(family, sigma, lam, d=1, **kw):
    return LLSVMConfig(FixedBandwidth(KernelSpec(family, sigma, d)), lam, **kw)


def test_poly_map_examples():
    a, b = 1.5, -2.0
    np.testing.assert_array_equal(poly_map([a, b], 1), [a, b])
    np.testing.assert_allclose(poly_map([a, b], 2), [a, b, a * a, a * b, b * b])
    np.testing.assert_array_equal(poly_map([2.0], 3), [2.0, 4.0, 8.0])
    with pytest.raises(InvalidSpecError):
        poly_map([1.0] * 100, 6)
    with pytest.raises(InvalidSpecError):
        poly_map([1.0], 0)


def test_poly_map_enumeration_oracle():
    x = np.array([2.0, 3.0, 5.0])
    out = poly_map(x, 3)
    expected = []
    for deg in (1, 2, 3):
        for i in range(3):
            for j in range(i, 3) if deg >= 2 else [None]:
                for k in range(j, 3) if deg == 3 else [None]:
                    idx = [t for t in (i, j, k) if t is not None]
                    expected.append(np.prod(x[idx]))
    np.testing.assert_allclose(out, expected)


def test_resolve_bandwidth():
    ds = ds1([0.0, 1.0, 4.0], [1, -1, 1])
    idx = build_index(ds)
    cfg = fixed("epanechnikov", 0.3, 0.1)
    assert resolve_bandwidth(cfg, idx, [0.0])[0] == 0.3
    knn = LLSVMConfig(KnnBandwidth(2), 0.1)
    sigma, kernel, flags = resolve_bandwidth(knn, idx, [0.0])
    assert sigma == 1.0 and kernel.family == "rectangular" and not flags
    with pytest.raises(InsufficientPointsError):
        resolve_bandwidth(LLSVMConfig(KnnBandwidth(4), 0.1), idx, [0.0])


def test_resolve_bandwidth_brute_force():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(200, 2))
    ds = LabeledDataset(pts, np.ones(200))
    idx = build_index(ds)
    cfg = LLSVMConfig(KnnBandwidth(3), 0.1)
    for _ in range(20):
        q = rng.normal(size=2)
        d = np.sort(np.sqrt(((pts - q) ** 2).sum(1)))
        assert resolve_bandwidth(cfg, idx, q)[0] == pytest.approx(d[2], rel=1e-14)


def test_zero_knn_distance_grows():
    ds = ds1([0.0, 0.0, 0.0, 1.0, 2.0], [1, 1, -1, -1, 1])
    idx = build_index(ds)
    sigma, _, flags = resolve_bandwidth(LLSVMConfig(KnnBandwidth(2), 0.1), idx, [0.0])
    assert sigma == 1.0 and ZERO_BANDWIDTH_GROWN in flags


def test_one_class_ball_example():
    ds = ds1([-1.0, 1.0], [-1, 1])
    p = predict(ds, build_index(ds), fixed("rectangular", 0.5, 0.1), [0.9])
    assert p.label == 1 and p.local_count == 1
    assert SINGLE_CLASS_SHORTCUT in p.flags
    q = predict(ds, build_index(ds), fixed("rectangular", 0.5, 0.1, shortcut=False), [0.9])
    assert q.label == 1 and SINGLE_CLASS_SHORTCUT not in q.flags


def test_two_point_symmetric_example():
    # rectangular sigma=2 gives K = 1/4; lambda = 0.1/4 is the unit-weight problem
    # with lambda 0.1, whose minimiser is w = (1, 0)
    ds = ds1([-1.0, 1.0], [-1, 1])
    p = predict(ds, build_index(ds), fixed("rectangular", 2.0, 0.025), [0.5])
    assert p.label == 1
    assert p.result.w[0] == pytest.approx(1.0, abs=1e-6)
    assert abs(p.result.w[1]) <= 1e-8
    assert p.decision_value == pytest.approx(0.5, abs=1e-6)


def test_empty_ball_policies():
    x = np.concatenate([np.linspace(-1, -0.5, 6), np.linspace(0.5, 1, 4)])
    y = np.array([1] * 6 + [-1] * 4)
    ds = ds1(x, y)
    idx = build_index(ds)
    maj = fixed("epanechnikov", 0.1, 0.1, empty_ball=EmptyBallPolicy("majority"))
    p = predict(ds, idx, maj, [0.0])
    assert p.label == 1 and EMPTY_BALL_FALLBACK in p.flags and p.local_count == 0
    with pytest.raises(DegenerateProblemError):
        predict(ds, idx, fixed("epanechnikov", 0.1, 0.1, empty_ball=EmptyBallPolicy("abstain")), [0.0])
    grow = predict(ds, idx, fixed("epanechnikov", 0.1, 0.1), [0.0])
    assert EMPTY_BALL_FALLBACK in grow.flags and grow.local_count > 0
    assert grow.effective_bandwidth > 0.5


def test_kbr_examples():
    ds = ds1([0.1, 5.0], [1, -1])
    idx = build_index(ds)
    assert kbr_predict(ds, idx, KernelSpec("epanechnikov", 1.0, 1), [0.0]).label == 1
    tie = ds1([-0.5, 0.5], [1, -1])
    p = kbr_predict(tie, build_index(tie), KernelSpec("epanechnikov", 1.0, 1), [0.0])
    assert p.label == 1 and p.decision_value == 0.0 and TIE in p.flags
    empty = kbr_predict(ds, idx, KernelSpec("epanechnikov", 1.0, 1), [2.5])
    assert empty.label == 1 and TIE in empty.flags


def test_kbr_and_knn_brute_force():
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(100, 2))
    y = rng.choice([-1, 1], size=100)
    ds = LabeledDataset(pts, y)
    idx = build_index(ds)
    kern = KernelSpec("rectangular", 0.8, 2)
    for _ in range(30):
        q = rng.normal(size=2)
        d = np.sqrt(((pts - q) ** 2).sum(1))
        vote = sum(yi / (np.pi * 0.64) for yi, di in zip(y, d) if di <= 0.8)
        assert kbr_predict(ds, idx, kern, q).label == (1 if vote >= 0 else -1)
        order = sorted(range(100), key=lambda i: (d[i], i))[:5]
        maj = sum(y[i] for i in order)
        assert knn_predict(ds, idx, 5, q).label == (1 if maj >= 0 else -1)


def test_knn_examples():
    ds = ds1([0.0, 1.0, 3.0], [-1, 1, 1])
    idx = build_index(ds)
    assert knn_predict(ds, idx, 1, [0.2]).label == -1
    p = knn_predict(ds, idx, 2, [0.2])
    assert p.label == 1 and TIE in p.flags
    with pytest.raises(InsufficientPointsError):
        knn_predict(ds, idx, 4, [0.0])


def test_global_linear_examples():
    ds = ds1([-1.0, 1.0], [-1, 1])
    w = train_global_linear(ds, 1e-3)
    assert w[0] > 0 and abs(w[1]) <= 1e-6
    rng = np.random.default_rng(2)
    allpos = LabeledDataset(rng.normal(size=(30, 2)), np.ones(30))
    w = train_global_linear(allpos, 0.1)
    for q in rng.normal(size=(50, 2)) * 0.5:
        p = linear_predict(w, q)
        assert p.label == 1 and p.decision_value >= 0


def test_global_linear_equals_covering_rectangular():
    ds, _ = gen_uniform_1d_smooth(200, seed=3)
    lam = 0.05
    sigma = 10.0
    w = train_global_linear(ds, lam)
    # every weight is 1/(2 sigma); rescale lambda by the same factor
    cfg = fixed("rectangular", sigma, lam / (2 * sigma), shortcut=False)
    idx = build_index(ds)
    for x0 in np.linspace(-0.9, 0.9, 7):
        p = predict(ds, idx, cfg, [x0])
        assert np.linalg.norm(p.result.w - w) <= 1e-3
        if abs(linear_predict(w, [x0]).decision_value) > 1e-3:
            assert p.label == linear_predict(w, [x0]).label


def test_joint_scaling_invariance():
    ds, _ = gen_uniform_1d_smooth(300, seed=4)
    idx = build_index(ds)
    a = fixed("epanechnikov", 0.4, 0.02, shortcut=False)
    for x0 in (-0.5, 0.1, 0.6):
        base = predict(ds, idx, a, [x0])
        kern = KernelSpec("epanechnikov", 0.4, 1)
        loc = idx.range_query([x0], 0.4)
        K = kern.evaluate(ds.points[loc], np.array([x0]))
        keep = K > 0
        X = np.column_stack([ds.points[loc][keep], np.ones(keep.sum())])
        for c in (0.1, 7.0):
            res = solve(LocalProblem(X, ds.labels[loc][keep], c * K[keep], ds.n, c * 0.02),
                        tol=c * 1e-8 * max(1, K.sum() / ds.n))
            assert np.sign(res.w @ [x0, 1]) == np.sign(base.decision_value)


def test_p1_pipeline_matches_hand_rolled():
    ds, _ = gen_uniform_1d_smooth(400, seed=5)
    idx = build_index(ds)
    cfg = fixed("biweight", 0.5, 0.01, shortcut=False)
    kern = KernelSpec("biweight", 0.5, 1)
    for x0 in (-0.7, -0.2, 0.3, 0.8):
        x0v = np.array([x0])
        K = kern.evaluate(ds.points, x0v)
        keep = K > 0
        X = np.column_stack([ds.points[keep, 0], np.ones(keep.sum())])
        res = solve(LocalProblem(X, ds.labels[keep], K[keep], ds.n, 0.01))
        p = predict(ds, idx, cfg, x0v)
        np.testing.assert_array_equal(p.result.w, res.w)


def test_locality_far_points():
    # moving points that stay outside the ball leaves the prediction bitwise unchanged
    ds, _ = gen_uniform_1d_smooth(300, seed=6)
    x = ds.points[:, 0].copy()
    far = np.abs(x - 0.5) > 0.3
    moved = x.copy()
    moved[far] = np.where(x[far] < 0.5, x[far] - 5.0, x[far] + 5.0)
    other = ds1(moved, ds.labels)
    cfg = fixed("epanechnikov", 0.3, 0.01, shortcut=False)
    a = predict(ds, build_index(ds), cfg, [0.5])
    b = predict(other, build_index(other), cfg, [0.5])
    assert a.decision_value == b.decision_value
    np.testing.assert_array_equal(a.result.w, b.result.w)


def test_batch_matches_sequential():
    ds = gen_two_spirals(400, seed=8)
    idx = build_index(ds)
    cfg = LLSVMConfig(KnnBandwidth(15), 1e-3)
    rng = np.random.default_rng(9)
    queries = rng.uniform(-1.5, 1.5, size=(100, 2))
    seq = [predict(ds, idx, cfg, q) for q in queries]
    for workers in (1, 8):
        batch = predict_batch(ds, idx, cfg, queries, workers=workers)
        assert [p.label for p in batch] == [p.label for p in seq]
        assert [p.decision_value for p in batch] == [p.decision_value for p in seq]
    one = predict_batch(ds, idx, cfg, queries[:1])
    assert one[0] == seq[0]


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_shortcut_soundness(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 3))
    n = int(rng.integers(5, 60))
    pts = rng.normal(size=(n, d))
    label = rng.choice([-1, 1])
    ds = LabeledDataset(pts, np.full(n, label))
    idx = build_index(ds)
    sigma = float(rng.uniform(0.3, 3.0))
    fam = rng.choice(["epanechnikov", "triangle", "biweight", "rectangular"])
    on = LLSVMConfig(FixedBandwidth(KernelSpec(fam, sigma, d)), float(10 ** rng.uniform(-3, 0)))
    off = LLSVMConfig(on.bandwidth, on.lam, shortcut=False)
    q = pts[int(rng.integers(n))] + rng.normal(size=d) * 0.1
    a, b = predict(ds, idx, on, q), predict(ds, idx, off, q)
    assert a.label == b.label
