"""Per-query local SVM prediction and the comparison baselines."""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .dataset import LabeledDataset
from .errors import DegenerateProblemError, InsufficientPointsError, InvalidSpecError
from .kernels import KernelSpec
from .solver import DEFAULT_MAX_EPOCHS, LocalProblem, SolverResult, solve, solve_signed
from .spatial import IndexHandle, distances

MAX_FEATURES = 10 ** 6

EMPTY_BALL_FALLBACK = "empty_ball_fallback"
NOT_CONVERGED = "not_converged"
SINGLE_CLASS_SHORTCUT = "single_class_shortcut"
ZERO_BANDWIDTH_GROWN = "zero_bandwidth_grown"
TIE = "tie"


def sgn(v: float) -> int:
    return 1 if v >= 0 else -1


def _monomials(d: int, p: int):
    for deg in range(1, p + 1):
        yield from itertools.combinations_with_replacement(range(d), deg)


def poly_map(x, p: int) -> np.ndarray:
    """All monomials of total degree 1..p, graded then lexicographic.

    Works on a single point ``(d,)`` or a stack ``(m, d)``.  The constant
    monomial is left out; callers append the bias coordinate themselves.
    """
    if not isinstance(p, (int, np.integer)) or p < 1:
        raise InvalidSpecError(f"feature degree must be a positive integer, got {p!r}")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    d = X.shape[1]
    if math.comb(d + p, p) > MAX_FEATURES:
        raise InvalidSpecError(f"degree {p} in dimension {d} gives too many monomials")
    if p == 1:
        out = X.copy()
    else:
        cols = [np.prod(X[:, list(c)], axis=1) for c in _monomials(d, p)]
        out = np.stack(cols, axis=1)
    return out[0] if single else out


def augment(x, p: int = 1) -> np.ndarray:
    """``(poly_map(x), 1)`` for one point or a stack of points."""
    f = poly_map(x, p)
    if f.ndim == 1:
        return np.append(f, 1.0)
    return np.hstack([f, np.ones((f.shape[0], 1))])


@dataclass(frozen=True)
class FixedBandwidth:
    kernel: KernelSpec


@dataclass(frozen=True)
class KnnBandwidth:
    """Bandwidth set to the distance of the k-th nearest training point."""

    k: int
    family: str = "rectangular"

    def __post_init__(self):
        if self.k < 1:
            raise InvalidSpecError("k must be at least 1")


@dataclass(frozen=True)
class EmptyBallPolicy:
    kind: str = "grow"
    max_doublings: int = 10
    min_points: int = 1

    def __post_init__(self):
        if self.kind not in ("abstain", "majority", "grow"):
            raise InvalidSpecError(f"unknown empty-ball policy {self.kind!r}")
        if self.max_doublings < 1 or self.min_points < 1:
            raise InvalidSpecError("grow parameters must be positive")


@dataclass(frozen=True)
class LLSVMConfig:
    bandwidth: Union[FixedBandwidth, KnnBandwidth]
    lam: float
    degree: int = 1
    tol: float | None = None
    max_epochs: int = DEFAULT_MAX_EPOCHS
    empty_ball: EmptyBallPolicy = field(default_factory=EmptyBallPolicy)
    shortcut: bool = True

    def __post_init__(self):
        if not (self.lam > 0):
            raise InvalidSpecError(f"lambda must be positive, got {self.lam!r}")
        if self.degree < 1:
            raise InvalidSpecError("feature degree must be at least 1")


@dataclass(frozen=True)
class Prediction:
    label: int
    decision_value: float
    local_count: int
    effective_bandwidth: float
    flags: frozenset = frozenset()
    result: SolverResult | None = field(default=None, compare=False, repr=False)


def resolve_bandwidth(config: LLSVMConfig, index: IndexHandle, x0) -> tuple[float, KernelSpec, set]:
    bw = config.bandwidth
    if isinstance(bw, FixedBandwidth):
        return bw.kernel.bandwidth, bw.kernel, set()
    n = index.count
    if bw.k > n:
        raise InsufficientPointsError(f"k={bw.k} exceeds the {n} training points")
    flags = set()
    sigma = index.kth_nn_distance(x0, bw.k)
    if sigma == 0.0:
        dist = distances(index.dataset.points, np.asarray(x0, dtype=float))
        positive = dist[dist > 0]
        if positive.size == 0:
            raise DegenerateProblemError("every training point coincides with the query")
        sigma = float(positive.min())
        flags.add(ZERO_BANDWIDTH_GROWN)
    kernel = KernelSpec(bw.family, sigma, index.dataset.dim, allow_negative=True)
    return sigma, kernel, flags


@dataclass(frozen=True, eq=False)
class LocalSet:
    """Points retrieved around a query, with their smoothing weights."""

    indices: np.ndarray
    weights: np.ndarray
    kernel: KernelSpec
    flags: frozenset


def gather(dataset: LabeledDataset, index: IndexHandle, config: LLSVMConfig, x0) -> LocalSet | None:
    """Range search plus weighting, applying the grow policy if needed.

    Returns ``None`` when no usable neighbourhood exists; the caller then
    applies the remaining empty-ball policy.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    sigma, kernel, flags = resolve_bandwidth(config, index, x0)
    policy = config.empty_ball
    attempts = policy.max_doublings if policy.kind == "grow" else 0
    need = policy.min_points if policy.kind == "grow" else 1
    for step in range(attempts + 1):
        idx = index.range_query(x0, sigma)
        K = kernel.evaluate(dataset.points[idx], x0) if idx.size else np.zeros(0)
        nz = K != 0.0
        if np.count_nonzero(K > 0) >= need:
            if step:
                flags.add(EMPTY_BALL_FALLBACK)
            return LocalSet(idx[nz], K[nz], kernel, frozenset(flags))
        if step < attempts:
            sigma *= 2.0
            kernel = kernel.with_bandwidth(sigma)
    return None


def build_local_problem(
    dataset: LabeledDataset, local: LocalSet, lam: float, degree: int = 1
) -> LocalProblem:
    Xbar = augment(dataset.points[local.indices], degree)
    return LocalProblem(Xbar, dataset.labels[local.indices], local.weights, dataset.n, lam)


def _fallback(dataset: LabeledDataset, config: LLSVMConfig, sigma: float) -> Prediction:
    if config.empty_ball.kind == "abstain":
        raise DegenerateProblemError("no training point carries positive weight at the query")
    mean = float(dataset.labels.mean())
    return Prediction(sgn(mean), mean, 0, sigma, frozenset({EMPTY_BALL_FALLBACK}))


def _shortcut_safe(Xbar: np.ndarray, xbar0: np.ndarray) -> bool:
    # with all labels equal, w is a nonnegative combination of label * xbar_i,
    # so the sign of <w, xbar0> is fixed when every <xbar_i, xbar0> > 0
    return bool(np.all(Xbar @ xbar0 > 0))


def predict(dataset: LabeledDataset, index: IndexHandle, config: LLSVMConfig, x0) -> Prediction:
    """Fit the local SVM at ``x0`` and classify ``x0`` with it."""
    x0 = np.asarray(x0, dtype=float).ravel()
    local = gather(dataset, index, config, x0)
    if local is None:
        sigma, _, _ = resolve_bandwidth(config, index, x0)
        return _fallback(dataset, config, sigma)
    sigma = local.kernel.bandwidth
    flags = set(local.flags)
    xbar0 = augment(x0, config.degree)
    y = dataset.labels[local.indices]
    m = local.indices.size
    if np.all(local.weights > 0):
        problem = build_local_problem(dataset, local, config.lam, config.degree)
        if config.shortcut and np.all(y == y[0]) and _shortcut_safe(problem.augmented_points, xbar0):
            label = int(y[0])
            flags.add(SINGLE_CLASS_SHORTCUT)
            return Prediction(label, float(label), m, sigma, frozenset(flags))
        res = solve(problem, tol=config.tol, max_epochs=config.max_epochs)
    else:
        Xbar = augment(dataset.points[local.indices], config.degree)
        res = solve_signed(Xbar, y, local.weights, dataset.n, config.lam,
                           tol=config.tol, max_epochs=config.max_epochs)
    if not res.converged:
        flags.add(NOT_CONVERGED)
    dv = float(res.w @ xbar0)
    return Prediction(sgn(dv), dv, m, sigma, frozenset(flags), res)


def predict_batch(
    dataset: LabeledDataset,
    index: IndexHandle,
    config: LLSVMConfig,
    queries: Sequence,
    workers: int = 1,
) -> list[Prediction]:
    """``predict`` over many queries; output order follows input order."""
    queries = np.atleast_2d(np.asarray(queries, dtype=float))

    def one(q):
        return predict(dataset, index, config, q)

    if workers <= 1 or len(queries) <= 1:
        return [one(q) for q in queries]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, queries))


def kbr_predict(dataset: LabeledDataset, index: IndexHandle, kernel: KernelSpec, x0) -> Prediction:
    """Kernel rule: sign of the kernel-weighted label sum."""
    x0 = np.asarray(x0, dtype=float).ravel()
    idx = index.range_query(x0, kernel.bandwidth)
    K = kernel.evaluate(dataset.points[idx], x0) if idx.size else np.zeros(0)
    total = float(K @ dataset.labels[idx]) if idx.size else 0.0
    flags = frozenset({TIE}) if total == 0.0 else frozenset()
    return Prediction(sgn(total), total, int(np.count_nonzero(K)), kernel.bandwidth, flags)


def knn_predict(dataset: LabeledDataset, index: IndexHandle, k: int, x0) -> Prediction:
    idx, dist = index.knn_query(x0, k)
    votes = float(dataset.labels[idx].sum())
    flags = frozenset({TIE}) if votes == 0 else frozenset()
    return Prediction(sgn(votes), votes, k, float(dist[-1]), flags)


def train_global_linear(
    dataset: LabeledDataset,
    lam: float,
    tol: float | None = None,
    degree: int = 1,
    max_epochs: int = DEFAULT_MAX_EPOCHS,
) -> np.ndarray:
    """Ordinary L2-regularised linear SVM (all weights one, bias regularised)."""
    problem = LocalProblem(
        augment(dataset.points, degree), dataset.labels, np.ones(dataset.n), dataset.n, lam
    )
    return solve(problem, tol=tol, max_epochs=max_epochs).w


def linear_predict(w: np.ndarray, x0, degree: int = 1) -> Prediction:
    dv = float(w @ augment(np.asarray(x0, dtype=float).ravel(), degree))
    return Prediction(sgn(dv), dv, 0, math.inf)
