"""Exact Euclidean range and k-nearest-neighbour queries.

A :class:`scipy.spatial.cKDTree` prunes candidates; every answer is then
re-filtered with the same double-precision distance formula a linear scan
uses, so results are identical to brute force including points that lie
exactly on the query sphere.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .dataset import LabeledDataset
from .errors import (
    DimensionMismatchError,
    EmptyDatasetError,
    InsufficientPointsError,
    InvalidRadiusError,
)

LINEAR_SCAN_BELOW = 64
# relative widening of the tree's candidate radius before the exact filter
_CANDIDATE_SLACK = 1e-9


def distances(points: np.ndarray, x0: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum((points - x0) ** 2, axis=1))


class IndexHandle:
    """Read-only spatial index over a :class:`LabeledDataset`."""

    def __init__(self, dataset: LabeledDataset, leaf_size: int = 16):
        if dataset is None or dataset.n == 0:
            raise EmptyDatasetError("cannot index an empty dataset")
        if leaf_size < 1:
            raise ValueError("leaf_size must be positive")
        self.dataset = dataset
        self.leaf_size = leaf_size
        self._tree = None
        if dataset.n >= LINEAR_SCAN_BELOW:
            self._tree = cKDTree(dataset.points, leafsize=leaf_size)

    @property
    def count(self) -> int:
        return self.dataset.n

    @property
    def uses_tree(self) -> bool:
        return self._tree is not None

    def _check_point(self, x0) -> np.ndarray:
        x0 = np.asarray(x0, dtype=float).ravel()
        if x0.shape != (self.dataset.dim,):
            raise DimensionMismatchError(
                f"query has dimension {x0.shape[0]}, index has {self.dataset.dim}"
            )
        return x0

    def range_query(self, x0, r: float) -> np.ndarray:
        """Indices ``i`` with ``||x_i - x0|| <= r`` in ascending order."""
        if not (np.isfinite(r) and r > 0):
            raise InvalidRadiusError(f"radius must be positive, got {r!r}")
        x0 = self._check_point(x0)
        pts = self.dataset.points
        if self._tree is None:
            cand = np.arange(self.dataset.n)
        else:
            cand = np.asarray(
                self._tree.query_ball_point(x0, r * (1 + _CANDIDATE_SLACK) + 1e-300),
                dtype=int,
            )
            cand.sort()
        keep = distances(pts[cand], x0) <= r
        return cand[keep]

    def knn_query(self, x0, k: int) -> tuple[np.ndarray, np.ndarray]:
        """The ``k`` closest indices and their distances.

        Distances are nondecreasing; equal distances are ordered by index.
        """
        n = self.dataset.n
        if k < 1:
            raise InsufficientPointsError(f"k must be at least 1, got {k}")
        if k > n:
            raise InsufficientPointsError(f"k={k} exceeds the {n} indexed points")
        x0 = self._check_point(x0)
        pts = self.dataset.points
        if self._tree is None:
            cand = np.arange(n)
        else:
            d, _ = self._tree.query(x0, k=[k])
            kth = float(d[0])
            # pull in every point tied with (or roundoff-close to) the k-th distance
            cand = np.asarray(
                self._tree.query_ball_point(x0, kth * (1 + _CANDIDATE_SLACK) + 1e-300),
                dtype=int,
            )
        dist = distances(pts[cand], x0)
        order = np.lexsort((cand, dist))[:k]
        if order.shape[0] < k:  # pragma: no cover - guarded by the slack above
            raise RuntimeError("kd-tree candidate set smaller than k")
        return cand[order], dist[order]

    def kth_nn_distance(self, x0, k: int) -> float:
        _, d = self.knn_query(x0, k)
        return float(d[-1])


def build_index(dataset: LabeledDataset, leaf_size: int = 16) -> IndexHandle:
    return IndexHandle(dataset, leaf_size=leaf_size)
