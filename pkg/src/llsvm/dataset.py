from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, EmptyDatasetError, InvalidProblemError


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """``n`` points in R^d with labels in {-1, +1}.

    ``radius_bound`` is ``max_i ||x_i||``.  It is always recomputed from the
    points; passing a stored value that disagrees raises.
    """

    points: np.ndarray
    labels: np.ndarray
    radius_bound: float = field(default=None)

    def __post_init__(self):
        points = np.array(self.points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        labels = np.array(self.labels, dtype=float).ravel()
        if points.ndim != 2 or points.shape[0] == 0:
            raise EmptyDatasetError("dataset must contain at least one point")
        if points.shape[1] == 0:
            raise DimensionMismatchError("points must have at least one coordinate")
        if labels.shape[0] != points.shape[0]:
            raise DimensionMismatchError(
                f"{points.shape[0]} points but {labels.shape[0]} labels"
            )
        if not np.all(np.isfinite(points)):
            raise InvalidProblemError("points must be finite")
        if not np.all((labels == 1.0) | (labels == -1.0)):
            raise InvalidProblemError("labels must be exactly -1 or +1")
        radius = float(np.sqrt(np.max(np.sum(points ** 2, axis=1))))
        if self.radius_bound is not None and not np.isclose(
            self.radius_bound, radius, rtol=1e-12, atol=0.0
        ):
            raise InvalidProblemError(
                f"stored radius bound {self.radius_bound!r} does not match {radius!r}"
            )
        points.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "radius_bound", radius)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=int)
        return LabeledDataset(self.points[idx], self.labels[idx])

    def without(self, i: int) -> "LabeledDataset":
        keep = np.ones(self.n, dtype=bool)
        keep[i] = False
        return LabeledDataset(self.points[keep], self.labels[keep])

    def majority_label(self) -> int:
        return 1 if self.labels.sum() >= 0 else -1
