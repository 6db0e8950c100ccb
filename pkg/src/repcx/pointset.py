"""Labeled point sets: the unit on which complexity is measured.

A point set is an N x D float32 matrix of flattened representation vectors
plus an integer class label per row, with optional provenance metadata
(which boundary, which split, which epoch).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError


@dataclass
class PointSetMeta:
    boundary: str | None = None
    split: str | None = None
    epoch: int | None = None


@dataclass
class LabeledPointSet:
    points: np.ndarray  # (n, d) float32
    labels: np.ndarray  # (n,) int64, values >= 0
    meta: PointSetMeta = field(default_factory=PointSetMeta)

    def __post_init__(self) -> None:
        self.points = np.ascontiguousarray(self.points, dtype=np.float32)
        if self.points.ndim != 2:
            raise ValidationError(f"points must be 2-D (n, d), got shape {self.points.shape}")
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.labels.ndim != 1:
            raise ValidationError(f"labels must be 1-D, got shape {self.labels.shape}")
        if len(self.labels) != len(self.points):
            raise ValidationError(
                f"label count {len(self.labels)} does not match point count {len(self.points)}"
            )
        if self.n > 0 and self.labels.min() < 0:
            raise ValidationError("labels must be non-negative class ids")
        if not np.isfinite(self.points).all():
            raise ValidationError("points contain non-finite values")

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.n > 0 else 0

    def take(self, indices: np.ndarray) -> "LabeledPointSet":
        """New set with the given rows, preserving metadata."""
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledPointSet(self.points[idx], self.labels[idx], self.meta)
