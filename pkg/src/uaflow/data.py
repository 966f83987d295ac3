"""Containers for manifold-valued images and label dictionaries."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidArgument


@dataclass
class FeatureField:
    """Per-pixel points of one feature manifold on a ``height x width`` grid.

    ``points`` has shape ``(height * width, *point_shape)`` in row-major pixel
    order. ``meta`` carries extras such as the channel count of covariance
    descriptors.
    """

    points: np.ndarray
    manifold: str
    height: int
    width: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.shape[0] != self.height * self.width:
            raise InvalidArgument(
                f"{self.points.shape[0]} points do not fill a {self.height}x{self.width} grid")

    @property
    def size(self):
        return self.points.shape[0]

    @property
    def point_shape(self):
        return self.points.shape[1:]


@dataclass
class LabelDictionary:
    labels: np.ndarray
    manifold: str

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=float)
        if self.labels.shape[0] < 1:
            raise InvalidArgument("a label dictionary needs at least one label")

    def __len__(self):
        return self.labels.shape[0]

    def copy(self):
        return LabelDictionary(self.labels.copy(), self.manifold)
