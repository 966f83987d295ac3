"""Feature manifolds and divergence functions behind one interface."""

from ..exceptions import ConfigError
from .base import CanonicalDivergence, Divergence, Manifold
from .euclidean import Euclidean, SquaredEuclidean
from .orientation import Orientation, OrientationDivergence, wrap_angle
from .so3 import SO3, SO3Divergence
from .spd import (
    SPD,
    AffineInvariantDivergence,
    InvariantSteinDivergence,
    SteinDivergence,
    feature_rotation,
    stein_rotation_invariant,
)

MANIFOLDS = {
    "euclidean": Euclidean,
    "orientation": Orientation,
    "so3": SO3,
    "spd": SPD,
}


def make_divergence(manifold, kind="canonical", channels=1):
    """Divergence for a manifold tag and divergence kind.

    ``kind`` is ``canonical`` for the Euclidean, orientation and SO(3) cases,
    and ``stein`` or ``stein-rotation-invariant`` for SPD descriptors.
    """
    if manifold == "euclidean" and kind == "canonical":
        return SquaredEuclidean()
    if manifold == "orientation" and kind == "canonical":
        return OrientationDivergence()
    if manifold == "so3" and kind == "canonical":
        return SO3Divergence()
    if manifold == "spd":
        if kind == "stein":
            return SteinDivergence(SPD(6 * channels))
        if kind == "stein-rotation-invariant":
            return InvariantSteinDivergence(channels)
        if kind == "canonical":
            return AffineInvariantDivergence(SPD(6 * channels))
    raise ConfigError(f"unsupported manifold/divergence combination: {manifold}/{kind}")


__all__ = [
    "AffineInvariantDivergence", "CanonicalDivergence", "Divergence", "Euclidean",
    "InvariantSteinDivergence", "MANIFOLDS", "Manifold", "Orientation",
    "OrientationDivergence", "SO3", "SO3Divergence", "SPD", "SquaredEuclidean",
    "SteinDivergence", "feature_rotation", "make_divergence", "stein_rotation_invariant",
    "wrap_angle",
]
