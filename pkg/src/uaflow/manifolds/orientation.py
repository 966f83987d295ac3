"""Orientations of lines in the plane, i.e. angles modulo pi.

Points are stored as representatives in ``[0, pi)``.
"""

import numpy as np

from .base import CanonicalDivergence, Manifold


def wrap_angle(theta):
    """Representative of ``theta mod pi`` in ``[0, pi)``."""
    t = np.mod(np.asarray(theta, dtype=float), np.pi)
    return np.where(t >= np.pi, 0.0, t)


def nearest_shift(theta1, theta2):
    """``phi* in pi*Z`` minimizing ``|theta1 - theta2 + phi|``."""
    return -np.pi * np.round((np.asarray(theta1) - theta2) / np.pi)


class Orientation(Manifold):
    name = "orientation"
    point_ndim = 0

    def exp(self, p, v):
        return wrap_angle(np.asarray(p, dtype=float) + v)

    def log(self, p, q):
        d = np.asarray(q, dtype=float) - p
        return d + nearest_shift(q, p)

    def dist(self, p, q):
        return np.abs(self.log(p, q))

    def canonicalize(self, p):
        return wrap_angle(p)

    def random_point(self, rng, size=()):
        return rng.uniform(0.0, np.pi, size)

    def random_tangent(self, rng, p):
        return rng.standard_normal(np.shape(p))


class OrientationDivergence(CanonicalDivergence):
    def __init__(self, manifold=None):
        super().__init__(manifold or Orientation())

    def rgrad2(self, z, m):
        # theta2 - theta1 - phi*, with phi* minimizing |theta1 - theta2 + phi|
        z = np.asarray(z, dtype=float)
        return m - z - nearest_shift(z, m)

    def descent_field(self, Z, M, nu, aux=None):
        Z = np.asarray(Z, dtype=float)
        M = np.asarray(M, dtype=float)
        lifted = Z[None, :] + nearest_shift(Z[None, :], M[:, None])  # (J, N)
        return np.sum(nu * lifted, axis=1) - np.sum(nu, axis=1) * M
