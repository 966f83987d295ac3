"""Flat feature space R^d with the canonical divergence ``0.5 * |z - m|^2``."""

import numpy as np

from .base import CanonicalDivergence, Manifold


class Euclidean(Manifold):
    name = "euclidean"
    point_ndim = 1

    def __init__(self, dim=None):
        self.dim = dim

    def exp(self, p, v):
        return np.asarray(p, dtype=float) + v

    def log(self, p, q):
        return np.asarray(q, dtype=float) - p

    def dist(self, p, q):
        return np.linalg.norm(np.asarray(q, dtype=float) - p, axis=-1)

    def random_point(self, rng, size=()):
        size = (size,) if np.isscalar(size) else tuple(size)
        return rng.standard_normal(size + (self.dim or 3,))

    def random_tangent(self, rng, p):
        return rng.standard_normal(np.shape(p))


class SquaredEuclidean(CanonicalDivergence):
    def __init__(self, manifold=None):
        super().__init__(manifold or Euclidean())

    def pairwise(self, Z, M, return_aux=False):
        Z = np.asarray(Z, dtype=float)
        M = np.asarray(M, dtype=float)
        diff = Z[:, None, :] - M[None, :, :]
        values = 0.5 * np.einsum("ijk,ijk->ij", diff, diff)
        return (values, None) if return_aux else values

    def descent_field(self, Z, M, nu, aux=None):
        nu = np.asarray(nu, dtype=float)
        return nu @ np.asarray(Z, dtype=float) - nu.sum(axis=1, keepdims=True) * M
