"""Common interface of feature manifolds and divergence functions.

Every method broadcasts over leading axes; the trailing ``point_ndim`` axes
hold one point (``()`` for angles, ``(d,)`` for vectors, ``(n, n)`` for
matrices).
"""

from __future__ import annotations

import numpy as np


class Manifold:
    name = "manifold"
    point_ndim = 0

    def exp(self, p, v):
        raise NotImplementedError

    def log(self, p, q):
        raise NotImplementedError

    def dist(self, p, q):
        raise NotImplementedError

    def inner(self, p, u, v):
        """Riemannian metric at ``p``."""
        axes = tuple(range(-self.point_ndim, 0))
        return np.sum(u * v, axis=axes) if axes else u * v

    def norm(self, p, v):
        return np.sqrt(self.inner(p, v, v))

    def check_point(self, p):
        return np.asarray(p, dtype=float)

    def canonicalize(self, p):
        return np.asarray(p, dtype=float)

    def random_point(self, rng, size=()):
        raise NotImplementedError

    def random_tangent(self, rng, p):
        raise NotImplementedError

    def unit_tangent(self, rng, p):
        v = self.random_tangent(rng, p)
        n = self.norm(p, v)
        return v / np.reshape(n, np.shape(n) + (1,) * self.point_ndim)

    def point_shape(self, points):
        points = np.asarray(points)
        return points.shape[points.ndim - self.point_ndim:]

    def __repr__(self):
        return f"{type(self).__name__}()"


class Divergence:
    """Distance-like function ``D(z, m)`` with its Riemannian gradient in ``m``."""

    kind = "divergence"

    def __init__(self, manifold):
        self.manifold = manifold

    def __call__(self, z, m):
        raise NotImplementedError

    def rgrad2(self, z, m):
        """Riemannian gradient of ``m -> D(z, m)``, a tangent vector at ``m``."""
        raise NotImplementedError

    def _expand(self, Z, M):
        nd = self.manifold.point_ndim
        Z = np.asarray(Z, dtype=float)
        M = np.asarray(M, dtype=float)
        Zb = np.expand_dims(Z, axis=Z.ndim - nd)
        Mb = np.expand_dims(M, axis=0)
        return Zb, Mb

    def pairwise(self, Z, M, return_aux=False):
        """Matrix ``D[i, j] = D(Z[i], M[j])``.

        ``aux`` carries per-pair byproducts that :meth:`descent_field` can reuse
        (the optimal rotation angles for the invariant Stein dissimilarity).
        """
        Zb, Mb = self._expand(Z, M)
        values = self(Zb, Mb)
        return (values, None) if return_aux else values

    def descent_field(self, Z, M, nu, aux=None):
        """``G_j = -sum_i nu[j, i] * rgrad2(Z[i], M[j])`` for every label ``j``."""
        Zb, Mb = self._expand(Z, M)
        grads = self.rgrad2(Zb, Mb)  # (N, J, *tangent)
        return -np.einsum("ji,ij...->j...", nu, grads)

    def __repr__(self):
        return f"{type(self).__name__}({self.manifold!r})"


class CanonicalDivergence(Divergence):
    """Half the squared Riemannian distance; its gradient is ``-log_m(z)``."""

    kind = "canonical"

    def __call__(self, z, m):
        return 0.5 * self.manifold.dist(z, m) ** 2

    def rgrad2(self, z, m):
        return -self.manifold.log(m, z)
