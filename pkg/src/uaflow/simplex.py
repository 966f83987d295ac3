"""Geometry of the open probability simplex and the assignment manifold.

All functions act on the last axis, so a single probability vector of shape
``(J,)`` and an assignment matrix of shape ``(N, J)`` go through the same code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .exceptions import DegenerateInput, InvalidArgument

PROB_TOL = 1e-12


def _finite(x, name):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InvalidArgument(f"{name} contains non-finite entries")
    return x


def barycenter(n_rows, n_labels):
    """Uninformative assignment: every row uniform."""
    return np.full((n_rows, n_labels), 1.0 / n_labels)


def is_prob(p, tol=PROB_TOL):
    p = np.asarray(p, dtype=float)
    return bool(np.all(p > 0) and np.all(np.abs(p.sum(axis=-1) - 1.0) <= tol))


def check_assignment(W, tol=PROB_TOL):
    W = np.asarray(W, dtype=float)
    if W.ndim != 2:
        raise InvalidArgument(f"assignment matrix must be 2-D, got shape {W.shape}")
    if not is_prob(W, tol):
        raise InvalidArgument("assignment rows must be strictly positive and sum to 1")
    return W


def replicator(p, d):
    """Replicator map ``p * (d - <p, d>)``, projecting ``d`` onto the tangent space."""
    p = np.asarray(p, dtype=float)
    d = _finite(d, "d")
    mean = np.sum(p * d, axis=-1, keepdims=True)
    return p * (d - mean)


def _normalized_exp(p, z):
    # p * e^z / <p, e^z> with the max of z subtracted for overflow safety
    z = z - np.max(z, axis=-1, keepdims=True)
    q = p * np.exp(z)
    return q / np.sum(q, axis=-1, keepdims=True)


def exp_map(p, v):
    """e-exponential map ``Exp_p(v) = p e^{v/p} / <p, e^{v/p}>``; defined on all of T0."""
    p = np.asarray(p, dtype=float)
    v = _finite(v, "v")
    return _normalized_exp(p, v / p)


def exp_inverse(p, q):
    """Inverse of :func:`exp_map`: the tangent vector at ``p`` pointing to ``q``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return replicator(p, np.log(q) - np.log(p))


def lift(p, z):
    """Lifting map ``p e^z / <p, e^z>``; invariant under ``z -> z + c``."""
    p = np.asarray(p, dtype=float)
    z = _finite(z, "z")
    return _normalized_exp(p, z)


def lift_log(log_p, z):
    """Same as :func:`lift` but takes ``log p``; useful when ``p`` is tiny."""
    s = np.asarray(log_p, dtype=float) + z
    s = s - np.max(s, axis=-1, keepdims=True)
    q = np.exp(s)
    return q / np.sum(q, axis=-1, keepdims=True)


def geometric_mean(points, weights):
    """Weighted geometric mean of probability vectors.

    Parameters
    ----------
    points : array_like, shape (K, J)
        Probability vectors to average.
    weights : array_like, shape (K,)
        Positive weights summing to one.

    Returns
    -------
    ndarray, shape (J,)
        ``prod_k points_k ** w_k`` renormalized to the simplex.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    weights = np.asarray(weights, dtype=float)
    if points.shape[0] == 0:
        raise InvalidArgument("geometric_mean of an empty list")
    if weights.shape != (points.shape[0],):
        raise InvalidArgument("one weight per point required")
    if np.any(weights <= 0) or abs(weights.sum() - 1.0) > PROB_TOL:
        raise InvalidArgument("weights must be positive and sum to 1")
    if np.all(points == points[0]):
        return points[0].copy()
    s = weights @ np.log(points)
    return lift_log(np.zeros_like(s), s)


def entropy(W):
    W = np.asarray(W, dtype=float)
    return -np.sum(W * np.log(W), axis=-1)


def average_entropy(W):
    """Mean Shannon entropy (nats) of the assignment rows."""
    return float(np.mean(entropy(np.atleast_2d(W))))


def renormalize(W, eps=1e-10):
    """Clamp entries below ``eps`` to ``eps`` and rescale each row to sum 1."""
    W = np.array(W, dtype=float, copy=True)
    if np.any(W < 0) or not np.all(np.isfinite(W)):
        raise DegenerateInput("renormalize expects finite nonnegative rows")
    if np.any(np.max(W, axis=-1) < eps):
        raise DegenerateInput("row without any entry >= eps cannot be renormalized")
    np.maximum(W, eps, out=W)
    W /= np.sum(W, axis=-1, keepdims=True)
    return W


@dataclass(frozen=True)
class NeighborhoodGraph:
    """Per-pixel neighborhoods with positive weights summing to one.

    Stored as a sparse row-stochastic matrix: row ``i`` holds ``w_ik`` at the
    columns ``k`` of ``N_i``.
    """

    weights: sp.csr_matrix

    def __post_init__(self):
        w = self.weights
        n = w.shape[0]
        if w.shape != (n, n):
            raise InvalidArgument("neighborhood weight matrix must be square")
        if np.any(w.data <= 0):
            raise InvalidArgument("neighborhood weights must be positive")
        if np.any(np.abs(np.asarray(w.sum(axis=1)).ravel() - 1.0) > PROB_TOL):
            raise InvalidArgument("neighborhood weights must sum to 1 per pixel")
        if np.any(w.diagonal() <= 0):
            raise InvalidArgument("every pixel must belong to its own neighborhood")

    @property
    def size(self):
        return self.weights.shape[0]

    def neighbors(self, i):
        row = self.weights.getrow(i)
        return row.indices.copy(), row.data.copy()

    @classmethod
    def from_lists(cls, neighbors, weights):
        rows, cols, vals = [], [], []
        for i, (idx, w) in enumerate(zip(neighbors, weights)):
            rows.extend([i] * len(idx))
            cols.extend(idx)
            vals.extend(w)
        n = len(neighbors)
        mat = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        return cls(mat)

    @classmethod
    def grid(cls, height, width, size=3, weights=None):
        """Square ``size x size`` windows on a row-major pixel grid.

        Windows are truncated at the image border and their weights
        renormalized. ``weights`` optionally gives a ``(size, size)`` array of
        positive window weights; the default is uniform.
        """
        if size < 1 or size % 2 == 0:
            raise InvalidArgument(f"neighborhood size must be a positive odd integer, got {size}")
        r = size // 2
        if weights is None:
            weights = np.ones((size, size))
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (size, size) or np.any(weights <= 0):
            raise InvalidArgument("window weights must be a positive (size, size) array")
        ys, xs = np.divmod(np.arange(height * width), width)
        rows, cols, vals = [], [], []
        for dy in range(-r, r + 1):
            for dx in range(-r, r + 1):
                ny, nx = ys + dy, xs + dx
                ok = (ny >= 0) & (ny < height) & (nx >= 0) & (nx < width)
                rows.append(np.flatnonzero(ok))
                cols.append(ny[ok] * width + nx[ok])
                vals.append(np.full(ok.sum(), weights[dy + r, dx + r]))
        rows, cols, vals = map(np.concatenate, (rows, cols, vals))
        n = height * width
        mat = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        mat.sort_indices()
        row_sums = np.asarray(mat.sum(axis=1)).ravel()
        mat = sp.diags(1.0 / row_sums) @ mat
        return cls(sp.csr_matrix(mat))

    def geometric_means(self, P):
        """Row ``i``: weighted geometric mean of the rows of ``P`` over ``N_i``."""
        s = self.weights @ np.log(P)
        return lift_log(np.zeros_like(s), s)
