"""Feature-space clustering on manifolds: greedy k-center, soft-k-means and EM.

All routines take the data as an array of points ``Z`` of shape
``(N, *point_shape)`` together with a divergence object (see
:mod:`uaflow.manifolds`); labels are arrays of shape ``(J, *point_shape)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

from .exceptions import InvalidArgument, UAFlowWarning

EMPTY_MASS = 1e-300


@dataclass
class SoftAssignment:
    p: np.ndarray  # (N, J), rows sum to 1
    q: np.ndarray  # (J, N), rows sum to 1 except for empty labels
    empty: np.ndarray  # indices of labels without support


@dataclass
class ClusterResult:
    labels: np.ndarray
    assignment: SoftAssignment
    iterations: int
    converged: bool
    weights: np.ndarray | None = None


def k_center(Z, k, divergence, seed=None):
    """Greedy farthest-point selection of ``k`` labels among the data.

    The first label is drawn uniformly with ``seed``; every further label is
    the datum with the largest dissimilarity to the labels chosen so far.
    Costs ``k * N`` dissimilarity evaluations. Returns the selected labels and
    their data indices.
    """
    Z = np.asarray(Z, dtype=float)
    n = Z.shape[0]
    if not 1 <= k <= n:
        raise InvalidArgument(f"k must lie in [1, {n}], got {k}")
    rng = np.random.default_rng(seed)
    chosen = [int(rng.integers(n))]
    nearest = divergence.pairwise(Z, Z[chosen[-1:]])[:, 0]
    for _ in range(k - 1):
        nxt = int(np.argmax(nearest))
        chosen.append(nxt)
        nearest = np.minimum(nearest, divergence.pairwise(Z, Z[[nxt]])[:, 0])
    idx = np.array(chosen)
    return Z[idx].copy(), idx


def coverage_radius(D):
    """``max_i min_j D[i, j]``, the k-center objective for a dissimilarity matrix."""
    return float(np.max(np.min(D, axis=1)))


def soft_k_means_objective(D, eps):
    return float(-eps * np.sum(logsumexp(-np.asarray(D) / eps, axis=1)))


def _normalize_columns(p, what):
    mass = p.sum(axis=0)
    empty = np.flatnonzero(mass < EMPTY_MASS)
    if empty.size:
        warnings.warn(f"{what}: labels {empty.tolist()} have no support and stay frozen",
                      UAFlowWarning, stacklevel=3)
    q = np.zeros(p.T.shape)
    live = mass >= EMPTY_MASS
    q[live] = p[:, live].T / mass[live, None]
    return q, empty


def _descent_update(Z, M, divergence, q, aux, step=1.0):
    """One Riemannian step ``m_j <- exp(m_j, -step * sum_i q_ji grad D(z_i, m_j))``."""
    field = divergence.descent_field(Z, M, q, aux=aux)
    M_new = divergence.manifold.exp(M, step * field)
    return divergence.manifold.canonicalize(M_new)


def soft_k_means_step(Z, M, eps, divergence):
    """One soft-k-means (mean shift) iteration at temperature ``eps``.

    Parameters
    ----------
    Z : ndarray, shape (N, ...)
        Data points.
    M : ndarray, shape (J, ...)
        Current labels.
    eps : float
        Temperature of the soft assignment, ``eps > 0``.
    divergence : Divergence

    Returns
    -------
    SoftAssignment, ndarray
        Soft assignments at the input labels and the updated labels.
    """
    if eps <= 0:
        raise InvalidArgument("eps must be positive")
    D, aux = divergence.pairwise(Z, M, return_aux=True)
    p = softmax(-D / eps, axis=1)
    q, empty = _normalize_columns(p, "soft-k-means")
    M_new = _descent_update(Z, M, divergence, q, aux)
    M_new[empty] = M[empty]
    return SoftAssignment(p, q, empty), M_new


def em_step(Z, M, weights, divergence):
    """One EM iteration for the mixture ``p(z) ~ sum_j pi_j exp(-D(z, m_j))``.

    The mixing weights are re-estimated as the mean posterior over the data,
    the labels by one Riemannian descent step on ``sum_i nu_ji D(z_i, m_j)``.
    """
    weights = np.asarray(weights, dtype=float)
    D, aux = divergence.pairwise(Z, M, return_aux=True)
    with np.errstate(divide="ignore"):
        logits = np.log(weights)[None, :] - D
    post = softmax(logits, axis=1)
    nu, empty = _normalize_columns(post, "EM")
    new_weights = np.maximum(post.mean(axis=0), EMPTY_MASS)
    new_weights /= new_weights.sum()
    M_new = _descent_update(Z, M, divergence, nu, aux)
    M_new[empty] = M[empty]
    return SoftAssignment(post, nu, empty), new_weights, M_new


def cluster(Z, M0, divergence, method="soft-k-means", eps=0.1, max_iters=500, tol=1e-10):
    """Iterate :func:`soft_k_means_step` or :func:`em_step` from labels ``M0``.

    Stops once no label moves by more than ``tol`` in the manifold distance,
    or after ``max_iters`` iterations.
    """
    if max_iters < 1:
        raise InvalidArgument("max_iters must be at least 1")
    if method not in ("soft-k-means", "em"):
        raise InvalidArgument(f"unknown clustering method {method!r}")
    manifold = divergence.manifold
    M = np.array(M0, dtype=float)
    weights = np.full(M.shape[0], 1.0 / M.shape[0]) if method == "em" else None
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        if method == "soft-k-means":
            assignment, M_new = soft_k_means_step(Z, M, eps, divergence)
        else:
            assignment, weights, M_new = em_step(Z, M, weights, divergence)
        move = float(np.max(manifold.dist(M, M_new)))
        M = M_new
        if move < tol:
            converged = True
            break
    return ClusterResult(M, assignment, it, converged, weights)
