"""Unsupervised assignment flow: labels and assignments evolve jointly.

Each label is pulled toward the data by a Riemannian descent direction
weighted with ``nu[j, i]``. These weights come from the assignments (sigma =
inf) or from assignments re-weighted by the feature distances at temperature
sigma. The assignments follow the supervised flow at the current labels.
"""

from __future__ import annotations

import math
import time
import warnings

import numpy as np
from scipy.special import softmax

from .exceptions import FlowTimeout, NumericalFailure, UAFlowWarning
from .flow import FlowConfig, FlowResult, distance_matrix, hard_labels, implicit_assignment_step, log
from .simplex import average_entropy, barycenter

EMPTY_MASS = 1e-300
SURVIVAL_SHARE = 0.01


def coupling_weights(W, D, sigma):
    """Weights ``nu[j, i]`` with rows summing to one over the pixels.

    For finite ``sigma`` the rows of ``W_ij exp(-D_ij / sigma)`` are normalized
    over ``j`` first and the result over ``i``; ``sigma = inf`` uses
    ``W_ij / sum_k W_kj`` directly. Labels whose column mass is below 1e-300
    get an all-zero row and are listed in ``empty``.

    Returns
    -------
    nu : ndarray, shape (J, N)
    empty : ndarray of int
    """
    W = np.asarray(W, dtype=float)
    if math.isinf(sigma):
        L = W
    else:
        L = softmax(np.log(W) - np.asarray(D, dtype=float) / sigma, axis=1)
    mass = L.sum(axis=0)
    live = mass >= EMPTY_MASS
    nu = np.zeros(L.T.shape)
    nu[live] = L[:, live].T / mass[live, None]
    return nu, np.flatnonzero(~live)


def label_field(Z, M, nu, alpha, divergence, aux=None):
    """``G_j = -alpha * sum_i nu[j, i] * grad_m D(z_i, m_j)``, a tangent at each label."""
    return alpha * divergence.descent_field(Z, M, nu, aux=aux)


def prototype_euler_step(M, G, h, manifold, frozen=()):
    """Riemannian explicit Euler ``m_j <- exp(m_j, h G_j)``; ``frozen`` labels stay put."""
    M = np.asarray(M, dtype=float)
    M_new = manifold.canonicalize(manifold.exp(M, h * np.asarray(G)))
    if len(frozen):
        M_new[frozen] = M[frozen]
    try:
        manifold.check_point(M_new)
    except NumericalFailure as err:
        raise NumericalFailure(f"label update left the manifold: {err}") from err
    return M_new


def label_stats(W, threshold=SURVIVAL_SHARE):
    """Assignment mass share per label and which labels keep more than ``threshold``."""
    share = np.asarray(W).sum(axis=0) / W.shape[0]
    surviving = np.flatnonzero(share > threshold)
    return {
        "mass": share.tolist(),
        "surviving": surviving.tolist(),
        "n_surviving": int(surviving.size),
    }


def run_uaf(Z, M0, graph, divergence, cfg: FlowConfig | None = None, verbose=False):
    """Integrate the coupled label/assignment flow until the entropy criterion holds.

    Per outer step: the coupling weights at ``W(t)`` and the distances to
    ``M(t)`` drive one explicit Riemannian Euler step of the labels; the
    assignments then take one implicit Euler step against ``M(t+1)``.
    The distance matrix of the new labels is carried over to the next step,
    so each step costs one pairwise evaluation.

    Returns a :class:`FlowResult` with final labels, assignments, hard
    labeling, entropy trace and label statistics.
    """
    cfg = (cfg or FlowConfig()).validate()
    start = time.perf_counter()
    manifold = divergence.manifold
    M = manifold.canonicalize(np.array(M0, dtype=float))
    D, aux = distance_matrix(Z, M, divergence, return_aux=True)
    W = barycenter(D.shape[0], D.shape[1])
    entropy = [average_entropy(W)]
    trace = []
    fallbacks = 0
    steps = 0
    while entropy[-1] >= cfg.entropy_tol:
        if steps >= cfg.max_steps:
            raise FlowTimeout(f"entropy {entropy[-1]:.3e} still above {cfg.entropy_tol} "
                              f"after {steps} steps",
                              {"steps": steps, "entropy": entropy, "labels": M})
        move = 0.0
        if cfg.alpha > 0:
            nu, empty = coupling_weights(W, D, cfg.sigma)
            if empty.size:
                warnings.warn(f"labels {empty.tolist()} lost all support and stay frozen",
                              UAFlowWarning, stacklevel=2)
            G = label_field(Z, M, nu, cfg.alpha, divergence, aux=aux)
            M_new = prototype_euler_step(M, G, cfg.h, manifold, frozen=empty)
            move = float(np.max(manifold.dist(M, M_new)))
            M = M_new
            D, aux = distance_matrix(Z, M, divergence, return_aux=True)
        W, info = implicit_assignment_step(W, D, graph, cfg, return_info=True)
        fallbacks += not info["converged"]
        steps += 1
        entropy.append(average_entropy(W))
        if verbose:
            n_surv = int(np.sum(W.sum(axis=0) > SURVIVAL_SHARE * W.shape[0]))
            record = {"step": steps, "t": steps * cfg.h, "entropy": entropy[-1],
                      "label_move": move, "surviving": n_surv,
                      "inner": info["inner_iterations"]}
            trace.append(record)
            log.info(" ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
                              for k, v in record.items()))
    result = FlowResult(W, hard_labels(W), entropy, steps, time.perf_counter() - start,
                        fallbacks, labels=M, trace=trace)
    result.stats = label_stats(W)
    return result
