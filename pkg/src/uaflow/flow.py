"""Supervised assignment flow with a fixed label dictionary.

The flow ``dW/dt = R_W(S(W))`` lives on the product of open simplices. Its
similarity field ``S`` lifts the data distances to likelihoods at the current
assignments and averages them geometrically over pixel neighborhoods.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import FlowTimeout, InvalidArgument, UAFlowWarning
from .simplex import NeighborhoodGraph, average_entropy, barycenter, lift, renormalize, replicator

log = logging.getLogger("uaflow")


@dataclass
class FlowConfig:
    rho: float = 0.1
    sigma: float = math.inf
    alpha: float = 1.0
    h: float = 0.1
    renorm_eps: float = 1e-10
    entropy_tol: float = 1e-3
    max_steps: int = 10000
    inner_tol: float = 1e-10
    inner_max: int = 50
    neighborhood: int = 3

    def validate(self):
        for name in ("rho", "sigma", "h", "renorm_eps", "entropy_tol", "inner_tol"):
            v = getattr(self, name)
            if not (v > 0) or math.isnan(v):
                raise InvalidArgument(f"{name} must be positive, got {v}")
            if math.isinf(v) and name != "sigma":
                raise InvalidArgument(f"{name} must be finite")
        if self.alpha < 0 or not math.isfinite(self.alpha):
            raise InvalidArgument(f"alpha must be finite and nonnegative, got {self.alpha}")
        if self.max_steps < 1 or self.inner_max < 1:
            raise InvalidArgument("step caps must be at least 1")
        if self.neighborhood < 1 or self.neighborhood % 2 == 0:
            raise InvalidArgument("neighborhood size must be a positive odd integer")
        return self

    def as_dict(self):
        return asdict(self)


@dataclass
class FlowResult:
    W: np.ndarray
    labeling: np.ndarray
    entropy: list = field(default_factory=list)
    steps: int = 0
    seconds: float = 0.0
    fallbacks: int = 0
    labels: np.ndarray | None = None
    stats: dict = field(default_factory=dict)
    trace: list = field(default_factory=list)


def distance_matrix(Z, M, divergence, return_aux=False):
    """``D[i, j] = D(z_i, m_j)`` for all pixels and labels."""
    return divergence.pairwise(Z, M, return_aux=return_aux)


def likelihood(W, D, rho):
    """Rows ``W_i exp(-D_i / rho)`` normalized; constant shifts of ``D_i`` cancel."""
    if not rho > 0:
        raise InvalidArgument("rho must be positive")
    return lift(W, -np.asarray(D, dtype=float) / rho)


def similarity(L, graph: NeighborhoodGraph):
    """Geometric means of the likelihood rows over each pixel neighborhood."""
    return graph.geometric_means(L)


def flow_field(W, S):
    return replicator(W, S)


def _similarity_at(W, D, graph, rho):
    return similarity(likelihood(W, D, rho), graph)


def _velocity(W, D, graph, cfg):
    # h times the similarity projected onto zero-sum vectors
    S = _similarity_at(W, D, graph, cfg.rho)
    return cfg.h * (S - S.mean(axis=1, keepdims=True))


def explicit_assignment_step(W, D, graph, cfg):
    return renormalize(lift(W, _velocity(W, D, graph, cfg)), cfg.renorm_eps)


def implicit_assignment_step(W, D, graph, cfg, return_info=False):
    """Geometric implicit Euler step for the assignment component.

    Solves ``V = h * P(S(lift(W, V)))`` by fixed point iteration from
    ``V = 0``, with ``P`` the orthogonal projection onto zero-sum vectors, and
    returns the renormalized ``lift(W, V)``. If the iteration does not reach
    ``cfg.inner_tol`` within ``cfg.inner_max`` sweeps, an explicit step is taken
    instead and a warning issued.
    """
    V = np.zeros_like(W)
    converged = False
    k = 0
    for k in range(1, cfg.inner_max + 1):
        V_new = _velocity(lift(W, V), D, graph, cfg)
        delta = float(np.max(np.abs(V_new - V)))
        V = V_new
        if delta < cfg.inner_tol:
            converged = True
            break
    if converged:
        W_new = renormalize(lift(W, V), cfg.renorm_eps)
    else:
        warnings.warn(f"implicit step: fixed point not reached in {cfg.inner_max} sweeps "
                      f"(last change {delta:.3e}); taking an explicit step", UAFlowWarning,
                      stacklevel=2)
        W_new = explicit_assignment_step(W, D, graph, cfg)
    if return_info:
        return W_new, {"inner_iterations": k, "converged": converged, "residual": delta}
    return W_new


def hard_labels(W):
    return np.argmax(W, axis=1)


def run_supervised(Z, M, graph, divergence, cfg: FlowConfig | None = None):
    """Integrate the assignment flow from the barycenter with labels ``M`` fixed.

    Stops once the average assignment entropy falls below ``cfg.entropy_tol``.
    Raises :class:`FlowTimeout` after ``cfg.max_steps`` steps.
    """
    cfg = (cfg or FlowConfig()).validate()
    start = time.perf_counter()
    D = distance_matrix(Z, M, divergence)
    W = barycenter(D.shape[0], D.shape[1])
    trace = [average_entropy(W)]
    fallbacks = 0
    steps = 0
    while trace[-1] >= cfg.entropy_tol:
        if steps >= cfg.max_steps:
            raise FlowTimeout(f"entropy {trace[-1]:.3e} still above {cfg.entropy_tol} "
                              f"after {steps} steps", {"steps": steps, "entropy": trace})
        W, info = implicit_assignment_step(W, D, graph, cfg, return_info=True)
        fallbacks += not info["converged"]
        steps += 1
        trace.append(average_entropy(W))
    return FlowResult(W, hard_labels(W), trace, steps, time.perf_counter() - start, fallbacks)
