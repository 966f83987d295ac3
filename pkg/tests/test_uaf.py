import math

import numpy as np
import pytest
import scipy.linalg as sla

from uaflow import features
from uaflow.clustering import k_center
from uaflow.exceptions import NumericalFailure
from uaflow.flow import FlowConfig, run_supervised
from uaflow.manifolds import (
    SPD,
    SO3,
    Euclidean,
    Orientation,
    OrientationDivergence,
    SO3Divergence,
    SquaredEuclidean,
    SteinDivergence,
)
from uaflow.manifolds.so3 import hat
from uaflow.simplex import NeighborhoodGraph
from uaflow.uaf import coupling_weights, label_field, label_stats, prototype_euler_step, run_uaf


def random_state(rng, n, j):
    W = rng.gamma(1.0, size=(n, j)) + 1e-3
    return W / W.sum(axis=1, keepdims=True)


def test_coupling_weights_examples():
    W = np.full((5, 3), 1 / 3)
    for sigma in (math.inf, 0.5):
        nu, empty = coupling_weights(W, np.ones((5, 3)), sigma)
        assert np.allclose(nu, 1 / 5, atol=1e-15) and empty.size == 0
    rng = np.random.default_rng(0)
    nu, _ = coupling_weights(random_state(rng, 1, 4), rng.random((1, 4)), 0.3)
    assert np.allclose(nu, 1.0, atol=1e-15)


def test_coupling_weights_rows_and_limit():
    rng = np.random.default_rng(1)
    for _ in range(20):
        W = random_state(rng, 30, 5)
        D = rng.random((30, 5)) * 3
        a, _ = coupling_weights(W, D, math.inf)
        b, _ = coupling_weights(W, D, 1e6)
        c, _ = coupling_weights(W, D, 0.2)
        assert np.max(np.abs(a - b)) <= 1e-6
        assert np.allclose(a.sum(axis=1), 1, atol=1e-12)
        assert np.allclose(c.sum(axis=1), 1, atol=1e-12)
        assert np.allclose(a, (W / W.sum(axis=0)).T, atol=1e-15)


def test_coupling_weights_empty_label():
    W = np.array([[1.0, 0.0], [1.0, 0.0]])
    nu, empty = coupling_weights(W, np.zeros((2, 2)), math.inf)
    assert empty.tolist() == [1] and np.all(nu[1] == 0)


def test_label_field_consensus_is_stationary():
    rng = np.random.default_rng(2)
    m = SO3().random_point(rng)
    Z = np.repeat(m[None], 6, axis=0)
    G = label_field(Z, m[None], np.full((1, 6), 1 / 6), 1.0, SO3Divergence())
    assert np.allclose(G, 0, atol=1e-14)


def test_label_field_so3_form():
    rng = np.random.default_rng(3)
    M = SO3()
    Z, S = M.random_point(rng, 10), M.random_point(rng, 2)
    nu = rng.random((2, 10))
    alpha = 0.7
    G = label_field(Z, S, nu, alpha, SO3Divergence())
    for j in range(2):
        ref = alpha * sum(nu[j, i] * S[j] @ np.real(sla.logm(S[j].T @ Z[i])) for i in range(10))
        assert np.allclose(G[j], ref, atol=1e-10)


def test_label_field_orientation_form():
    rng = np.random.default_rng(4)
    Z = rng.uniform(0, np.pi, 12)
    M = rng.uniform(0, np.pi, 3)
    nu = rng.random((3, 12))
    G = label_field(Z, M, nu, 2.0, OrientationDivergence())
    for j in range(3):
        phi = -np.pi * np.round((Z - M[j]) / np.pi)
        ref = 2.0 * (np.sum(nu[j] * (Z + phi)) - nu[j].sum() * M[j])
        assert G[j] == pytest.approx(ref, abs=1e-13)


def test_prototype_euler_step_examples():
    rng = np.random.default_rng(5)
    M = rng.normal(size=(3, 2))
    G = rng.normal(size=(3, 2))
    assert np.array_equal(prototype_euler_step(M, np.zeros_like(M), 0.1, Euclidean()), M)
    assert np.allclose(prototype_euler_step(M, G, 0.1, Euclidean()), M + 0.1 * G, atol=1e-15)
    frozen = prototype_euler_step(M, G, 0.1, Euclidean(), frozen=[1])
    assert np.array_equal(frozen[1], M[1])


def test_prototype_euler_step_keeps_manifold():
    rng = np.random.default_rng(6)
    M = SO3().random_point(rng, 4)
    G = M @ hat(rng.normal(size=(4, 3)))
    out = prototype_euler_step(M, G, 0.5, SO3())
    assert np.allclose(np.swapaxes(out, 1, 2) @ out, np.eye(3), atol=1e-12)
    with pytest.raises(NumericalFailure):
        prototype_euler_step(np.eye(2)[None], -20 * np.eye(2)[None], 1.0, _BrokenSPD())


class _BrokenSPD(SPD):
    # Euclidean retraction, so a large step leaves the cone
    def exp(self, p, v):
        return p + v


def _stein_closed_form(Lam, Z, nu, alpha, h):
    Lt = np.real(sla.sqrtm(Lam))
    Q = sum(n * np.linalg.inv(0.5 * (C + Lam)) for n, C in zip(nu, Z))
    return Lt @ sla.expm(0.5 * alpha * h * (np.eye(len(Lam)) - Lt @ Q @ Lt)) @ Lt


def test_spd_two_route_equivalence():
    rng = np.random.default_rng(7)
    M = SPD(2)
    div = SteinDivergence(M)
    for _ in range(100):
        Z = M.random_point(rng, 8)
        Lam = M.random_point(rng, 1)
        nu = rng.random((1, 8))
        nu /= nu.sum()
        alpha, h = rng.uniform(0.1, 2.0), 0.1
        G = label_field(Z, Lam, nu, alpha, div)
        generic = prototype_euler_step(Lam, G, h, M)[0]
        closed = _stein_closed_form(Lam[0], Z, nu[0], alpha, h)
        assert np.max(np.abs(generic - closed)) <= 1e-10


def test_label_stats():
    W = np.array([[0.995, 0.005, 0.0], [0.0, 0.9, 0.1], [1.0, 0.0, 0.0]])
    s = label_stats(W)
    assert np.allclose(s["mass"], [1.995 / 3, 0.905 / 3, 0.1 / 3])
    assert s["surviving"] == [0, 1, 2] and s["n_surviving"] == 3
    assert label_stats(W, threshold=0.05)["surviving"] == [0, 1]


def test_alpha_zero_equals_supervised():
    rng = np.random.default_rng(8)
    Z = rng.normal(size=(36, 2))
    M0 = Z[:4].copy()
    g = NeighborhoodGraph.grid(6, 6, 3)
    cfg = FlowConfig(alpha=0.0)
    a = run_uaf(Z, M0, g, SquaredEuclidean(), cfg)
    b = run_supervised(Z, M0, g, SquaredEuclidean(), cfg)
    assert np.array_equal(a.W, b.W) and np.array_equal(a.labels, M0)


def test_single_pixel_mean_shift():
    z = np.array([[2.0, -1.0]])
    M0 = np.array([[0.0, 0.0], [5.0, 5.0]])
    r = run_uaf(z, M0, NeighborhoodGraph.grid(1, 1, 1), SquaredEuclidean(),
                FlowConfig(entropy_tol=1e-3), verbose=True)
    moves = [rec["label_move"] for rec in r.trace]
    assert all(b <= a + 1e-15 for a, b in zip(moves, moves[1:]))
    d0 = np.linalg.norm(M0 - z, axis=1)
    assert np.all(np.linalg.norm(r.labels - z, axis=1) < d0)
    assert r.trace[0]["t"] == pytest.approx(0.1)


def test_orientation_uaf_recovers_lines():
    # the first angle sits next to the identification at pi
    regions = features.block_regions(24, 24, 3)
    angles = np.array([0.05, 1.1, 2.15])
    noise = 0.05 * features.make_rng(0).standard_normal(576)
    Z = features.wrap_angle(angles[regions.ravel()] + noise)
    div = OrientationDivergence()
    M0, _ = k_center(Z, 6, div, seed=0)
    r = run_uaf(Z, M0, NeighborhoodGraph.grid(24, 24, 3), div)
    found = r.labels[r.stats["surviving"]]
    for a in angles:
        assert np.min(Orientation().dist(found, a)) <= 0.05
    conf = np.zeros((6, 3))
    np.add.at(conf, (r.labeling, regions.ravel()), 1)
    assert (conf.argmax(axis=1)[r.labeling] == regions.ravel()).mean() >= 0.95


def test_three_region_color_collapse():
    regions = features.shape_regions(64, 64, 3)
    img, truth = features.color_synthetic(regions, features.default_palette(3), 0.1, seed=0)
    Z = img.reshape(-1, 3)
    div = SquaredEuclidean()
    M0, _ = k_center(Z, 8, div, seed=0)
    r = run_uaf(Z, M0, NeighborhoodGraph.grid(64, 64, 3), div)
    assert 2 <= r.stats["n_surviving"] <= 4
    conf = np.zeros((8, 3))
    np.add.at(conf, (r.labeling, truth.ravel()), 1)
    acc = (conf.argmax(axis=1)[r.labeling] == truth.ravel()).mean()
    assert acc >= 0.9
    assert all(b <= a + 1e-12 for a, b in zip(r.entropy, r.entropy[1:]))


def test_sigma_limit_labelings_agree():
    regions = features.shape_regions(32, 32, 3)
    img, _ = features.color_synthetic(regions, features.default_palette(3), 0.1, seed=1)
    Z = img.reshape(-1, 3)
    div = SquaredEuclidean()
    M0, _ = k_center(Z, 6, div, seed=1)
    g = NeighborhoodGraph.grid(32, 32, 3)
    a = run_uaf(Z, M0, g, div, FlowConfig(sigma=math.inf))
    b = run_uaf(Z, M0, g, div, FlowConfig(sigma=1e6))
    assert np.mean(a.labeling == b.labeling) >= 0.99


def test_so3_uaf_small():
    regions = features.block_regions(16, 16, 2)
    frames = features.default_frames(2)
    truth = features.ground_truth_so3(regions, frames)
    Z = features.so3_synthetic(truth, 0.2, seed=0).points
    div = SO3Divergence()
    M0, _ = k_center(Z, 4, div, seed=0)
    r = run_uaf(Z, M0, NeighborhoodGraph.grid(16, 16, 3), div)
    for j in r.stats["surviving"]:
        assert np.min(SO3().dist(r.labels[j], frames)) <= 0.15
    tr = np.swapaxes(r.labels, 1, 2) @ r.labels
    assert np.allclose(tr, np.eye(3), atol=1e-10)
