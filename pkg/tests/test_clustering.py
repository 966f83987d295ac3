import itertools
import warnings

import numpy as np
import pytest
from scipy.optimize import minimize
from scipy.special import softmax

from uaflow.clustering import (
    cluster,
    coverage_radius,
    em_step,
    k_center,
    soft_k_means_objective,
    soft_k_means_step,
)
from uaflow.exceptions import InvalidArgument, UAFlowWarning
from uaflow.manifolds import Euclidean, OrientationDivergence, SquaredEuclidean


def euclid():
    return SquaredEuclidean(Euclidean())


def brute_force_radius(D, k):
    n = D.shape[0]
    return min(coverage_radius(D[:, list(c)]) for c in itertools.combinations(range(n), k))


def test_k_center_identical_data():
    Z = np.ones((6, 2))
    M, idx = k_center(Z, 1, euclid(), seed=0)
    assert coverage_radius(euclid().pairwise(Z, M)) == 0


def test_k_center_line_example():
    Z = np.array([[0.0], [1.0], [2.0], [10.0]])
    for seed in range(4):
        M, idx = k_center(Z, 2, euclid(), seed=seed)
        d = np.sqrt(2 * euclid().pairwise(Z, Z))
        greedy = coverage_radius(d[:, idx])
        assert greedy <= 2 * brute_force_radius(d, 2)


def test_k_center_is_subset_and_deterministic():
    rng = np.random.default_rng(0)
    Z = rng.normal(size=(40, 3))
    M1, i1 = k_center(Z, 5, euclid(), seed=7)
    M2, i2 = k_center(Z, 5, euclid(), seed=7)
    assert np.array_equal(i1, i2) and np.array_equal(M1, Z[i1])
    assert len(set(i1.tolist())) == 5
    with pytest.raises(InvalidArgument):
        k_center(Z, 41, euclid())


def test_k_center_sphere_coverage():
    # points on the sphere with the chordal metric; subsample small enough for brute force
    rng = np.random.default_rng(1)
    X = rng.normal(size=(12, 3))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    for k in (2, 3):
        _, idx = k_center(X, k, euclid(), seed=0)
        d = np.linalg.norm(X[:, None] - X[None], axis=-1)
        assert coverage_radius(d[:, idx]) <= 2 * brute_force_radius(d, k)


def test_soft_k_means_single_label_gives_mean():
    rng = np.random.default_rng(2)
    Z = rng.normal(size=(30, 2))
    _, M = soft_k_means_step(Z, np.array([[5.0, -3.0]]), 0.1, euclid())
    assert np.allclose(M[0], Z.mean(axis=0), atol=1e-14)


def test_soft_k_means_equal_distances_uniform():
    Z = np.zeros((3, 2))
    M = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
    a, _ = soft_k_means_step(Z, M, 0.1, euclid())
    assert np.allclose(a.p, 1 / 3, atol=1e-15)


def test_soft_k_means_exact_mean_shift():
    rng = np.random.default_rng(3)
    Z = rng.normal(size=(25, 2))
    M = rng.normal(size=(3, 2))
    a, M_new = soft_k_means_step(Z, M, 0.5, euclid())
    assert np.allclose(M_new, a.q @ Z, atol=1e-14)
    assert np.allclose(a.p.sum(axis=1), 1, atol=1e-12)
    assert np.allclose(a.q.sum(axis=1), 1, atol=1e-12)


def _grad(Z, M, eps):
    D = euclid().pairwise(Z, M)
    p = softmax(-D / eps, axis=1)
    return p.T.sum(axis=1)[:, None] * M - p.T @ Z


def test_soft_k_means_stationarity_vs_numeric_minimizer():
    a = 1.0
    base = np.array([[-a, -a], [a, a]])
    Z = np.repeat(base, 10, axis=0) + 0.05 * np.random.default_rng(4).normal(size=(20, 2))
    eps = 0.1
    res = cluster(Z, np.array([[-0.4, 0.1], [0.3, 0.6]]), euclid(), eps=eps, tol=1e-10)
    assert res.converged and res.iterations < 100
    assert np.max(np.abs(_grad(Z, res.labels, eps))) <= 1e-8

    def f(x):
        M = x.reshape(2, 2)
        return soft_k_means_objective(euclid().pairwise(Z, M), eps), _grad(Z, M, eps).ravel()

    opt = minimize(f, np.array([-0.4, 0.1, 0.3, 0.6]), jac=True, method="BFGS",
                   options={"gtol": 1e-12})
    assert np.allclose(np.sort(res.labels, axis=0), np.sort(opt.x.reshape(2, 2), axis=0), atol=1e-7)
    assert np.allclose(np.sort(res.labels[:, 0]), [-a, a], atol=0.05)


def test_soft_k_means_objective_monotone():
    rng = np.random.default_rng(5)
    for _ in range(100):
        Z = rng.normal(size=(15, 2))
        M = rng.normal(size=(3, 2))
        eps = rng.uniform(0.05, 1.0)
        prev = soft_k_means_objective(euclid().pairwise(Z, M), eps)
        for _ in range(5):
            _, M = soft_k_means_step(Z, M, eps, euclid())
            cur = soft_k_means_objective(euclid().pairwise(Z, M), eps)
            assert cur <= prev + 1e-12 * max(1.0, abs(prev))
            prev = cur


def test_soft_k_means_empty_label_frozen():
    Z = np.zeros((4, 1))
    M = np.array([[0.0], [1e3]])
    with pytest.warns(UAFlowWarning):
        a, M_new = soft_k_means_step(Z, M, 1e-3, euclid())
    assert a.empty.tolist() == [1]
    assert M_new[1, 0] == 1e3


def test_soft_k_means_on_orientations():
    rng = np.random.default_rng(6)
    modes = np.array([0.05, 1.6])  # the first mode straddles the identification at pi
    Z = np.mod(np.concatenate([modes[0] + 0.1 * rng.standard_normal(200),
                               modes[1] + 0.1 * rng.standard_normal(200)]), np.pi)
    res = cluster(Z, np.array([2.9, 1.4]), OrientationDivergence(), eps=0.05)
    found = np.sort(res.labels)
    d = OrientationDivergence().manifold.dist(found, np.sort(modes))
    assert np.all(d <= 0.02)


def test_em_uniform_and_mean_shift():
    Z = np.zeros((3, 2))
    M = np.array([[1.0, 0.0], [0.0, 1.0]])
    post, w, M_new = em_step(Z, M, np.array([0.5, 0.5]), euclid())
    assert np.allclose(post.p, 0.5)
    rng = np.random.default_rng(7)
    Z = rng.normal(size=(20, 3))
    M = rng.normal(size=(2, 3))
    post, w, M_new = em_step(Z, M, np.array([0.3, 0.7]), euclid())
    assert np.allclose(M_new, post.q @ Z, atol=1e-14)
    assert w.sum() == pytest.approx(1, abs=1e-15) and np.all(w > 0)


def test_em_mixing_weights_recovered():
    rng = np.random.default_rng(8)
    n1, n2 = 150, 50
    Z = np.concatenate([rng.normal(size=(n1, 2)), rng.normal(size=(n2, 2)) + [8.0, 0.0]])
    res = cluster(Z, np.array([[1.0, 1.0], [6.0, -1.0]]), euclid(), method="em", max_iters=50)
    assert np.allclose(res.weights, [n1 / 200, n2 / 200], atol=0.02)


def test_cluster_huge_tol_one_step():
    Z = np.random.default_rng(9).normal(size=(10, 2))
    res = cluster(Z, Z[:2], euclid(), tol=1e9)
    assert res.iterations == 1 and res.converged
    with pytest.raises(InvalidArgument):
        cluster(Z, Z[:2], euclid(), max_iters=0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        cluster(Z, Z[:2], euclid(), method="em", max_iters=3)
