"""Symmetric positive definite matrices: affine-invariant geometry, the Stein
divergence and its rotation-invariant variant for covariance descriptors."""

from __future__ import annotations

import math

import numba
import numpy as np

from ..exceptions import InvalidArgument, NotPositiveDefinite, NumericalFailure
from .base import CanonicalDivergence, Divergence, Manifold

SYM_TOL = 1e-12
GRID_SIZE = 64
ANGLE_TOL = 1e-8


def _t(a):
    return np.swapaxes(a, -1, -2)


def sym(a):
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + _t(a))


def cholesky(X):
    try:
        return np.linalg.cholesky(X)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("Cholesky factorization failed") from exc


def logdet(X):
    L = cholesky(X)
    return 2.0 * np.sum(np.log(np.diagonal(L, axis1=-2, axis2=-1)), axis=-1)


def spd_inverse(X):
    """Inverse through the Cholesky factor, ``X^{-1} = L^{-T} L^{-1}``."""
    Linv = np.linalg.inv(cholesky(X))
    return _t(Linv) @ Linv


def _eig_apply(X, fn):
    w, V = np.linalg.eigh(sym(X))
    return (V * fn(w)[..., None, :]) @ _t(V)


def sqrtm(X):
    return _eig_apply(X, np.sqrt)


def invsqrtm(X):
    return _eig_apply(X, lambda w: 1.0 / np.sqrt(w))


def expm_sym(U):
    return _eig_apply(U, np.exp)


def logm_spd(X):
    return _eig_apply(X, np.log)


class SPD(Manifold):
    """``P_s`` with metric ``g_X(U, V) = tr(X^-1 U X^-1 V)``."""

    name = "spd"
    point_ndim = 2

    def __init__(self, size=None):
        self.size = size

    def exp(self, p, v):
        w, V = np.linalg.eigh(sym(p))
        sq = (V * np.sqrt(w)[..., None, :]) @ _t(V)
        isq = (V * (1.0 / np.sqrt(w))[..., None, :]) @ _t(V)
        return sym(sq @ expm_sym(isq @ v @ isq) @ sq)

    def log(self, p, q):
        w, V = np.linalg.eigh(sym(p))
        sq = (V * np.sqrt(w)[..., None, :]) @ _t(V)
        isq = (V * (1.0 / np.sqrt(w))[..., None, :]) @ _t(V)
        return sym(sq @ logm_spd(isq @ q @ isq) @ sq)

    def dist(self, p, q):
        # generalized eigenvalues of the pencil (q, p); only cheap at small s
        isq = invsqrtm(p)
        lam = np.linalg.eigvalsh(sym(isq @ q @ isq))
        return np.sqrt(np.sum(np.log(lam) ** 2, axis=-1))

    def inner(self, p, u, v):
        pinv = spd_inverse(p)
        return np.einsum("...ab,...ba->...", pinv @ u, pinv @ v)

    def check_point(self, p):
        p = np.asarray(p, dtype=float)
        scale = np.maximum(1.0, np.max(np.abs(p), axis=(-2, -1)))
        asym = np.max(np.abs(p - _t(p)), axis=(-2, -1)) / scale
        if np.any(asym > SYM_TOL):
            raise NumericalFailure(f"matrix not symmetric (error {np.max(asym):.2e})")
        cholesky(p)
        return p

    def canonicalize(self, p):
        return sym(p)

    def random_point(self, rng, size=()):
        s = self.size or 3
        size = (size,) if np.isscalar(size) else tuple(size)
        A = rng.standard_normal(size + (s, s))
        return sym(A @ _t(A) / s + 0.1 * np.eye(s))

    def random_tangent(self, rng, p):
        return sym(rng.standard_normal(np.shape(p)))


class AffineInvariantDivergence(CanonicalDivergence):
    """``0.5 * sum(log(lambda_k)^2)``; reference only, too slow for flows."""

    def __init__(self, manifold=None):
        super().__init__(manifold or SPD())


class SteinDivergence(Divergence):
    """``logdet((X + Y) / 2) - 0.5 * logdet(X Y)``."""

    kind = "stein"

    def __init__(self, manifold=None):
        super().__init__(manifold or SPD())

    def __call__(self, z, m):
        z = np.asarray(z, dtype=float)
        m = np.asarray(m, dtype=float)
        val = logdet(0.5 * (z + m)) - 0.5 * (logdet(z) + logdet(m))
        return np.maximum(val, 0.0)

    def euclidean_grad2(self, z, m):
        return 0.5 * (spd_inverse(0.5 * (z + m)) - spd_inverse(m))

    def rgrad2(self, z, m):
        # X dF X with dF the Euclidean gradient
        m = np.asarray(m, dtype=float)
        return sym(0.5 * (m @ spd_inverse(0.5 * (np.asarray(z) + m)) @ m - m))

    def pairwise(self, Z, M, return_aux=False):
        Z = np.asarray(Z, dtype=float)
        M = np.asarray(M, dtype=float)
        ld_z = logdet(Z)
        ld_m = logdet(M)
        ld_mid = logdet(0.5 * (Z[:, None] + M[None, :]))
        values = np.maximum(ld_mid - 0.5 * (ld_z[:, None] + ld_m[None, :]), 0.0)
        return (values, None) if return_aux else values

    @staticmethod
    def _field_from_q(M, Q, mass):
        # -sum_i nu_ji grad_i = 0.5 * (mass_j M_j - M_j Q_j M_j)
        return sym(0.5 * (mass[:, None, None] * M - M @ Q @ M))

    def descent_field(self, Z, M, nu, aux=None):
        Z = np.asarray(Z, dtype=float)
        M = np.asarray(M, dtype=float)
        nu = np.asarray(nu, dtype=float)
        inv_mid = spd_inverse(0.5 * (Z[:, None] + M[None, :]))
        Q = np.einsum("ji,ijab->jab", nu, inv_mid)
        return self._field_from_q(M, Q, nu.sum(axis=1))


# --- rotation subgroup acting on covariance descriptors -------------------------

def feature_rotation(theta, channels=1):
    """Matrix ``R(theta)`` by which descriptors of a rotated image transform.

    The feature layout is ``(u, u_x, u_y, u_xx, sqrt(2) u_xy, u_yy)`` with
    each component holding ``channels`` consecutive entries. ``theta`` may be
    an array, giving a stack of matrices.
    """
    theta = np.asarray(theta, dtype=float)
    c = channels
    co, si = np.cos(theta), np.sin(theta)
    r2 = math.sqrt(2.0)
    one = np.ones_like(theta)
    first = [[co, -si], [si, co]]
    second = [
        [co * co, -r2 * co * si, si * si],
        [r2 * co * si, co * co - si * si, -r2 * co * si],
        [si * si, r2 * co * si, co * co],
    ]
    R = np.zeros(theta.shape + (6 * c, 6 * c))
    for ch in range(c):
        R[..., ch, ch] = one
        for a in range(2):
            for b in range(2):
                R[..., (1 + a) * c + ch, (1 + b) * c + ch] = first[a][b]
        for a in range(3):
            for b in range(3):
                R[..., (3 + a) * c + ch, (3 + b) * c + ch] = second[a][b]
    return R


def _sparsity(channels):
    R = feature_rotation(0.3, channels) + feature_rotation(1.1, channels)
    s = R.shape[0]
    nnz = np.zeros(s, dtype=np.int64)
    cols = np.zeros((s, 3), dtype=np.int64)
    for a in range(s):
        idx = np.flatnonzero(R[a] != 0)
        nnz[a] = idx.size
        cols[a, :idx.size] = idx
    return nnz, cols


@numba.njit(cache=True)
def _fill_rotation(theta, c, R):
    co = math.cos(theta)
    si = math.sin(theta)
    r2 = math.sqrt(2.0)
    R[:, :] = 0.0
    for ch in range(c):
        R[ch, ch] = 1.0
        i1, i2 = c + ch, 2 * c + ch
        R[i1, i1] = co
        R[i1, i2] = -si
        R[i2, i1] = si
        R[i2, i2] = co
        j1, j2, j3 = 3 * c + ch, 4 * c + ch, 5 * c + ch
        R[j1, j1] = co * co
        R[j1, j2] = -r2 * co * si
        R[j1, j3] = si * si
        R[j2, j1] = r2 * co * si
        R[j2, j2] = co * co - si * si
        R[j2, j3] = -r2 * co * si
        R[j3, j1] = si * si
        R[j3, j2] = r2 * co * si
        R[j3, j3] = co * co


@numba.njit(cache=True)
def _logdet_conj_sum(X, Y, R, nnz, cols, T, A, L):
    # logdet(R X R^T + Y) via sparse R and a Cholesky factorization; nan if not PD
    s = X.shape[0]
    for a in range(s):
        for b in range(s):
            acc = 0.0
            for k in range(nnz[a]):
                p = cols[a, k]
                acc += R[a, p] * X[p, b]
            T[a, b] = acc
    for a in range(s):
        for b in range(a + 1):
            acc = Y[a, b]
            for k in range(nnz[b]):
                q = cols[b, k]
                acc += T[a, q] * R[b, q]
            A[a, b] = acc
    return _chol_logdet(A, L)


@numba.njit(cache=True)
def _logdet_sum(X, Y, A, L):
    s = X.shape[0]
    for a in range(s):
        for b in range(a + 1):
            A[a, b] = X[a, b] + Y[a, b]
    return _chol_logdet(A, L)


@numba.njit(cache=True)
def _chol_logdet(A, L):
    # lower triangle of A only
    s = A.shape[0]
    total = 0.0
    for j in range(s):
        d = A[j, j]
        for k in range(j):
            d -= L[j, k] * L[j, k]
        if not d > 0.0:
            return np.nan
        d = math.sqrt(d)
        L[j, j] = d
        total += math.log(d)
        for i in range(j + 1, s):
            v = A[i, j]
            for k in range(j):
                v -= L[i, k] * L[j, k]
            L[i, j] = v / d
    return 2.0 * total


@numba.njit(cache=True)
def _invariant_stein_pairs(Z, Zg, M, pi, pj, ld_z, ld_m, c, nnz, cols, grid, tol, values, angles):
    s = Z.shape[1]
    n_grid = grid.shape[0]
    step = grid[1] - grid[0]
    R = np.zeros((s, s))
    T = np.zeros((s, s))
    A = np.zeros((s, s))
    L = np.zeros((s, s))
    gr = (math.sqrt(5.0) - 1.0) / 2.0
    shift = s * math.log(2.0)
    for p in range(pi.shape[0]):
        X = Z[pi[p]]
        Y = M[pj[p]]
        best = np.inf
        kbest = 0
        for k in range(n_grid):
            f = _logdet_sum(Zg[pi[p], k], Y, A, L)
            if f != f:
                values[p] = np.nan
                best = np.nan
                break
            if f < best:
                best = f
                kbest = k
        if best != best:
            continue
        theta_best = grid[kbest]
        lo = theta_best - step
        hi = theta_best + step
        x1 = hi - gr * (hi - lo)
        x2 = lo + gr * (hi - lo)
        _fill_rotation(x1, c, R)
        f1 = _logdet_conj_sum(X, Y, R, nnz, cols, T, A, L)
        _fill_rotation(x2, c, R)
        f2 = _logdet_conj_sum(X, Y, R, nnz, cols, T, A, L)
        while hi - lo > tol:
            if f1 < f2:
                hi = x2
                x2 = x1
                f2 = f1
                x1 = hi - gr * (hi - lo)
                _fill_rotation(x1, c, R)
                f1 = _logdet_conj_sum(X, Y, R, nnz, cols, T, A, L)
            else:
                lo = x1
                x1 = x2
                f1 = f2
                x2 = lo + gr * (hi - lo)
                _fill_rotation(x2, c, R)
                f2 = _logdet_conj_sum(X, Y, R, nnz, cols, T, A, L)
        if f1 < best:
            best = f1
            theta_best = x1
        if f2 < best:
            best = f2
            theta_best = x2
        values[p] = max(best - shift - 0.5 * (ld_z[pi[p]] + ld_m[pj[p]]), 0.0)
        angles[p] = theta_best % (2.0 * math.pi)


def _channels_for(size):
    if size % 6:
        raise InvalidArgument(f"descriptor size {size} is not a multiple of 6")
    return size // 6


def _angle_grid(grid_size):
    return 2.0 * np.pi * np.arange(grid_size) / grid_size


def rotated_on_grid(Z, channels, grid_size=GRID_SIZE):
    """``R(theta_k) Z_i R(theta_k)^T`` for every descriptor and grid angle."""
    R = feature_rotation(_angle_grid(grid_size), channels)  # (G, s, s)
    Z = np.asarray(Z, dtype=float)
    return np.ascontiguousarray(np.einsum("kab,ibc,kdc->ikad", R, Z, R))


def _invariant_pairs(Z, M, pi, pj, channels, grid_size=GRID_SIZE, tol=ANGLE_TOL, Zg=None):
    Z = np.ascontiguousarray(Z, dtype=float)
    M = np.ascontiguousarray(M, dtype=float)
    if Zg is None:
        Zg = rotated_on_grid(Z, channels, grid_size)
    nnz, cols = _sparsity(channels)
    grid = _angle_grid(grid_size)
    values = np.empty(pi.shape[0])
    angles = np.zeros(pi.shape[0])
    _invariant_stein_pairs(Z, Zg, M, np.ascontiguousarray(pi, dtype=np.int64),
                           np.ascontiguousarray(pj, dtype=np.int64),
                           logdet(Z), logdet(M), channels, nnz, cols, grid, tol, values, angles)
    if np.any(np.isnan(values)):
        raise NotPositiveDefinite("Cholesky factorization failed in rotated Stein evaluation")
    return values, angles


def stein_rotation_invariant(X, Y, channels=None, grid_size=GRID_SIZE, tol=ANGLE_TOL):
    """Minimum of the Stein divergence over the descriptor rotation subgroup.

    Returns ``(value, angle)`` with ``value = D_S(R X R^T, Y)`` at
    ``R = feature_rotation(angle)``. The angle is located on a coarse grid of
    ``grid_size`` points and refined by golden-section search.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if channels is None:
        channels = _channels_for(X.shape[-1])
    idx = np.zeros(1, dtype=np.int64)
    v, a = _invariant_pairs(X[None], Y[None], idx, idx, channels, grid_size, tol)
    return float(v[0]), float(a[0])


def rotate_descriptors(C, angles, channels):
    """``R(angle) C R(angle)^T`` elementwise over broadcast ``angles``."""
    R = feature_rotation(angles, channels)
    return sym(R @ C @ _t(R))


class InvariantSteinDivergence(Divergence):
    """Stein divergence minimized over rotations of the image domain.

    Zero on whole rotation orbits, so it is a dissimilarity rather than a
    divergence in the strict sense.
    """

    kind = "stein-rotation-invariant"

    def __init__(self, channels=1, manifold=None, grid_size=GRID_SIZE, tol=ANGLE_TOL):
        super().__init__(manifold or SPD(6 * channels))
        self.channels = channels
        self.grid_size = grid_size
        self.tol = tol
        self._stein = SteinDivergence(self.manifold)
        self._grid_cache = None

    def _broadcast_pairs(self, z, m):
        z = np.asarray(z, dtype=float)
        m = np.asarray(m, dtype=float)
        shape = np.broadcast_shapes(z.shape[:-2], m.shape[:-2])
        s = z.shape[-1]
        zb = np.broadcast_to(z, shape + (s, s)).reshape(-1, s, s)
        mb = np.broadcast_to(m, shape + (s, s)).reshape(-1, s, s)
        idx = np.arange(zb.shape[0], dtype=np.int64)
        v, a = _invariant_pairs(zb, mb, idx, idx, self.channels, self.grid_size, self.tol)
        return v.reshape(shape), a.reshape(shape), shape

    def __call__(self, z, m):
        v, _, shape = self._broadcast_pairs(z, m)
        return v if shape else float(v)

    def optimal_angle(self, z, m):
        _, a, shape = self._broadcast_pairs(z, m)
        return a if shape else float(a)

    def rgrad2(self, z, m):
        _, angles, _ = self._broadcast_pairs(z, m)
        z_rot = rotate_descriptors(z, angles, self.channels)
        return self._stein.rgrad2(z_rot, m)

    def _grid_for(self, Z):
        # the data side is fixed over a whole flow, so its grid rotations are cached
        cached = self._grid_cache
        if cached is not None and cached[0] is Z:
            return cached[1]
        Zg = rotated_on_grid(Z, self.channels, self.grid_size)
        self._grid_cache = (Z, Zg)
        return Zg

    def pairwise(self, Z, M, return_aux=False):
        Z = np.asarray(Z, dtype=float)
        M = np.asarray(M, dtype=float)
        n, k = Z.shape[0], M.shape[0]
        pi, pj = np.divmod(np.arange(n * k, dtype=np.int64), k)
        v, a = _invariant_pairs(Z, M, pi, pj, self.channels, self.grid_size, self.tol,
                                Zg=self._grid_for(Z))
        values, angles = v.reshape(n, k), a.reshape(n, k)
        return (values, angles) if return_aux else values

    def descent_field(self, Z, M, nu, aux=None):
        Z = np.asarray(Z, dtype=float)
        M = np.asarray(M, dtype=float)
        nu = np.asarray(nu, dtype=float)
        angles = aux if aux is not None else self.pairwise(Z, M, return_aux=True)[1]
        Q = np.zeros_like(M)
        # only pairs with weight contribute; skipping the rest saves the rotations
        for j in range(M.shape[0]):
            idx = np.flatnonzero(nu[j] > 0)
            if idx.size == 0:
                continue
            Zr = rotate_descriptors(Z[idx], angles[idx, j], self.channels)
            Q[j] = np.einsum("i,iab->ab", nu[j, idx], spd_inverse(0.5 * (Zr + M[j])))
        return SteinDivergence._field_from_q(M, Q, nu.sum(axis=1))
