"""The rotation group SO(3) with the bi-invariant Frobenius metric.

Tangent vectors at ``R`` are stored as ambient matrices ``R @ Omega`` with
``Omega`` skew-symmetric.
"""

import numpy as np

from ..exceptions import NotInDomain, NumericalFailure
from .base import CanonicalDivergence, Manifold

ORTHO_TOL = 1e-10
_SINC_TAYLOR = 1e-4


def sinc(x):
    """``sin(x)/x`` with value 1 at 0 and a Taylor branch for ``|x| < 1e-4``."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < _SINC_TAYLOR
    safe = np.where(small, 1.0, x)
    x2 = x * x
    return np.where(small, 1.0 - x2 / 6.0 + x2 * x2 / 120.0, np.sin(safe) / safe)


def hat(n):
    """Skew matrix with ``hat(n) @ v == cross(n, v)``."""
    n = np.asarray(n, dtype=float)
    out = np.zeros(n.shape[:-1] + (3, 3))
    out[..., 0, 1], out[..., 0, 2] = -n[..., 2], n[..., 1]
    out[..., 1, 0], out[..., 1, 2] = n[..., 2], -n[..., 0]
    out[..., 2, 0], out[..., 2, 1] = -n[..., 1], n[..., 0]
    return out


def vee(omega):
    omega = np.asarray(omega, dtype=float)
    return np.stack([omega[..., 2, 1], omega[..., 0, 2], omega[..., 1, 0]], axis=-1)


def _t(a):
    return np.swapaxes(a, -1, -2)


def expm_skew(A):
    """Rodrigues formula ``I + sinc(a) A + 0.5 sinc(a/2)^2 A^2``."""
    A = np.asarray(A, dtype=float)
    a = np.sqrt(0.5 * np.sum(A * A, axis=(-2, -1)))[..., None, None]
    return np.eye(3) + sinc(a) * A + 0.5 * sinc(0.5 * a) ** 2 * (A @ A)


def _cos_angle(R):
    return np.clip((np.trace(R, axis1=-2, axis2=-1) - 1.0) / 2.0, -1.0, 1.0)


_CUT_LOCUS = -1.0 + 1e-12


def _half_turn_log(R):
    # R = 2 a a^T - I at angle pi; either sign of a is a logarithm, fix the one
    # whose largest-magnitude component is positive
    S = 0.5 * (R + np.eye(3))
    k = np.argmax(np.diagonal(S, axis1=-2, axis2=-1), axis=-1)
    col = np.take_along_axis(S, k[..., None, None], axis=-1)[..., 0]
    a = col / np.linalg.norm(col, axis=-1, keepdims=True)
    big = np.take_along_axis(a, np.argmax(np.abs(a), axis=-1)[..., None], axis=-1)
    return hat(np.pi * a * np.sign(big))


def logm_rot(R, cut_locus="raise"):
    """Principal logarithm ``(R - R^T) / (2 sinc(theta))`` for rotation angle < pi.

    At angle pi the logarithm is not unique: ``cut_locus="raise"`` raises
    :class:`NotInDomain`, ``"choose"`` picks one of the two branches
    deterministically (used where a flow just needs some valid direction).
    """
    R = np.asarray(R, dtype=float)
    c = _cos_angle(R)
    at_pi = c <= _CUT_LOCUS
    if np.any(at_pi) and cut_locus == "raise":
        raise NotInDomain("rotation angle pi: logarithm is not unique")
    theta = np.arccos(np.where(at_pi, 0.0, c))[..., None, None]
    out = (R - _t(R)) / (2.0 * sinc(theta))
    if np.any(at_pi):
        out[at_pi] = _half_turn_log(R[at_pi])
    return out


def rotation_angle(R):
    return np.arccos(_cos_angle(R))


def rotation_about(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return expm_skew(hat(axis * angle))


class SO3(Manifold):
    name = "so3"
    point_ndim = 2

    def exp(self, p, v):
        p = np.asarray(p, dtype=float)
        omega = _t(p) @ v
        omega = 0.5 * (omega - _t(omega))
        return p @ expm_skew(omega)

    def log(self, p, q):
        p = np.asarray(p, dtype=float)
        return p @ logm_rot(_t(p) @ q)

    def dist(self, p, q):
        """``sqrt(2) * arccos((tr(p^T q) - 1) / 2)``, no logarithm needed."""
        tr = np.einsum("...ab,...ab->...", np.asarray(p, dtype=float), q)
        return np.sqrt(2.0) * np.arccos(np.clip((tr - 1.0) / 2.0, -1.0, 1.0))

    def check_point(self, p):
        p = np.asarray(p, dtype=float)
        err = np.linalg.norm(_t(p) @ p - np.eye(3), axis=(-2, -1))
        if np.any(err > ORTHO_TOL) or np.any(np.linalg.det(p) <= 0):
            raise NumericalFailure(f"not a rotation matrix (orthogonality error {np.max(err):.2e})")
        return p

    def canonicalize(self, p):
        # polar projection removes drift accumulated by repeated products
        u, _, vt = np.linalg.svd(np.asarray(p, dtype=float))
        return u @ vt

    def random_point(self, rng, size=()):
        size = (size,) if np.isscalar(size) else tuple(size)
        q = rng.standard_normal(size + (4,))
        q /= np.linalg.norm(q, axis=-1, keepdims=True)
        w, x, y, z = np.moveaxis(q, -1, 0)
        R = np.stack([
            1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w),
            2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w),
            2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y),
        ], axis=-1)
        return R.reshape(size + (3, 3))

    def random_tangent(self, rng, p):
        p = np.asarray(p, dtype=float)
        return p @ hat(rng.standard_normal(p.shape[:-2] + (3,)))


class SO3Divergence(CanonicalDivergence):
    def __init__(self, manifold=None):
        super().__init__(manifold or SO3())

    def pairwise(self, Z, M, return_aux=False):
        tr = np.einsum("iab,jab->ij", np.asarray(Z, dtype=float), np.asarray(M, dtype=float))
        d = np.sqrt(2.0) * np.arccos(np.clip((tr - 1.0) / 2.0, -1.0, 1.0))
        values = 0.5 * d * d
        return (values, None) if return_aux else values

    def descent_field(self, Z, M, nu, aux=None):
        # -grad = log_m(z) = m logm(m^T z); sum the Lie-algebra parts first
        Z = np.asarray(Z, dtype=float)
        M = np.asarray(M, dtype=float)
        rel = np.einsum("jba,ibc->ijac", M, Z)
        # pairs at the cut locus contribute one of their two valid directions
        omegas = logm_rot(rel, cut_locus="choose")
        return M @ np.einsum("ji,ijab->jab", nu, omegas)
