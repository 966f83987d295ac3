"""Feature extraction and synthetic test images.

Images are arrays of shape ``(H, W)`` or ``(H, W, c)`` with ``x`` running
along columns and ``y`` along rows. Feature fields are flattened row-major,
matching :meth:`uaflow.simplex.NeighborhoodGraph.grid`.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import correlate1d

from .data import FeatureField
from .exceptions import InvalidArgument
from .manifolds.orientation import wrap_angle
from .manifolds.so3 import expm_skew, hat, rotation_about

FLAT_SCATTER = 1e-14


def make_rng(seed):
    """Counter-based generator so every synthetic dataset is fixed by its seed."""
    return np.random.Generator(np.random.Philox(seed))


def _channels_last(u):
    u = np.asarray(u, dtype=float)
    if u.ndim == 2:
        u = u[..., None]
    if u.ndim != 3 or u.shape[2] < 1:
        raise InvalidArgument(f"expected an (H, W) or (H, W, c) image, got shape {u.shape}")
    if not np.all(np.isfinite(u)):
        raise InvalidArgument("image contains non-finite values")
    return u


def derivatives(u):
    """Central first and 3-point second differences with replicate padding.

    Returns ``u_x, u_y, u_xx, u_xy, u_yy`` with the shape of ``u``.
    """
    p = np.pad(u, ((1, 1), (1, 1)) + ((0, 0),) * (u.ndim - 2), mode="edge")
    c = p[1:-1, 1:-1]
    ux = 0.5 * (p[1:-1, 2:] - p[1:-1, :-2])
    uy = 0.5 * (p[2:, 1:-1] - p[:-2, 1:-1])
    uxx = p[1:-1, 2:] - 2.0 * c + p[1:-1, :-2]
    uyy = p[2:, 1:-1] - 2.0 * c + p[:-2, 1:-1]
    uxy = 0.25 * (p[2:, 2:] - p[2:, :-2] - p[:-2, 2:] + p[:-2, :-2])
    return ux, uy, uxx, uxy, uyy


def feature_map(u):
    """Per-pixel features ``(u, u_x, u_y, u_xx, sqrt(2) u_xy, u_yy)``.

    Each component stacks the ``c`` channels, so the output has shape
    ``(H, W, 6c)``. The factor on the mixed derivative makes image rotations
    act on the features by an orthogonal matrix.
    """
    u = _channels_last(u)
    ux, uy, uxx, uxy, uyy = derivatives(u)
    return np.concatenate([u, ux, uy, uxx, math.sqrt(2.0) * uxy, uyy], axis=2)


def box_sum(a, size):
    """Sum of ``a`` over ``size x size`` windows truncated at the border."""
    w = np.ones(size)
    out = correlate1d(a, w, axis=0, mode="constant")
    return correlate1d(out, w, axis=1, mode="constant")


def _window_counts(height, width, size):
    return box_sum(np.ones((height, width)), size)


def covariance_field(u, window=5, eps=1e-5):
    """Covariance descriptors of :func:`feature_map` over square windows.

    Uniform weights over the window (truncated at the border) and a ridge
    ``eps * I`` keep every descriptor positive definite, flat regions included.
    Features are centered by their global mean before accumulating the window
    moments, which keeps the one-pass formula well conditioned.
    """
    if window < 1 or window % 2 == 0:
        raise InvalidArgument("window must be a positive odd integer")
    if not eps > 0:
        raise InvalidArgument("eps must be positive")
    u = _channels_last(u)
    H, W, c = u.shape
    f = feature_map(u)
    f = f - f.reshape(-1, f.shape[2]).mean(axis=0)
    n = _window_counts(H, W, window)[..., None]
    mean = box_sum(f, window) / n
    outer = np.einsum("hwa,hwb->hwab", f, f)
    second = box_sum(outer.reshape(H, W, -1), window).reshape(outer.shape) / n[..., None]
    C = second - np.einsum("hwa,hwb->hwab", mean, mean)
    C = 0.5 * (C + np.swapaxes(C, -1, -2)) + eps * np.eye(f.shape[2])
    return FeatureField(C.reshape(H * W, f.shape[2], f.shape[2]), "spd", H, W,
                        {"channels": c, "window": window, "eps": eps})


def orientation_field(u, window=5):
    """Line orientations from windowed gradient scatter matrices.

    The angle is that of the eigenvector to the smaller eigenvalue, measured
    from the x axis and taken in ``[0, pi)``. Pixels with a vanishing scatter
    matrix get angle 0 and are marked in ``meta["flat"]``.
    """
    u = np.asarray(u, dtype=float)
    if u.ndim != 2:
        raise InvalidArgument("orientation estimation needs a single-channel image")
    H, W = u.shape
    ux, uy, *_ = derivatives(u)
    a = box_sum(ux * ux, window)
    b = box_sum(ux * uy, window)
    c = box_sum(uy * uy, window)
    flat = (a + c) <= FLAT_SCATTER
    # dominant direction is 0.5*atan2(2b, a - c); the minor one is orthogonal
    theta = wrap_angle(0.5 * np.arctan2(2.0 * b, a - c) + 0.5 * np.pi)
    theta = np.where(flat, 0.0, theta)
    return FeatureField(theta.ravel(), "orientation", H, W, {"flat": flat.ravel()})


def ground_truth_so3(regions, frames):
    """Field assigning ``frames[k]`` to every pixel of region ``k``."""
    regions = np.asarray(regions)
    frames = np.asarray(frames, dtype=float)
    H, W = regions.shape
    return FeatureField(frames[regions.ravel()], "so3", H, W)


def so3_synthetic(truth: FeatureField, noise_scale, seed=0):
    """``R_i expm(hat(n_i))`` with ``n_i`` isotropic Gaussian of std ``noise_scale``."""
    if noise_scale < 0:
        raise InvalidArgument("noise_scale must be nonnegative")
    R = truth.points
    if noise_scale == 0:
        return FeatureField(R.copy(), "so3", truth.height, truth.width)
    n = noise_scale * make_rng(seed).standard_normal((R.shape[0], 3))
    return FeatureField(R @ expm_skew(hat(n)), "so3", truth.height, truth.width)


def color_synthetic(regions, palette, noise_sigma, seed=0):
    """Palette image of a region map plus clamped Gaussian noise.

    Returns the ``(H, W, channels)`` image and the ground-truth labeling.
    """
    regions = np.asarray(regions)
    palette = np.asarray(palette, dtype=float)
    n_regions = int(regions.max()) + 1
    if palette.shape[0] != n_regions:
        raise InvalidArgument(f"palette has {palette.shape[0]} colors for {n_regions} regions")
    img = palette[regions]
    if noise_sigma > 0:
        img = img + noise_sigma * make_rng(seed).standard_normal(img.shape)
    return np.clip(img, 0.0, 1.0), regions.copy()


def shape_regions(height, width, n_regions):
    """Deterministic region map: background, disk, bar, ring and square.

    Shapes are kept apart by gaps of several percent of the image size so no
    sliver of background is thinner than a typical regularization window.
    """
    if not 1 <= n_regions <= 5:
        raise InvalidArgument("between 1 and 5 regions supported")
    y, x = np.mgrid[0:height, 0:width]
    yn, xn = (y + 0.5) / height, (x + 0.5) / width
    masks = [
        np.hypot(xn - 0.3, yn - 0.3) < 0.16,
        (xn > 0.62) & (xn < 0.88) & (yn > 0.1) & (yn < 0.9),
        np.abs(np.hypot(xn - 0.3, yn - 0.75) - 0.13) < 0.05,
        (xn > 0.45) & (xn < 0.55) & (yn > 0.05) & (yn < 0.15),
    ]
    regions = np.zeros((height, width), dtype=int)
    for k, m in enumerate(masks[:n_regions - 1], start=1):
        regions[m] = k
    return regions


def block_regions(height, width, n_regions):
    """Equal-area region map: a 2 x 2 split for four regions, vertical stripes otherwise.

    Equal areas keep the per-region sample count, and with it the noise floor
    of any label estimate, the same for every region.
    """
    if not 1 <= n_regions <= 5:
        raise InvalidArgument("between 1 and 5 regions supported")
    rows = 2 if n_regions == 4 else 1
    cols = n_regions // rows
    y, x = np.mgrid[0:height, 0:width]
    return (y * rows // height) * cols + (x * cols // width)


REGION_LAYOUTS = {"shapes": shape_regions, "blocks": block_regions}


def region_map(layout, height, width, n_regions):
    try:
        return REGION_LAYOUTS[layout](height, width, n_regions)
    except KeyError:
        raise InvalidArgument(f"unknown region layout {layout!r}") from None


def default_palette(n):
    base = np.array([
        [0.85, 0.15, 0.15], [0.15, 0.65, 0.25], [0.15, 0.25, 0.85],
        [0.9, 0.85, 0.2], [0.6, 0.2, 0.7],
    ])
    return base[:n]


def default_frames(n):
    """``n`` well separated rotations about distinct axes."""
    # the first four are pairwise at least 2.1 rad apart, the fifth 1.64 rad from the rest
    axes = [(1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 1)]
    frames = [np.eye(3)] + [rotation_about(a, 2.1) for a in axes]
    return np.stack(frames[:n])


def orientation_texture(regions, angles, period=6.0):
    """Sinusoidal stripes whose lines run at ``angles[k]`` inside region ``k``."""
    regions = np.asarray(regions)
    H, W = regions.shape
    y, x = np.mgrid[0:H, 0:W].astype(float)
    phi = np.asarray(angles, dtype=float)[regions] + 0.5 * math.pi  # stripe normal
    return 0.5 + 0.4 * np.sin(2.0 * math.pi / period * (x * np.cos(phi) + y * np.sin(phi)))


def stripe_texture(height, width, period=5, angle=0.0, phase=0.0):
    """Grayscale texture of two superposed gratings, rotated by ``angle``.

    Both wave vectors are integer multiples of ``2 pi / period`` along the
    axes, so for ``angle`` a multiple of 90 degrees the pattern is periodic on
    the pixel grid and windows of ``period`` pixels see identical statistics
    everywhere. The second grating is off-axis so the pattern has no 90 degree
    symmetry.
    """
    y, x = np.mgrid[0:height, 0:width].astype(float)
    co, si = math.cos(angle), math.sin(angle)
    xr, yr = co * x + si * y, -si * x + co * y
    k = 2.0 * math.pi / period
    t = 0.5 + 0.3 * np.sin(k * xr + phase) + 0.2 * np.sin(k * (xr + 2.0 * yr))
    return np.clip(t, 0.0, 1.0)


def rotated_texture_image(height, width, period=5):
    """Left half a texture, right half the same texture rotated by 90 degrees.

    Returns the image and the region map (0 left, 1 right).
    """
    left = stripe_texture(height, width, period, 0.0)
    right = stripe_texture(height, width, period, 0.5 * math.pi)
    regions = np.zeros((height, width), dtype=int)
    regions[:, width // 2:] = 1
    return np.where(regions == 0, left, right), regions
