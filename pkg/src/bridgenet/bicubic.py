"""Separable cubic-convolution resampling (Keys kernel, a = -0.5).

Sample centres follow the half-pixel convention
``src = (dst + 0.5) / factor - 0.5``.  When shrinking, the kernel is
stretched by ``1 / factor`` (antialiasing, as MATLAB ``imresize`` does) and
the taps renormalised.  Out-of-range taps replicate the border pixel.
"""

from functools import lru_cache

import numpy as np

from .errors import ShapeError

A = -0.5


def cubic(x, a=A):
    """Keys cubic-convolution kernel evaluated elementwise."""
    x = np.abs(np.asarray(x, dtype=np.float64))
    x2, x3 = x * x, x * x * x
    near = (a + 2.0) * x3 - (a + 3.0) * x2 + 1.0
    far = a * x3 - 5.0 * a * x2 + 8.0 * a * x - 4.0 * a
    return np.where(x <= 1.0, near, np.where(x < 2.0, far, 0.0))


@lru_cache(maxsize=64)
def resize_matrix(n_in, n_out):
    """Dense (n_out, n_in) matrix mapping a 1-D signal to its resampled version."""
    if n_in < 1 or n_out < 1:
        raise ShapeError(f"cannot resample length {n_in} to {n_out}")
    factor = n_out / n_in
    stretch = min(factor, 1.0)
    support = 2.0 / stretch

    centres = (np.arange(n_out) + 0.5) / factor - 0.5
    first = np.floor(centres - support).astype(int) + 1
    taps = int(np.ceil(2 * support)) + 1
    idx = first[:, None] + np.arange(taps)[None, :]
    w = stretch * cubic(stretch * (centres[:, None] - idx))
    w /= w.sum(axis=1, keepdims=True)

    mat = np.zeros((n_out, n_in))
    rows = np.repeat(np.arange(n_out), taps)
    np.add.at(mat, (rows, np.clip(idx, 0, n_in - 1).ravel()), w.ravel())
    mat.setflags(write=False)
    return mat


def imresize(img, out_hw, clamp=True):
    """Resize a (H, W) or (H, W, C) array to ``out_hw`` with bicubic weights."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim not in (2, 3):
        raise ShapeError(f"expected 2-D or 3-D image, got shape {img.shape}")
    rows = resize_matrix(img.shape[0], int(out_hw[0]))
    cols = resize_matrix(img.shape[1], int(out_hw[1]))
    out = np.einsum("ij,jk...,lk->il...", rows, img, cols)
    if clamp:
        out = np.clip(out, 0.0, 1.0)
    return out


LR_SIZE = 16
PATCH_SIZES = (64, 128, 256)


def degrade_bicubic(hr_depth):
    """Downsample a square HR depth patch (64/128/256) to 16x16."""
    hr_depth = np.asarray(hr_depth)
    if hr_depth.ndim != 2 or hr_depth.shape[0] != hr_depth.shape[1]:
        raise ShapeError(f"degrade_bicubic needs a square 2-D patch, got {hr_depth.shape}")
    if hr_depth.shape[0] not in PATCH_SIZES:
        raise ShapeError(f"patch size {hr_depth.shape[0]} not in {PATCH_SIZES}")
    return imresize(hr_depth, (LR_SIZE, LR_SIZE))


def upsample_bicubic(lr_depth, target_size):
    """Upsample a square 16x16 LR depth map to ``target_size`` squared."""
    lr_depth = np.asarray(lr_depth)
    if lr_depth.ndim != 2 or lr_depth.shape[0] != lr_depth.shape[1]:
        raise ShapeError(f"upsample_bicubic needs a square 2-D map, got {lr_depth.shape}")
    if lr_depth.shape[0] != LR_SIZE:
        raise ShapeError(f"LR depth must be {LR_SIZE}x{LR_SIZE}, got {lr_depth.shape}")
    if target_size not in PATCH_SIZES:
        raise ShapeError(f"target size {target_size} not in {PATCH_SIZES}")
    return imresize(lr_depth, (target_size, target_size))
