"""Pure-NumPy reference implementation of the sampling/energy kernels.

Semantics are identical to the compiled module ``_kernels_c``; the compiled
module is preferred at import time when available (see ``kernels``).

Conventions shared by both backends:
  * images are 2-D float64 arrays indexed ``img[y, x]``;
  * a point is in bounds when ``0 <= x <= W-1`` and ``0 <= y <= H-1``;
  * a square patch of odd size n centred at (cx, cy) spans offsets
    ``-(n-1)/2 .. +(n-1)/2`` in both axes;
  * out-of-bounds is reported by sentinel (negative energy / None), never
    by padding or clamping the sample positions.
"""
from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def _base_indices(coords, limit):
    """Integer cells and fractional offsets for bilinear interpolation."""
    i = np.floor(coords).astype(np.intp)
    # at coords == limit-1 exactly, step back one cell so i+1 stays valid
    np.clip(i, 0, limit - 2, out=i)
    return i, coords - i


def grid_in_bounds(width, height, cx, cy, n, pad=0.0):
    """True when the n x n grid at (cx, cy), enlarged by pad, is in bounds."""
    m = (n - 1) // 2
    return (
        cx - m - pad >= 0.0
        and cx + m + pad <= width - 1
        and cy - m - pad >= 0.0
        and cy + m + pad <= height - 1
    )


def bilinear(img, x, y):
    """Bilinear interpolation at an in-bounds point. No bounds checking."""
    h, w = img.shape
    x0, fx = _base_indices(np.asarray(x, dtype=np.float64), w)
    y0, fy = _base_indices(np.asarray(y, dtype=np.float64), h)
    v00 = img[y0, x0]
    v01 = img[y0, x0 + 1]
    v10 = img[y0 + 1, x0]
    v11 = img[y0 + 1, x0 + 1]
    top = v00 + fx * (v01 - v00)
    bot = v10 + fx * (v11 - v10)
    return float(top + fy * (bot - top))


def _sample_grid(img, cx, cy, n):
    """Bilinear samples of the n x n grid centred at (cx, cy); grid must fit."""
    h, w = img.shape
    m = (n - 1) // 2
    offs = np.arange(-m, m + 1, dtype=np.float64)
    x0, fx = _base_indices(cx + offs, w)
    y0, fy = _base_indices(cy + offs, h)
    v00 = img[np.ix_(y0, x0)]
    v01 = img[np.ix_(y0, x0 + 1)]
    v10 = img[np.ix_(y0 + 1, x0)]
    v11 = img[np.ix_(y0 + 1, x0 + 1)]
    top = v00 + fx[None, :] * (v01 - v00)
    bot = v10 + fx[None, :] * (v11 - v10)
    return top + fy[:, None] * (bot - top)


def extract_patch(img, cx, cy, n):
    """The n x n bilinear patch at (cx, cy), or None if the grid exits."""
    h, w = img.shape
    if not grid_in_bounds(w, h, cx, cy, n):
        return None
    return _sample_grid(img, cx, cy, n)


def patch_energy(img, tpl, cx, cy):
    """Mean absolute template/image difference, or -1.0 if the grid exits."""
    h, w = img.shape
    n = tpl.shape[0]
    if not grid_in_bounds(w, h, cx, cy, n):
        return -1.0
    return float(np.mean(np.abs(tpl - _sample_grid(img, cx, cy, n))))


def patch_grad(img, tpl, cx, cy, h_step):
    """Centred-difference gradient of patch_energy, or None near the border."""
    h, w = img.shape
    n = tpl.shape[0]
    if not grid_in_bounds(w, h, cx, cy, n, pad=h_step):
        return None
    exp = patch_energy(img, tpl, cx + h_step, cy)
    exm = patch_energy(img, tpl, cx - h_step, cy)
    eyp = patch_energy(img, tpl, cx, cy + h_step)
    eym = patch_energy(img, tpl, cx, cy - h_step)
    return (exp - exm) / (2.0 * h_step), (eyp - eym) / (2.0 * h_step)
