# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled sampling/energy kernels.

Mirrors ``_kernels_py`` exactly; see that module for the shared semantics.
"""
import numpy as np

cimport cython
from libc.math cimport fabs, floor

BACKEND_NAME = "cython"


cdef inline double _bilinear(const double[:, ::1] img, double x, double y) noexcept nogil:
    cdef Py_ssize_t w = img.shape[1]
    cdef Py_ssize_t h = img.shape[0]
    cdef Py_ssize_t x0 = <Py_ssize_t>floor(x)
    cdef Py_ssize_t y0 = <Py_ssize_t>floor(y)
    if x0 > w - 2:
        x0 = w - 2
    if x0 < 0:
        x0 = 0
    if y0 > h - 2:
        y0 = h - 2
    if y0 < 0:
        y0 = 0
    cdef double fx = x - x0
    cdef double fy = y - y0
    cdef double top = img[y0, x0] + fx * (img[y0, x0 + 1] - img[y0, x0])
    cdef double bot = img[y0 + 1, x0] + fx * (img[y0 + 1, x0 + 1] - img[y0 + 1, x0])
    return top + fy * (bot - top)


cdef inline bint _grid_ok(Py_ssize_t w, Py_ssize_t h, double cx, double cy,
                          Py_ssize_t n, double pad) noexcept nogil:
    cdef double m = (n - 1) / 2
    if cx - m - pad < 0.0 or cx + m + pad > w - 1:
        return False
    if cy - m - pad < 0.0 or cy + m + pad > h - 1:
        return False
    return True


cdef double _patch_energy(const double[:, ::1] img, const double[:, ::1] tpl,
                          double cx, double cy) noexcept nogil:
    cdef Py_ssize_t n = tpl.shape[0]
    cdef Py_ssize_t m = (n - 1) // 2
    cdef Py_ssize_t i, j
    cdef double acc = 0.0
    cdef double y, x
    if not _grid_ok(img.shape[1], img.shape[0], cx, cy, n, 0.0):
        return -1.0
    for i in range(n):
        y = cy + (i - m)
        for j in range(n):
            x = cx + (j - m)
            acc += fabs(tpl[i, j] - _bilinear(img, x, y))
    return acc / (n * n)


def grid_in_bounds(width, height, cx, cy, n, pad=0.0):
    """True when the n x n grid at (cx, cy), enlarged by pad, is in bounds."""
    return bool(_grid_ok(width, height, cx, cy, n, pad))


def bilinear(const double[:, ::1] img, double x, double y):
    """Bilinear interpolation at an in-bounds point. No bounds checking."""
    return _bilinear(img, x, y)


def extract_patch(const double[:, ::1] img, double cx, double cy, Py_ssize_t n):
    """The n x n bilinear patch at (cx, cy), or None if the grid exits."""
    cdef Py_ssize_t m = (n - 1) // 2
    cdef Py_ssize_t i, j
    if not _grid_ok(img.shape[1], img.shape[0], cx, cy, n, 0.0):
        return None
    out = np.empty((n, n), dtype=np.float64)
    cdef double[:, ::1] out_v = out
    with nogil:
        for i in range(n):
            for j in range(n):
                out_v[i, j] = _bilinear(img, cx + (j - m), cy + (i - m))
    return out


def patch_energy(const double[:, ::1] img, const double[:, ::1] tpl,
                 double cx, double cy):
    """Mean absolute template/image difference, or -1.0 if the grid exits."""
    cdef double e
    with nogil:
        e = _patch_energy(img, tpl, cx, cy)
    return e


def patch_grad(const double[:, ::1] img, const double[:, ::1] tpl,
               double cx, double cy, double h_step):
    """Centred-difference gradient of patch_energy, or None near the border."""
    cdef double exp_, exm, eyp, eym
    if not _grid_ok(img.shape[1], img.shape[0], cx, cy, tpl.shape[0], h_step):
        return None
    with nogil:
        exp_ = _patch_energy(img, tpl, cx + h_step, cy)
        exm = _patch_energy(img, tpl, cx - h_step, cy)
        eyp = _patch_energy(img, tpl, cx, cy + h_step)
        eym = _patch_energy(img, tpl, cx, cy - h_step)
    return (exp_ - exm) / (2.0 * h_step), (eyp - eym) / (2.0 * h_step)
