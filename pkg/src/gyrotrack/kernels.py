"""Kernel backend selection.

The compiled Cython kernels are used when the extension built; otherwise the
NumPy reference implementation takes over. Set ``GYROTRACK_PURE=1`` to force
the reference backend (used by the backend-equivalence tests and benchmark).
"""
from __future__ import annotations

import os

from gyrotrack import _kernels_py

if os.environ.get("GYROTRACK_PURE", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from gyrotrack import _kernels_c as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = _impl.BACKEND_NAME

grid_in_bounds = _impl.grid_in_bounds
bilinear = _impl.bilinear
extract_patch = _impl.extract_patch
patch_energy = _impl.patch_energy
patch_grad = _impl.patch_grad


def get_backend():
    """Name of the active kernel backend ('cython' or 'python')."""
    return BACKEND
