"""Image representation, pyramids, subpixel sampling, and coarse registration.

Intensities are kept as real values on the 0..255 scale even when frames
originate from 8-bit files; interpolation and synthetic degradation need the
continuous range.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import correlate1d

from gyrotrack import kernels
from gyrotrack.errors import OutOfBoundsError

PYRAMID_LEVELS = 4
# level 3 of the pyramid must be at least 8 pixels on a side
MIN_FRAME_SIDE = 8 * 2 ** (PYRAMID_LEVELS - 1)


@dataclass(frozen=True)
class GrayFrame:
    """A single-channel image with row-major float64 intensities in 0..255."""

    data: np.ndarray
    frame_index: int = 0
    timestamp: float = 0.0

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"frame data must be 2-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("frame intensities must be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def height(self):
        return self.data.shape[0]


@dataclass(frozen=True)
class Pyramid:
    """Coarse-to-fine stack of frames; level 0 is full resolution."""

    levels: tuple

    def __post_init__(self):
        if len(self.levels) != PYRAMID_LEVELS:
            raise ValueError(f"pyramid must have {PYRAMID_LEVELS} levels")

    @property
    def base(self):
        return self.levels[0]


@dataclass(frozen=True)
class Patch:
    """A square, odd-sized template sampled around a subpixel centre."""

    values: np.ndarray
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        arr = np.ascontiguousarray(self.values, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError("patch must be square")
        if arr.shape[0] % 2 == 0:
            raise ValueError("patch size must be odd")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def size(self):
        return self.values.shape[0]


def gaussian_kernel1d(sigma):
    """Normalized 1-D Gaussian taps with radius ceil(3*sigma)."""
    if sigma <= 0.0:
        return np.ones(1)
    radius = int(math.ceil(3.0 * sigma))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (xs / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(data, sigma_x, sigma_y):
    """Separable Gaussian blur with symmetric (mirrored) borders."""
    out = np.asarray(data, dtype=np.float64)
    if sigma_x > 0.0:
        out = correlate1d(out, gaussian_kernel1d(sigma_x), axis=1, mode="reflect")
    if sigma_y > 0.0:
        out = correlate1d(out, gaussian_kernel1d(sigma_y), axis=0, mode="reflect")
    return out


def build_pyramid(frame):
    """Four-level pyramid: Gaussian pre-filter (sigma 1.0), then 2x decimation."""
    if frame.width < MIN_FRAME_SIDE or frame.height < MIN_FRAME_SIDE:
        raise ValueError(
            f"frame {frame.width}x{frame.height} too small for "
            f"{PYRAMID_LEVELS} pyramid levels (need {MIN_FRAME_SIDE} per side)"
        )
    levels = [frame]
    for _ in range(PYRAMID_LEVELS - 1):
        prev = levels[-1]
        smoothed = gaussian_blur(prev.data, 1.0, 1.0)
        decimated = smoothed[::2, ::2]
        levels.append(
            GrayFrame(decimated, frame_index=frame.frame_index, timestamp=frame.timestamp)
        )
    return Pyramid(tuple(levels))


def sample_bilinear(frame, x, y):
    """Bilinearly interpolated intensity at (x, y); exact at integer points."""
    data = frame.data if isinstance(frame, GrayFrame) else frame
    h, w = data.shape
    if not (0.0 <= x <= w - 1 and 0.0 <= y <= h - 1):
        raise OutOfBoundsError(f"sample point ({x}, {y}) outside {w}x{h} frame")
    return kernels.bilinear(data, float(x), float(y))


def extract_patch(frame, center, n):
    """Extract the n x n template centred at a subpixel position."""
    if n % 2 == 0 or n < 1:
        raise ValueError("template size must be odd and positive")
    data = frame.data if isinstance(frame, GrayFrame) else frame
    cx, cy = float(center[0]), float(center[1])
    values = kernels.extract_patch(data, cx, cy, n)
    if values is None:
        raise OutOfBoundsError(
            f"{n}x{n} patch at ({cx}, {cy}) exits {data.shape[1]}x{data.shape[0]} frame"
        )
    return Patch(values, center=(cx, cy))


def register_coarse(prev, cur, search_radius=20):
    """Global displacement between two pyramids, estimated at 1/4 resolution.

    Exhaustive integer search over +-search_radius level-2 pixels minimizing
    the mean absolute intensity difference over the overlap. Ties go to the
    smallest displacement magnitude, then lexicographic (dx, dy). The result
    is scaled back to full-resolution pixels.
    """
    a = prev.levels[2].data
    b = cur.levels[2].data
    if a.shape != b.shape:
        raise ValueError("pyramids must come from same-size frames")
    h, w = a.shape
    best = (math.inf, 0.0, 0, 0)
    for dy in range(-search_radius, search_radius + 1):
        ys = max(0, -dy)
        ye = min(h, h - dy)
        if ys >= ye:
            continue
        for dx in range(-search_radius, search_radius + 1):
            xs = max(0, -dx)
            xe = min(w, w - dx)
            if xs >= xe:
                continue
            cost = np.mean(np.abs(a[ys:ye, xs:xe] - b[ys + dy:ye + dy, xs + dx:xe + dx]))
            key = (cost, float(dx * dx + dy * dy), dx, dy)
            if key < best:
                best = key
    scale = 2 ** 2
    return np.array([best[2] * scale, best[3] * scale], dtype=np.float64)
