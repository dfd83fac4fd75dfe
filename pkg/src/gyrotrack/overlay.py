"""Raster overlays for visual inspection: tracked positions as red squares,
ground truth as green circles, red lines connecting the two.
"""
from __future__ import annotations

import numpy as np

RED = (255, 40, 40)
GREEN = (40, 220, 40)


def to_rgb(frame):
    data = np.clip(np.rint(frame.data), 0, 255).astype(np.uint8)
    return np.repeat(data[:, :, None], 3, axis=2)


def _put(img, x, y, color):
    h, w = img.shape[:2]
    if 0 <= x < w and 0 <= y < h:
        img[y, x] = color


def draw_square(img, cx, cy, half=3, color=RED):
    x0, y0 = int(round(cx)), int(round(cy))
    for d in range(-half, half + 1):
        _put(img, x0 + d, y0 - half, color)
        _put(img, x0 + d, y0 + half, color)
        _put(img, x0 - half, y0 + d, color)
        _put(img, x0 + half, y0 + d, color)


def draw_circle(img, cx, cy, radius=4, color=GREEN):
    steps = max(16, int(8 * radius))
    for ang in np.linspace(0.0, 2.0 * np.pi, steps, endpoint=False):
        _put(img, int(round(cx + radius * np.cos(ang))),
             int(round(cy + radius * np.sin(ang))), color)


def draw_line(img, x0, y0, x1, y1, color=RED):
    """Bresenham segment between two (rounded) endpoints."""
    x0, y0, x1, y1 = int(round(x0)), int(round(y0)), int(round(x1)), int(round(y1))
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    while True:
        _put(img, x0, y0, color)
        if x0 == x1 and y0 == y1:
            break
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def render_overlay(frame, tracked, truth_positions=None):
    """RGB overlay for one frame.

    ``tracked`` maps feature id -> (x, y); ``truth_positions`` likewise when
    ground truth is available. Tracked ids without truth (or vice versa) are
    drawn without a connecting line.
    """
    img = to_rgb(frame)
    truth_positions = truth_positions or {}
    for fid, pos in truth_positions.items():
        draw_circle(img, pos[0], pos[1])
    for fid, pos in tracked.items():
        tpos = truth_positions.get(fid)
        if tpos is not None:
            draw_line(img, pos[0], pos[1], tpos[0], tpos[1])
        draw_square(img, pos[0], pos[1])
    return img
