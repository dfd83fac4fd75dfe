"""Tracking energies: template dissimilarity, the gyro-prediction penalty,
and the regularized single- and multi-feature energy functions.

The dissimilarity term is the mean absolute template/image difference with
the image sampled bilinearly, so it lives on the 0..255 intensity scale.
Penalty strengths, however, are calibrated against dissimilarity measured on
unit-normalized intensities; ``EnergyConfig.penalty_scale`` (default 255)
bridges the two conventions. Scaling the total energy this way leaves
minimizers, descent directions, and line-search decisions unchanged.

Distances inside the penalty are always full-resolution pixels: when a
position lives on pyramid level k, pass ``coord_scale = 2**k`` so the
"pointiness" and saturation radius keep their meaning at every level.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from gyrotrack import kernels
from gyrotrack.errors import OutOfBoundsError

# penalty strengths learned for the single- and multi-feature trackers
SINGLE_TRACKER_STRENGTH = 0.0125
MULTI_TRACKER_STRENGTH = 0.005

# below this offset from the anchor the penalty gradient is taken as zero
# (the true gradient is undefined at the kink; zero is a valid subgradient)
KINK_EPS = 1e-8


@dataclass(frozen=True)
class PenaltyConfig:
    """Shape of the deviation penalty.

    strength: overall weight (the tracker's tuning parameter).
    alpha: pointiness near the anchor, in 1/pixels.
    x_max: radius in pixels where the penalty reaches ``strength``.
    """

    strength: float = SINGLE_TRACKER_STRENGTH
    alpha: float = 0.5
    x_max: float = 25.0

    def __post_init__(self):
        if self.strength < 0:
            raise ValueError("penalty strength must be >= 0")
        if self.alpha <= 0 or self.x_max <= 0:
            raise ValueError("alpha and x_max must be > 0")


@dataclass(frozen=True)
class EnergyConfig:
    """Knobs of the tracking energy.

    The loss is fixed to the absolute value. ``grad_step`` is the
    centred-difference perturbation in pixels used for the image term.
    """

    template_size: int = 13
    grad_step: float = 0.25
    penalty: PenaltyConfig = field(default_factory=PenaltyConfig)
    penalty_scale: float = 255.0

    def __post_init__(self):
        if self.template_size < 3 or self.template_size % 2 == 0:
            raise ValueError("template size must be odd and >= 3")
        if self.grad_step <= 0:
            raise ValueError("gradient step must be > 0")


@dataclass
class MultiState:
    """Joint state of F features: interleaved (x, y) pairs.

    ``x[2f]`` and ``x[2f+1]`` hold the position of feature f, and
    ``anchors`` holds the gyro-predicted positions in the same layout and
    the same coordinate units.
    """

    x: np.ndarray
    anchors: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64).reshape(-1).copy()
        self.anchors = np.asarray(self.anchors, dtype=np.float64).reshape(-1).copy()
        if self.x.size != self.anchors.size or self.x.size % 2 != 0:
            raise ValueError("state and anchors must be matching 2F vectors")

    @property
    def count(self):
        return self.x.size // 2

    def position(self, f):
        return self.x[2 * f:2 * f + 2]

    def anchor(self, f):
        return self.anchors[2 * f:2 * f + 2]

    @classmethod
    def from_positions(cls, positions, anchors):
        return cls(np.asarray(positions).reshape(-1), np.asarray(anchors).reshape(-1))


def _frame_data(frame):
    return frame if isinstance(frame, np.ndarray) else frame.data


def template_energy(template, frame, position):
    """Mean absolute difference between the template and the frame at x."""
    tpl = template if isinstance(template, np.ndarray) else template.values
    data = _frame_data(frame)
    e = kernels.patch_energy(data, tpl, float(position[0]), float(position[1]))
    if e < 0.0:
        raise OutOfBoundsError(
            f"template grid at ({position[0]:.2f}, {position[1]:.2f}) exits frame"
        )
    return e


def penalty(position, anchor, cfg):
    """Log penalty on deviation from the predicted position.

    Zero at the anchor, equal to ``strength`` at radius ``x_max``, and
    leveling off beyond so strong image evidence can override it.
    """
    dx = position[0] - anchor[0]
    dy = position[1] - anchor[1]
    dist = math.hypot(dx, dy)
    return cfg.strength * math.log(cfg.alpha * dist + 1.0) / math.log(cfg.alpha * cfg.x_max + 1.0)


def penalty_gradient(position, anchor, cfg):
    """Analytic gradient of ``penalty``; zero at the kink."""
    dx = position[0] - anchor[0]
    dy = position[1] - anchor[1]
    dist = math.hypot(dx, dy)
    if dist < KINK_EPS:
        return np.zeros(2)
    scale = cfg.strength * cfg.alpha / (
        math.log(cfg.alpha * cfg.x_max + 1.0) * (cfg.alpha * dist + 1.0) * dist
    )
    return np.array([scale * dx, scale * dy])


def regularized_single_energy(template, frame, position, anchor, cfg, coord_scale=1.0):
    """Template dissimilarity plus the (scaled) deviation penalty."""
    e = template_energy(template, frame, position)
    p = penalty(
        (position[0] * coord_scale, position[1] * coord_scale),
        (anchor[0] * coord_scale, anchor[1] * coord_scale),
        cfg.penalty,
    )
    return e + cfg.penalty_scale * p


def single_energy_gradient(template, frame, position, anchor, cfg, coord_scale=1.0):
    """Centred-difference gradient of the regularized single-feature energy.

    The whole energy (image term and penalty together) is differentiated
    numerically with step ``cfg.grad_step``, matching the single-feature
    tracker's optimization.
    """
    h = cfg.grad_step
    x, y = float(position[0]), float(position[1])

    def e(px, py):
        return regularized_single_energy(template, frame, (px, py), anchor, cfg, coord_scale)

    gx = (e(x + h, y) - e(x - h, y)) / (2.0 * h)
    gy = (e(x, y + h) - e(x, y - h)) / (2.0 * h)
    return np.array([gx, gy])


def regularized_multi_energy(templates, frame, state, cfg, extra=None, coord_scale=1.0):
    """Sum of per-feature template terms plus per-feature penalties.

    With no coupling term this equals the sum of the single-feature energies;
    ``extra`` is an optional ``(term, gradient)`` pair of callables on the
    state vector for an externally supplied coupling penalty.
    """
    data = _frame_data(frame)
    total = 0.0
    for f in range(state.count):
        tpl = templates[f] if isinstance(templates[f], np.ndarray) else templates[f].values
        pos = state.position(f)
        e = kernels.patch_energy(data, tpl, float(pos[0]), float(pos[1]))
        if e < 0.0:
            raise OutOfBoundsError(
                f"feature {f}: template grid at ({pos[0]:.2f}, {pos[1]:.2f}) exits frame",
                feature_index=f,
            )
        anc = state.anchor(f)
        p = penalty(
            (pos[0] * coord_scale, pos[1] * coord_scale),
            (anc[0] * coord_scale, anc[1] * coord_scale),
            cfg.penalty,
        )
        total += e + cfg.penalty_scale * p
    if extra is not None:
        total += float(extra[0](state.x))
    return total


def multi_energy_gradient(templates, frame, state, cfg, extra=None, coord_scale=1.0):
    """Gradient of the regularized multi-feature energy.

    Image terms are differentiated numerically (centred differences, step
    ``cfg.grad_step``); penalty terms use the analytic gradient.
    """
    data = _frame_data(frame)
    h = cfg.grad_step
    grad = np.zeros(state.x.size)
    for f in range(state.count):
        tpl = templates[f] if isinstance(templates[f], np.ndarray) else templates[f].values
        pos = state.position(f)
        g = kernels.patch_grad(data, tpl, float(pos[0]), float(pos[1]), h)
        if g is None:
            raise OutOfBoundsError(
                f"feature {f}: gradient probes at ({pos[0]:.2f}, {pos[1]:.2f}) exit frame",
                feature_index=f,
            )
        anc = state.anchor(f)
        pg = penalty_gradient(pos * coord_scale, anc * coord_scale, cfg.penalty)
        grad[2 * f] = g[0] + cfg.penalty_scale * coord_scale * pg[0]
        grad[2 * f + 1] = g[1] + cfg.penalty_scale * coord_scale * pg[1]
    if extra is not None:
        grad = grad + np.asarray(extra[1](state.x), dtype=np.float64).reshape(grad.shape)
    return grad
