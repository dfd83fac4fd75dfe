"""Feature lifecycle and per-frame tracking for all tracker variants.

Variants:
  * ``descent-plain``      -- average-flow initialization, no penalty
  * ``descent-gyro-init``  -- gyro-predicted initialization, no penalty
  * ``descent-gyro-prior`` -- gyro initialization plus deviation penalty
  * ``multi-gyro-prior``   -- joint state over all features, blended search
                              direction, per-feature penalties

Features whose template grid exits the frame are terminated rather than
padded; quality-based culling is deliberately absent.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter

from gyrotrack import energy as energy_mod
from gyrotrack import kernels, optimize
from gyrotrack.errors import ConfigError, OutOfBoundsError
from gyrotrack.gyro import integrate_rotation, predict_positions, rotation_to_homography
from gyrotrack.imaging import PYRAMID_LEVELS, build_pyramid, register_coarse

STATUS_ACTIVE = "active"
STATUS_LOST_BOUNDARY = "lost-boundary"
STATUS_LOST_DEGENERATE = "lost-degenerate"

VARIANTS = (
    "descent-plain",
    "descent-gyro-init",
    "descent-gyro-prior",
    "multi-gyro-prior",
)
GYRO_VARIANTS = frozenset(("descent-gyro-init", "descent-gyro-prior", "multi-gyro-prior"))
PRIOR_VARIANTS = frozenset(("descent-gyro-prior", "multi-gyro-prior"))


@dataclass
class Feature:
    """One tracked feature: position, per-level templates, lifecycle state."""

    fid: int
    position: np.ndarray
    templates: list = None
    x_gyro: np.ndarray = None
    status: str = STATUS_ACTIVE
    birth_frame: int = 0

    @property
    def active(self):
        return self.status == STATUS_ACTIVE


@dataclass(frozen=True)
class TrackerConfig:
    """Template geometry and bookkeeping policies."""

    template_size: int = 13
    refresh_period: int = 5
    register_radius: int = 20

    def __post_init__(self):
        if self.template_size < 3 or self.template_size % 2 == 0:
            raise ConfigError("template size must be odd and >= 3")


def average_flow_initialization(positions, prev_pyramid, cur_pyramid, search_radius=20):
    """Shift every feature by the single coarse-registration displacement."""
    a = register_coarse(prev_pyramid, cur_pyramid, search_radius)
    return np.atleast_2d(np.asarray(positions, dtype=np.float64)) + a, a


def gyro_initialization(positions, homography):
    """Seed features at their gyro-predicted positions; flags degenerates."""
    return predict_positions(homography, positions)


class Tracker:
    """Stateful frame-to-frame tracker over a fixed variant."""

    def __init__(self, variant, energy_cfg=None, descent_cfg=None, tracker_cfg=None,
                 calibration=None, gyro_stream=None):
        if variant not in VARIANTS:
            raise ConfigError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
        if variant in GYRO_VARIANTS and (calibration is None or gyro_stream is None):
            raise ConfigError(f"variant {variant!r} requires a calibration profile and a gyro stream")
        self.variant = variant
        self.energy_cfg = energy_cfg or energy_mod.EnergyConfig()
        self.descent_cfg = descent_cfg or optimize.DescentConfig()
        self.tracker_cfg = tracker_cfg or TrackerConfig()
        self.calibration = calibration
        self.gyro_stream = gyro_stream
        self.features = {}
        self._pyramid = None
        self._time = None
        self.frame_index = None
        self._next_fid = 0

    # ------------------------------------------------------------------
    # lifecycle
    # ------------------------------------------------------------------

    def start(self, frame, positions, fids=None):
        """Initialize tracking on the first frame."""
        self._pyramid = build_pyramid(frame)
        self._time = frame.timestamp
        self.frame_index = frame.frame_index
        self.features = {}
        positions = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
        if fids is None:
            fids = list(range(positions.shape[0]))
        for fid, pos in zip(fids, positions):
            self._spawn(int(fid), pos)
        return self.snapshot()

    def add_feature(self, fid, position):
        """Add a feature at the current frame (ids are never reused)."""
        if self._pyramid is None:
            raise ConfigError("tracker not started")
        if fid in self.features:
            raise ConfigError(f"feature id {fid} already used")
        self._spawn(int(fid), np.asarray(position, dtype=np.float64))

    def reset_feature(self, fid, position):
        """Re-seed an existing feature at a known position (re-initialization)."""
        feat = self.features[fid]
        feat.position = np.asarray(position, dtype=np.float64).copy()
        feat.x_gyro = None
        feat.templates = self._extract_templates(self._pyramid, feat.position)
        feat.status = STATUS_ACTIVE if feat.templates is not None else STATUS_LOST_BOUNDARY

    def remove_feature(self, fid):
        """Drop a feature from tracking; its id is never reused."""
        self.features.pop(fid, None)

    def _spawn(self, fid, position):
        feat = Feature(fid=fid, position=np.array(position, dtype=np.float64),
                       birth_frame=self.frame_index)
        feat.templates = self._extract_templates(self._pyramid, feat.position)
        if feat.templates is None:
            feat.status = STATUS_LOST_BOUNDARY
        self.features[fid] = feat
        self._next_fid = max(self._next_fid, fid + 1)

    def _extract_templates(self, pyramid, position):
        n = self.tracker_cfg.template_size
        tpls = []
        for lvl in range(PYRAMID_LEVELS):
            scale = float(2 ** lvl)
            data = pyramid.levels[lvl].data
            patch = kernels.extract_patch(data, position[0] / scale, position[1] / scale, n)
            if patch is None:
                return None
            tpls.append(patch)
        return tpls

    def snapshot(self):
        return {
            f.fid: Feature(f.fid, f.position.copy(), None,
                           None if f.x_gyro is None else f.x_gyro.copy(),
                           f.status, f.birth_frame)
            for f in self.features.values()
        }

    # ------------------------------------------------------------------
    # per-frame tracking
    # ------------------------------------------------------------------

    def step(self, frame):
        """Track all active features into ``frame``; returns a snapshot."""
        if self._pyramid is None:
            raise ConfigError("tracker not started")
        cur = build_pyramid(frame)
        actives = [f for f in self.features.values() if f.active]

        if self.variant in GYRO_VARIANTS:
            homography = self._interframe_homography(self._time, frame.timestamp)
            self._gyro_init(actives, homography, frame)
            actives = [f for f in actives if f.active]
        elif actives:
            inits, _ = average_flow_initialization(
                [f.position for f in actives], self._pyramid, cur,
                self.tracker_cfg.register_radius)
            for feat, init in zip(actives, inits):
                feat.position = init

        if self.variant == "multi-gyro-prior":
            self._solve_multi(cur, actives)
        else:
            for feat in actives:
                self._solve_single(cur, feat)

        period = self.tracker_cfg.refresh_period
        if period > 0 and frame.frame_index % period == 0:
            for feat in self.features.values():
                if not feat.active:
                    continue
                tpls = self._extract_templates(cur, feat.position)
                if tpls is None:
                    feat.status = STATUS_LOST_BOUNDARY
                else:
                    feat.templates = tpls

        self._pyramid = cur
        self._time = frame.timestamp
        self.frame_index = frame.frame_index
        return self.snapshot()

    def _interframe_homography(self, t_prev, t_cur):
        lat = self.calibration.latency
        rot = integrate_rotation(self.gyro_stream, t_prev + lat, t_cur + lat)
        return rotation_to_homography(rot, self.calibration)

    def _gyro_init(self, actives, homography, frame):
        if not actives:
            return
        pts = np.array([f.position for f in actives])
        pred, ok = predict_positions(homography, pts)
        w, h = frame.width, frame.height
        for feat, p, valid in zip(actives, pred, ok):
            if not valid:
                feat.status = STATUS_LOST_DEGENERATE
                continue
            if not (0.0 <= p[0] <= w - 1 and 0.0 <= p[1] <= h - 1):
                feat.position = p.copy()
                feat.status = STATUS_LOST_BOUNDARY
                continue
            feat.x_gyro = p.copy()
            feat.position = p.copy()

    # ------------------------------------------------------------------
    # single-feature solve
    # ------------------------------------------------------------------

    def _solve_single(self, pyramid, feat):
        use_prior = self.variant in PRIOR_VARIANTS
        ecfg = self.energy_cfg
        pcfg = ecfg.penalty
        h_step = ecfg.grad_step
        # penalty constants hoisted out of the per-evaluation closures
        pen_gain = ecfg.penalty_scale * pcfg.strength / math.log(pcfg.alpha * pcfg.x_max + 1.0)
        alpha = pcfg.alpha
        anchor = feat.x_gyro if use_prior else None

        def solve_at_level(level, pos):
            img = pyramid.levels[level].data
            tpl = feat.templates[level]
            scale = float(2 ** level)

            if anchor is None:
                def energy_fn(p):
                    e = kernels.patch_energy(img, tpl, p[0], p[1])
                    if e < 0.0:
                        raise OutOfBoundsError(
                            f"feature {feat.fid}: template exits frame at level {level}")
                    return e

                def grad_fn(p):
                    g = kernels.patch_grad(img, tpl, p[0], p[1], h_step)
                    if g is None:
                        raise OutOfBoundsError(
                            f"feature {feat.fid}: gradient probes exit frame at level {level}")
                    return np.array(g)
            else:
                ax, ay = float(anchor[0]), float(anchor[1])

                def pen(px, py):
                    d = math.hypot(px * scale - ax, py * scale - ay)
                    return pen_gain * math.log(alpha * d + 1.0)

                def energy_fn(p):
                    e = kernels.patch_energy(img, tpl, p[0], p[1])
                    if e < 0.0:
                        raise OutOfBoundsError(
                            f"feature {feat.fid}: template exits frame at level {level}")
                    return e + pen(p[0], p[1])

                def grad_fn(p):
                    g = kernels.patch_grad(img, tpl, p[0], p[1], h_step)
                    if g is None:
                        raise OutOfBoundsError(
                            f"feature {feat.fid}: gradient probes exit frame at level {level}")
                    x, y = float(p[0]), float(p[1])
                    gx = g[0] + (pen(x + h_step, y) - pen(x - h_step, y)) / (2.0 * h_step)
                    gy = g[1] + (pen(x, y + h_step) - pen(x, y - h_step)) / (2.0 * h_step)
                    return np.array([gx, gy])

            return optimize.descend(
                energy_fn, grad_fn, pos, self.descent_cfg,
                min_steps=self.descent_cfg.min_steps_at(level, PYRAMID_LEVELS))

        try:
            feat.position = optimize.coarse_to_fine(
                solve_at_level, feat.position, PYRAMID_LEVELS)
        except OutOfBoundsError:
            feat.status = STATUS_LOST_BOUNDARY

    # ------------------------------------------------------------------
    # joint multi-feature solve
    # ------------------------------------------------------------------

    def _solve_multi(self, pyramid, actives):
        order = [f for f in actives if f.active]
        if not order:
            return
        ecfg = self.energy_cfg
        dcfg = self.descent_cfg
        x = np.concatenate([f.position for f in order])
        anchors_full = np.concatenate([f.x_gyro for f in order])

        x = x / float(2 ** (PYRAMID_LEVELS - 1))
        for level in range(PYRAMID_LEVELS - 1, -1, -1):
            scale = float(2 ** level)
            img = pyramid.levels[level].data
            min_steps = dcfg.min_steps_at(level, PYRAMID_LEVELS)
            while order:
                templates = [f.templates[level] for f in order]
                state_anchors = anchors_full / scale
                state = energy_mod.MultiState(x, state_anchors)

                def energy_fn(vec):
                    st = energy_mod.MultiState(vec, state_anchors)
                    return energy_mod.regularized_multi_energy(
                        templates, img, st, ecfg, coord_scale=scale)

                def grad_fn(vec):
                    st = energy_mod.MultiState(vec, state_anchors)
                    return energy_mod.multi_energy_gradient(
                        templates, img, st, ecfg, coord_scale=scale)

                try:
                    x = optimize.descend(
                        energy_fn, grad_fn, state.x, dcfg, min_steps=min_steps,
                        direction=optimize.multi_search_direction)
                    break
                except OutOfBoundsError as exc:
                    idx = exc.feature_index
                    if idx is None:
                        raise
                    lost = order.pop(idx)
                    iterate = getattr(exc, "descent_iterate", x)
                    lost.position = iterate[2 * idx:2 * idx + 2] * scale
                    lost.status = STATUS_LOST_BOUNDARY
                    x = np.delete(iterate, [2 * idx, 2 * idx + 1])
                    anchors_full = np.delete(anchors_full, [2 * idx, 2 * idx + 1])
            if not order:
                return
            if level > 0:
                x = x * 2.0
        for i, feat in enumerate(order):
            feat.position = x[2 * i:2 * i + 2].copy()


# ---------------------------------------------------------------------------
# feature detection (for standalone CLI use)
# ---------------------------------------------------------------------------

def detect_features(frame, max_count=50, min_spacing=10.0, margin=2):
    """Corner-like points: local maxima of the gradient-covariance
    minimum eigenvalue over 3x3 windows, strongest first, with greedy
    spacing suppression. May return fewer than ``max_count`` points.
    """
    img = frame.data if not isinstance(frame, np.ndarray) else frame
    gy, gx = np.gradient(img)
    a = uniform_filter(gx * gx, size=3, mode="constant")
    b = uniform_filter(gx * gy, size=3, mode="constant")
    c = uniform_filter(gy * gy, size=3, mode="constant")
    lam = 0.5 * ((a + c) - np.sqrt((a - c) ** 2 + 4.0 * b * b))

    margin = max(int(margin), 2)
    interior = np.zeros_like(lam, dtype=bool)
    interior[margin:-margin, margin:-margin] = True
    peak = lam > 1e-9
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dx == 0 and dy == 0:
                continue
            shifted = np.roll(np.roll(lam, dy, axis=0), dx, axis=1)
            peak &= lam > shifted
    peak &= interior

    ys, xs = np.nonzero(peak)
    if ys.size == 0:
        return np.empty((0, 2))
    scores = lam[ys, xs]
    order = np.lexsort((xs, ys, -scores))
    chosen = []
    min_sq = float(min_spacing) ** 2
    for idx in order:
        p = (float(xs[idx]), float(ys[idx]))
        if all((p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2 >= min_sq for q in chosen):
            chosen.append(p)
            if len(chosen) >= max_count:
                break
    return np.array(chosen)
