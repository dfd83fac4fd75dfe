"""Benchmark machinery: synthetic degradation, synthetic scenes with exact
ground truth, the mean-track-length evaluation protocol, and exhaustive
penalty-strength learning.

Synthetic sequences render a distant plane through a rotating camera with the
same homography chain the tracker uses for prediction, so the gyro-predicted
flow is correct by construction (up to integration error). Per-feature
translational drift can be layered on top to model flow the gyro cannot see.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from gyrotrack import energy as energy_mod
from gyrotrack import optimize
from gyrotrack.errors import DataError
from gyrotrack.gyro import GyroStream, integrate_rotation, rotation_to_homography
from gyrotrack.imaging import GrayFrame, gaussian_blur
from gyrotrack.tracker import Tracker, TrackerConfig

DEFAULT_LOSS_RADIUS = 10.0
DEFAULT_GYRO_HZ = 400.0


# ---------------------------------------------------------------------------
# synthetic degradation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DegradationProfile:
    """Multiply, add noise, blur, add noise again; clamped to 0..255."""

    m: float = 1.0
    mu1: float = 0.0
    sigma1: float = 0.0
    sigma_x: float = 0.0
    sigma_y: float = 0.0
    mu2: float = 0.0
    sigma2: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.m <= 0 or min(self.sigma1, self.sigma_x, self.sigma_y, self.sigma2) < 0:
            raise ValueError("multiplier must be positive and sigmas non-negative")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


LOW_DEGRADATION = DegradationProfile(m=0.9, mu1=0.0, sigma1=15.0,
                                     sigma_x=1.5, sigma_y=1.5, mu2=0.0, sigma2=1.5)
HIGH_DEGRADATION = DegradationProfile(m=0.8, mu1=0.0, sigma1=30.0,
                                      sigma_x=3.0, sigma_y=3.0, mu2=0.0, sigma2=3.0)


def _stage_noise(seed, frame_index, stage, shape, mu, sigma):
    """Counter-based noise keyed by (seed, frame, stage): reproducible and
    independent of evaluation order."""
    key = np.array([np.uint64(seed), np.uint64(2 * frame_index + stage)], dtype=np.uint64)
    rng = np.random.Generator(np.random.Philox(key=key))
    return rng.normal(mu, sigma, size=shape)


def degrade_frame(frame, profile, frame_index=None):
    """Degrade one frame; deterministic given (profile.seed, frame index)."""
    if frame_index is None:
        frame_index = frame.frame_index
    out = profile.m * frame.data
    if profile.sigma1 > 0 or profile.mu1 != 0:
        out = out + _stage_noise(profile.seed, frame_index, 0, out.shape,
                                 profile.mu1, profile.sigma1)
    np.clip(out, 0.0, 255.0, out=out)
    out = gaussian_blur(out, profile.sigma_x, profile.sigma_y)
    if profile.sigma2 > 0 or profile.mu2 != 0:
        out = out + _stage_noise(profile.seed, frame_index, 1, out.shape,
                                 profile.mu2, profile.sigma2)
    np.clip(out, 0.0, 255.0, out=out)
    return GrayFrame(out, frame_index=frame.frame_index, timestamp=frame.timestamp)


def degrade_sequence(frames, profile):
    return [degrade_frame(f, profile) for f in frames]


# ---------------------------------------------------------------------------
# ground truth
# ---------------------------------------------------------------------------

@dataclass
class GroundTruth:
    """Per-feature true trajectories: fid -> (birth frame, (L, 2) positions)."""

    tracks: dict = field(default_factory=dict)

    def add(self, fid, birth_frame, positions):
        self.tracks[int(fid)] = (int(birth_frame), np.asarray(positions, dtype=np.float64))

    def feature_ids(self):
        return sorted(self.tracks)

    def birth(self, fid):
        return self.tracks[fid][0]

    def last_frame(self, fid):
        birth, pos = self.tracks[fid]
        return birth + pos.shape[0] - 1

    def alive(self, fid, frame):
        birth, pos = self.tracks[fid]
        return birth <= frame <= birth + pos.shape[0] - 1

    def position(self, fid, frame):
        birth, pos = self.tracks[fid]
        if not self.alive(fid, frame):
            raise DataError(f"feature {fid} has no ground truth at frame {frame}")
        return pos[frame - birth]

    def to_rows(self):
        rows = []
        for fid in self.feature_ids():
            birth, pos = self.tracks[fid]
            for i, p in enumerate(pos):
                rows.append((birth + i, fid, float(p[0]), float(p[1])))
        rows.sort()
        return rows

    @classmethod
    def from_rows(cls, rows):
        per_fid = {}
        for frame, fid, x, y in rows:
            per_fid.setdefault(int(fid), []).append((int(frame), float(x), float(y)))
        truth = cls()
        for fid, items in per_fid.items():
            items.sort()
            frames = [it[0] for it in items]
            if frames != list(range(frames[0], frames[0] + len(frames))):
                raise DataError(f"feature {fid} ground truth has gaps")
            truth.add(fid, frames[0], [(x, y) for _, x, y in items])
        return truth


# ---------------------------------------------------------------------------
# synthetic scenes
# ---------------------------------------------------------------------------

@dataclass
class Scene:
    """A procedural plane texture plus feature annotations.

    ``static_features`` ride the texture (pure camera-motion flow);
    ``sprites`` are drawn at explicit positions each frame and may drift
    independently of camera motion.
    """

    width: int
    height: int
    texture: callable
    static_features: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))
    sprites: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))
    sprite_drift: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))
    sprite_draw: callable = None


def value_noise_texture(cell=24.0, seed=0, lo=60.0, hi=190.0, extent=4096):
    """Smooth random texture: bilinear interpolation of a seeded value grid."""
    rng = np.random.default_rng(seed)
    n = int(2 * extent / cell) + 3
    grid = rng.uniform(lo, hi, size=(n, n))

    def tex(x, y):
        gx = np.clip(x / cell + n / 2.0, 0.0, n - 1.001)
        gy = np.clip(y / cell + n / 2.0, 0.0, n - 1.001)
        ix = np.floor(gx).astype(np.intp)
        iy = np.floor(gy).astype(np.intp)
        fx = gx - ix
        fy = gy - iy
        top = grid[iy, ix] * (1 - fx) + grid[iy, ix + 1] * fx
        bot = grid[iy + 1, ix] * (1 - fx) + grid[iy + 1, ix + 1] * fx
        return top * (1 - fy) + bot * fy

    return tex


def checker_texture(cell=32.0, lo=60.0, hi=190.0, softness=1.0):
    """Soft checkerboard (smooth edges keep it resolvable after warping)."""

    def tex(x, y):
        wave = np.sin(np.pi * x / cell) * np.sin(np.pi * y / cell)
        return lo + (hi - lo) * 0.5 * (1.0 + np.tanh(wave / (softness / cell * np.pi)))

    return tex


def bar_scene(width, height, n_bars=12, seed=0, contrast=80.0, halfwidth=5.0,
              softness=1.2, length=260.0, margin=90.0, features_per_bar=2):
    """Long soft-edged bars at random orientations; features sit on bar edges.

    The edge points are ambiguous along their bar, which is exactly the
    population the deviation penalty is meant to stabilize.
    """
    rng = np.random.default_rng(seed)
    bars = []
    for _ in range(n_bars):
        cx = rng.uniform(margin + 40, width - margin - 40)
        cy = rng.uniform(margin + 30, height - margin - 30)
        theta = rng.uniform(0.0, math.pi)
        amp = contrast * rng.choice([-1.0, 1.0])
        bars.append((cx, cy, math.cos(theta), math.sin(theta), amp))

    base = 120.0

    def tex(x, y):
        out = base + 0.04 * x - 0.03 * y
        for cx, cy, ct, st, amp in bars:
            dx = x - cx
            dy = y - cy
            along = dx * ct + dy * st
            across = -dx * st + dy * ct
            profile = 1.0 / (1.0 + np.exp((np.abs(across) - halfwidth) / softness))
            window = 1.0 / (1.0 + np.exp((np.abs(along) - length / 2.0) / (4.0 * softness)))
            out = out + amp * profile * window
        return out

    feats = []
    offsets = np.linspace(-0.28, 0.28, features_per_bar) * length
    for cx, cy, ct, st, _ in bars:
        for off in offsets:
            # sit on the bar's edge line, where the transverse gradient peaks
            fx = cx + off * ct - halfwidth * st
            fy = cy + off * st + halfwidth * ct
            if margin <= fx <= width - margin and margin <= fy <= height - margin:
                feats.append((fx, fy))
    return Scene(width, height, tex, static_features=np.array(feats))


def blob_scene(width, height, n_blobs=5, seed=0, amplitude=130.0, radius=2.5,
               drift=None, base=80.0, margin=110.0):
    """Radially symmetric bright blobs (corner-like) over a flat background.

    ``drift`` is an (n_blobs, 2) per-frame displacement in pixels; drifting
    blobs are rendered as sprites so their motion is invisible to the gyro.
    """
    rng = np.random.default_rng(seed)
    pos = np.column_stack([
        rng.uniform(margin, width - margin, size=n_blobs),
        rng.uniform(margin, height - margin, size=n_blobs),
    ])
    if drift is None:
        drift = np.zeros((n_blobs, 2))
    drift = np.asarray(drift, dtype=np.float64)

    def tex(x, y):
        return np.full_like(np.asarray(x, dtype=np.float64), base)

    def draw(img, positions):
        h, w = img.shape
        reach = int(math.ceil(radius * 5))
        for px, py in positions:
            x0 = max(0, int(px) - reach)
            x1 = min(w, int(px) + reach + 1)
            y0 = max(0, int(py) - reach)
            y1 = min(h, int(py) + reach + 1)
            if x0 >= x1 or y0 >= y1:
                continue
            ys, xs = np.mgrid[y0:y1, x0:x1]
            r2 = (xs - px) ** 2 + (ys - py) ** 2
            img[y0:y1, x0:x1] += amplitude * np.exp(-0.5 * r2 / radius ** 2)

    return Scene(width, height, tex, sprites=pos, sprite_drift=drift, sprite_draw=draw)


def sinusoid_rates(amps, freqs, phases=(0.0, 0.0, 0.0)):
    """Smooth rotation-rate profile: per-axis sinusoids (rad/s)."""
    amps = np.asarray(amps, dtype=np.float64)
    freqs = np.asarray(freqs, dtype=np.float64)
    phases = np.asarray(phases, dtype=np.float64)

    def rates(t):
        t = np.asarray(t, dtype=np.float64)[:, None]
        return amps * np.sin(2.0 * math.pi * freqs * t + phases)

    return rates


def synth_sequence(scene, cal, rate_fn, n_frames, fps=30.0, gyro_hz=DEFAULT_GYRO_HZ):
    """Render a rotating-camera sequence with matching gyro data and truth.

    Returns ``(frames, stream, truth)``. Static features are chained through
    the per-interval homographies; sprites additionally accumulate their
    per-frame drift, so their ground truth deviates from the gyro-predicted
    flow by exactly that drift.
    """
    duration = (n_frames - 1) / fps
    n_samples = max(2, int(math.ceil(duration * gyro_hz)) + 2)
    times = np.arange(n_samples) / gyro_hz
    stream = GyroStream(times, rate_fn(times))

    inter = [rotation_to_homography(
        integrate_rotation(stream, (k - 1) / fps, k / fps), cal)
        for k in range(1, n_frames)]

    statics = [scene.static_features.copy()]
    sprites = [scene.sprites.copy()]
    for k in range(1, n_frames):
        h = inter[k - 1]
        statics.append(_apply_homography(h, statics[-1]))
        sprites.append(_apply_homography(h, sprites[-1]) + scene.sprite_drift)

    xs, ys = np.meshgrid(np.arange(scene.width, dtype=np.float64),
                         np.arange(scene.height, dtype=np.float64))
    frames = []
    h_0k = np.eye(3)
    exited = None
    for k in range(n_frames):
        if k > 0:
            h_0k = inter[k - 1] @ h_0k
        inv = np.linalg.inv(h_0k)
        denom = inv[2, 0] * xs + inv[2, 1] * ys + inv[2, 2]
        sx = (inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]) / denom
        sy = (inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]) / denom
        img = np.asarray(scene.texture(sx, sy), dtype=np.float64)
        if scene.sprite_draw is not None and len(sprites[k]):
            scene.sprite_draw(img, sprites[k])
        np.clip(img, 0.0, 255.0, out=img)
        frames.append(GrayFrame(img, frame_index=k, timestamp=k / fps))

        if exited is None:
            all_pos = np.vstack([statics[k], sprites[k]])
            if all_pos.size and not np.all(
                (all_pos[:, 0] >= 0) & (all_pos[:, 0] <= scene.width - 1)
                & (all_pos[:, 1] >= 0) & (all_pos[:, 1] <= scene.height - 1)
            ):
                exited = k

    if exited is not None:
        import warnings

        warnings.warn(f"some features leave the frame at index {exited}", stacklevel=2)

    truth = GroundTruth()
    n_static = scene.static_features.shape[0]
    for i in range(n_static):
        truth.add(i, 0, np.array([s[i] for s in statics]))
    for j in range(scene.sprites.shape[0]):
        truth.add(n_static + j, 0, np.array([s[j] for s in sprites]))
    return frames, stream, truth


def _apply_homography(h, pts):
    if pts.size == 0:
        return pts.copy()
    hom = np.column_stack([pts, np.ones(pts.shape[0])])
    mapped = hom @ h.T
    return mapped[:, :2] / mapped[:, 2:3]


# ---------------------------------------------------------------------------
# evaluation protocol
# ---------------------------------------------------------------------------

@dataclass
class TrackReport:
    """Track segments between re-initializations plus the loss-event log."""

    segments: dict
    loss_events: list

    @property
    def n_segments(self):
        return sum(len(v) for v in self.segments.values())

    @property
    def total_tracked_frames(self):
        return sum(sum(v) for v in self.segments.values())

    @property
    def mean_track_length(self):
        n = self.n_segments
        return self.total_tracked_frames / n if n else 0.0


class ScriptedTracker:
    """Replays fixed trajectories; used to test the evaluation harness."""

    def __init__(self, trajectories):
        # fid -> {frame: (x, y)}
        self.trajectories = trajectories
        self.positions = {}
        self.frame_index = None

    def start(self, frame, positions, fids):
        self.frame_index = frame.frame_index
        self.positions = {fid: np.asarray(p, dtype=np.float64)
                          for fid, p in zip(fids, positions)}
        return self.snapshot()

    def add_feature(self, fid, position):
        self.positions[fid] = np.asarray(position, dtype=np.float64)

    def remove_feature(self, fid):
        self.positions.pop(fid, None)

    def reset_feature(self, fid, position):
        self.positions[fid] = np.asarray(position, dtype=np.float64)

    def step(self, frame):
        self.frame_index = frame.frame_index
        for fid in list(self.positions):
            table = self.trajectories.get(fid, {})
            if frame.frame_index in table:
                self.positions[fid] = np.asarray(table[frame.frame_index], dtype=np.float64)
        return self.snapshot()

    def snapshot(self):
        from gyrotrack.tracker import Feature

        return {fid: Feature(fid, pos.copy(), None, None, "active", 0)
                for fid, pos in self.positions.items()}


def run_evaluation(tracker, frames, truth, loss_radius=DEFAULT_LOSS_RADIUS):
    """Drive a tracker over ``frames``, resetting features that wander.

    Features are born from ground truth; whenever a feature's position is at
    least ``loss_radius`` pixels from truth (or the tracker terminated it),
    a loss is logged and the feature is re-initialized at its true position.
    Terminal (never-lost) stretches count as segments too.
    """
    if not frames:
        raise DataError("no frames to evaluate")
    first = frames[0].frame_index
    fids = truth.feature_ids()
    born_now = [fid for fid in fids if truth.birth(fid) == first]
    for fid in fids:
        if truth.birth(fid) < first:
            raise DataError(f"feature {fid} born before the first frame")
    tracker.start(frames[0], [truth.position(fid, first) for fid in born_now], born_now)

    seg_start = {fid: truth.birth(fid) for fid in fids}
    segments = {fid: [] for fid in fids}
    loss_events = []

    for frame in frames[1:]:
        k = frame.frame_index
        snap = tracker.step(frame)
        for fid in fids:
            if not (truth.alive(fid, k) and truth.alive(fid, k - 1)):
                continue
            feat = snap.get(fid)
            if feat is None:
                continue
            target = truth.position(fid, k)
            drift = float(np.linalg.norm(feat.position - target))
            if not np.isfinite(drift):
                drift = math.inf
            if feat.status != "active" or drift >= loss_radius:
                loss_events.append((k, fid, drift))
                segments[fid].append(k - seg_start[fid])
                seg_start[fid] = k
                tracker.reset_feature(fid, target)
        for fid in fids:
            if truth.alive(fid, k) and truth.birth(fid) == k:
                tracker.add_feature(fid, truth.position(fid, k))
            if truth.last_frame(fid) == k and hasattr(tracker, "remove_feature"):
                tracker.remove_feature(fid)

    last_eval = frames[-1].frame_index
    for fid in fids:
        end = min(truth.last_frame(fid), last_eval) + 1
        if end > seg_start[fid]:
            segments[fid].append(end - seg_start[fid])
    return TrackReport(segments=segments, loss_events=loss_events)


def evaluate(variant, frames, truth, stream=None, calibration=None,
             loss_radius=DEFAULT_LOSS_RADIUS, energy_cfg=None, descent_cfg=None,
             tracker_cfg=None):
    """Evaluate one tracker variant over a sequence against ground truth."""
    tracker = Tracker(variant, energy_cfg=energy_cfg, descent_cfg=descent_cfg,
                      tracker_cfg=tracker_cfg, calibration=calibration,
                      gyro_stream=stream)
    return run_evaluation(tracker, frames, truth, loss_radius=loss_radius)


def learn_parameters(variants, training_sets, lambda_grid, loss_radius=DEFAULT_LOSS_RADIUS,
                     energy_cfg=None, descent_cfg=None, tracker_cfg=None):
    """Exhaustive search for the penalty strength per variant.

    ``training_sets`` is a list of (frames, stream, calibration, truth)
    tuples. Returns ``{variant: (best_strength, {strength: mean score})}``;
    ties prefer the smaller strength.
    """
    base = energy_cfg or energy_mod.EnergyConfig()
    results = {}
    for variant in variants:
        scores = {}
        for lam in lambda_grid:
            cfg = replace(base, penalty=replace(base.penalty, strength=float(lam)))
            vals = []
            for frames, stream, cal, truth in training_sets:
                report = evaluate(variant, frames, truth, stream=stream,
                                  calibration=cal, loss_radius=loss_radius,
                                  energy_cfg=cfg, descent_cfg=descent_cfg,
                                  tracker_cfg=tracker_cfg)
                vals.append(report.mean_track_length)
            scores[float(lam)] = float(np.mean(vals))
        best = max(sorted(scores), key=lambda lam: (scores[lam], -lam))
        results[variant] = (best, scores)
    return results
