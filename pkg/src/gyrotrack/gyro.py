"""Rotation-rate processing: de-biasing, attitude integration, homography
construction, combined-matrix calibration, and camera/gyro latency estimation.

The combined matrix maps camera-centred 3-D directions to homogeneous pixel
coordinates; it is the product of the camera calibration matrix and the fixed
gyro-to-camera rotation, and it is the only calibration object the flow
predictor needs. Pure camera rotation R between two frames moves image points
by the homography ``H = Kt @ R @ inv(Kt)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from gyrotrack.errors import (
    AlignmentError,
    CalibrationError,
    InsufficientDataError,
    RankDeficiencyError,
)

DEGENERATE_W = 1e-12
DEFAULT_MAX_STEP = 1.0 / 400.0


# ---------------------------------------------------------------------------
# quaternion helpers (w, x, y, z)
# ---------------------------------------------------------------------------

def quat_mul(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_to_matrix(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(m):
    """Unit quaternion for a rotation matrix (Shepperd's method)."""
    m = np.asarray(m, dtype=np.float64)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0:
        s = math.sqrt(tr + 1.0) * 2
        q = np.array([0.25 * s, (m[2, 1] - m[1, 2]) / s,
                      (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s])
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        q = np.array([(m[2, 1] - m[1, 2]) / s, 0.25 * s,
                      (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s])
    elif m[1, 1] >= m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        q = np.array([(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s,
                      0.25 * s, (m[1, 2] + m[2, 1]) / s])
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        q = np.array([(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s,
                      (m[1, 2] + m[2, 1]) / s, 0.25 * s])
    return q / np.linalg.norm(q)


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Rotation:
    """A rotation held as a unit quaternion plus its matrix form."""

    quat: np.ndarray
    matrix: np.ndarray = None

    def __post_init__(self):
        q = np.asarray(self.quat, dtype=np.float64)
        q = q / np.linalg.norm(q)
        object.__setattr__(self, "quat", q)
        object.__setattr__(self, "matrix", quat_to_matrix(q))

    @classmethod
    def identity(cls):
        return cls(np.array([1.0, 0.0, 0.0, 0.0]))

    @classmethod
    def from_matrix(cls, m):
        return cls(matrix_to_quat(m))

    @property
    def angle(self):
        """Rotation angle in radians."""
        w = min(1.0, abs(float(self.quat[0])))
        return 2.0 * math.acos(w)

    @property
    def axis(self):
        """Unit rotation axis; None for (near-)identity rotations."""
        v = self.quat[1:]
        n = np.linalg.norm(v)
        if n < 1e-12:
            return None
        a = v / n
        return a if self.quat[0] >= 0 else -a


@dataclass(frozen=True)
class GyroStream:
    """Time-ordered 3-axis rotation-rate samples (radians/second)."""

    times: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        t = np.ascontiguousarray(self.times, dtype=np.float64)
        r = np.ascontiguousarray(self.rates, dtype=np.float64)
        if t.ndim != 1 or r.shape != (t.shape[0], 3):
            raise ValueError("stream needs times (N,) and rates (N, 3)")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(r))):
            raise ValueError("stream samples must be finite")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("stream timestamps must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "rates", r)

    def __len__(self):
        return self.times.shape[0]

    def magnitudes(self):
        return np.linalg.norm(self.rates, axis=1)


@dataclass
class CalibrationProfile:
    """Everything needed to turn gyro data into pixel flow."""

    k_tilde: np.ndarray
    bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    latency: float = 0.0

    def __post_init__(self):
        k = np.asarray(self.k_tilde, dtype=np.float64)
        if k.shape != (3, 3):
            raise ValueError("combined matrix must be 3x3")
        if abs(k[2, 2] - 1.0) > 1e-9:
            raise ValueError("combined matrix must be normalized to k[2,2] = 1")
        if abs(np.linalg.det(k)) < 1e-12:
            raise CalibrationError("combined matrix is singular")
        self.k_tilde = k
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(3)
        self.latency = float(self.latency)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def estimate_bias(stream, t_start, t_end):
    """Per-axis mean rate over a stationary window (at least 10 samples)."""
    mask = (stream.times >= t_start) & (stream.times <= t_end)
    if int(mask.sum()) < 10:
        raise InsufficientDataError(
            f"bias window [{t_start}, {t_end}] holds {int(mask.sum())} samples, need 10"
        )
    return stream.rates[mask].mean(axis=0)


def debias(stream, bias):
    """Subtract a constant bias from every sample; timestamps unchanged."""
    b = np.asarray(bias, dtype=np.float64).reshape(3)
    return GyroStream(stream.times, stream.rates - b)


def _rk4_step(q, rate, h):
    def deriv(qq):
        return 0.5 * quat_mul(qq, np.array([0.0, rate[0], rate[1], rate[2]]))

    k1 = deriv(q)
    k2 = deriv(q + 0.5 * h * k1)
    k3 = deriv(q + 0.5 * h * k2)
    k4 = deriv(q + h * k3)
    q = q + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return q / np.linalg.norm(q)


def integrate_rotation(stream, t0, t1, max_step=DEFAULT_MAX_STEP):
    """Integrate the attitude quaternion over [t0, t1].

    The quaternion starts at identity and obeys dQ/dt = Q * (0, r) / 2 with
    zero-order-hold rates between samples (nearest sample beyond the ends).
    Each constant-rate piece is advanced with RK4 substeps no longer than
    ``max_step``, renormalizing after every step.
    """
    if len(stream) == 0:
        raise InsufficientDataError("cannot integrate an empty stream")
    if not t1 > t0:
        raise ValueError(f"need t1 > t0, got [{t0}, {t1}]")

    times = stream.times
    lo = int(np.searchsorted(times, t0, side="right"))
    hi = int(np.searchsorted(times, t1, side="left"))
    breaks = np.concatenate(([t0], times[lo:hi], [t1]))

    q = np.array([1.0, 0.0, 0.0, 0.0])
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b <= a:
            continue
        idx = min(max(int(np.searchsorted(times, a, side="right")) - 1, 0), len(stream) - 1)
        rate = stream.rates[idx]
        span = b - a
        nsub = max(1, int(math.ceil(span / max_step - 1e-12)))
        h = span / nsub
        for _ in range(nsub):
            q = _rk4_step(q, rate, h)
    return Rotation(q)


def rotation_to_homography(rotation, cal):
    """Homography moving image points across a pure camera rotation."""
    k = cal.k_tilde
    r = rotation.matrix if isinstance(rotation, Rotation) else np.asarray(rotation)
    if abs(np.linalg.det(k)) < 1e-12:
        raise CalibrationError("combined matrix is singular")
    return k @ r @ np.linalg.inv(k)


def predict_positions(homography, positions):
    """Map feature positions through a homography.

    Returns ``(predicted, ok)`` where ``ok[i]`` is False for points whose
    third homogeneous coordinate is not safely positive; those rows of
    ``predicted`` are NaN. Degenerate points are flagged, never dropped.
    """
    pts = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    hom = np.column_stack([pts, np.ones(pts.shape[0])])
    mapped = hom @ np.asarray(homography).T
    w = mapped[:, 2]
    ok = w > DEGENERATE_W
    out = np.full((pts.shape[0], 2), np.nan)
    out[ok] = mapped[ok, :2] / w[ok, None]
    return out, ok


def _rotation_matrices(pairs):
    rots = []
    for r, h in pairs:
        m = r.matrix if isinstance(r, Rotation) else np.asarray(r, dtype=np.float64)
        rots.append((m, np.asarray(h, dtype=np.float64)))
    return rots


def calibrate_k_tilde(pairs):
    """Least-squares combined matrix from (rotation, homography) pairs.

    Each pair contributes the nine linear equations of ``H @ Kt = Kt @ R``.
    The stacked (9N x 9) system is solved through its smallest singular
    direction, then rescaled so the bottom-right entry is 1. Rotations must
    excite at least two independent axes.
    """
    pairs = _rotation_matrices(pairs)
    if len(pairs) < 2:
        raise InsufficientDataError("need at least 2 rotation/homography pairs")

    axes = []
    for m, _ in pairs:
        rot = Rotation.from_matrix(m)
        if rot.angle > 1e-10 and rot.axis is not None:
            axes.append(rot.axis)
    if len(axes) == 0:
        raise RankDeficiencyError(
            "all rotations are the identity; no axis is excited",
            deficient_directions=np.eye(3),
        )
    _, sv, vt = np.linalg.svd(np.asarray(axes))
    rank = int(np.sum(sv > max(1e-8 * sv[0], 1e-12)))
    if rank < 2:
        raise RankDeficiencyError(
            "rotations excite only one axis; calibration is not unique",
            deficient_directions=vt[rank:],
        )

    eye = np.eye(3)
    blocks = []
    for m, h in pairs:
        if abs(h[2, 2]) < 1e-12:
            raise CalibrationError("homography has a vanishing (3,3) entry")
        hn = h / h[2, 2]
        blocks.append(np.kron(hn, eye) - np.kron(eye, m.T))
    a = np.vstack(blocks)
    _, _, vh = np.linalg.svd(a)
    k = vh[-1]
    if abs(k[8]) < 1e-12:
        raise CalibrationError("solution cannot be normalized to k[2,2] = 1")
    k_tilde = (k / k[8]).reshape(3, 3)
    return CalibrationProfile(k_tilde=k_tilde)


def calibration_residual(cal, pairs):
    """RMS entry of ``H @ Kt - Kt @ R`` over normalized pairs."""
    pairs = _rotation_matrices(pairs)
    total = 0.0
    for m, h in pairs:
        hn = h / h[2, 2]
        d = hn @ cal.k_tilde - cal.k_tilde @ m
        total += float(np.sum(d * d))
    return math.sqrt(total / (9 * len(pairs)))


def estimate_latency(flow_times, flow_values, stream, max_lag):
    """Camera/gyro clock offset by normalized cross-correlation.

    The gyro rate magnitude is resampled onto the frame clock shifted by
    candidate lags (multiples of the frame period in ``[-max_lag, +max_lag]``)
    and correlated against the flow-magnitude series. The returned lag is the
    correlation argmax: the gyro clock reads ``t + lag`` when the camera
    clock reads ``t``. Ties prefer the smallest magnitude lag.
    """
    ft = np.asarray(flow_times, dtype=np.float64)
    fv = np.asarray(flow_values, dtype=np.float64)
    if ft.size < 2 or len(stream) < 2:
        raise AlignmentError("need at least two samples in each series")
    if float(np.std(fv)) < 1e-12:
        raise AlignmentError("flow series has zero variance; correlation undefined")
    mags = stream.magnitudes()
    if float(np.std(mags)) < 1e-12:
        raise AlignmentError("gyro magnitude series has zero variance; correlation undefined")

    period = float(np.median(np.diff(ft)))
    n_lags = int(math.floor(max_lag / period + 1e-9))
    t_lo, t_hi = float(stream.times[0]), float(stream.times[-1])

    best = None
    for k in range(-n_lags, n_lags + 1):
        lag = k * period
        sample_t = ft + lag
        mask = (sample_t >= t_lo) & (sample_t <= t_hi)
        if int(mask.sum()) < 3:
            continue
        g = np.interp(sample_t[mask], stream.times, mags)
        f = fv[mask]
        sf, sg = float(np.std(f)), float(np.std(g))
        if sf < 1e-12 or sg < 1e-12:
            continue
        r = float(np.mean((f - f.mean()) * (g - g.mean())) / (sf * sg))
        key = (r, -abs(lag), -lag)
        if best is None or key > best[0]:
            best = (key, lag)
    if best is None:
        raise AlignmentError("flow and gyro series do not overlap in time")
    return best[1]


def rotation_rate_summary(stream):
    """(max, mean, median) of the rotation-rate magnitude in degrees/second."""
    if len(stream) == 0:
        raise InsufficientDataError("empty stream has no rate summary")
    mags = np.degrees(stream.magnitudes())
    return float(mags.max()), float(mags.mean()), float(np.median(mags))
