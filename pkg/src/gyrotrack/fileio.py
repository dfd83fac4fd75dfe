"""File formats: PGM/PPM images, gyro CSV, trajectory and ground-truth CSV,
calibration and degradation profile files. All writers are atomic
(temporary file in the same directory, then rename).
"""
from __future__ import annotations

import csv
import io
import os
import re
import tempfile

import numpy as np

from gyrotrack.bench import DegradationProfile, GroundTruth
from gyrotrack.errors import DataError
from gyrotrack.gyro import CalibrationProfile, GyroStream
from gyrotrack.imaging import GrayFrame

FRAME_PATTERN = "frame_%06d.pgm"
FRAME_RE = re.compile(r"frame_(\d{6})\.(pgm|ppm)$")

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def atomic_write_bytes(path, payload):
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


# ---------------------------------------------------------------------------
# PGM / PPM
# ---------------------------------------------------------------------------

def _read_pnm_tokens(fh, count):
    tokens = []
    while len(tokens) < count:
        line = fh.readline()
        if not line:
            raise DataError("truncated image header")
        line = line.split(b"#", 1)[0]
        tokens.extend(line.split())
    return tokens


def read_image(path, frame_index=0, timestamp=0.0):
    """Read an 8-bit binary PGM (P5) or PPM (P6) file as a gray frame.

    Color input is converted by the usual luma weights and rounded.
    """
    with open(path, "rb") as fh:
        magic = fh.readline().split(b"#", 1)[0].strip()
        if magic not in (b"P5", b"P6"):
            raise DataError(f"{path}: expected binary PGM/PPM, got magic {magic!r}")
        width, height, maxval = (int(t) for t in _read_pnm_tokens(fh, 3))
        if maxval <= 0 or maxval > 255:
            raise DataError(f"{path}: only 8-bit images supported (maxval {maxval})")
        channels = 1 if magic == b"P5" else 3
        raw = fh.read(width * height * channels)
        if len(raw) != width * height * channels:
            raise DataError(f"{path}: truncated pixel data")
    arr = np.frombuffer(raw, dtype=np.uint8).astype(np.float64)
    if channels == 1:
        data = arr.reshape(height, width)
    else:
        rgb = arr.reshape(height, width, 3)
        data = np.rint(rgb @ np.array(LUMA_WEIGHTS))
    return GrayFrame(data, frame_index=frame_index, timestamp=timestamp)


def write_pgm(frame, path):
    """Write a gray frame as binary PGM, rounding to 8 bits."""
    data = np.clip(np.rint(frame.data), 0, 255).astype(np.uint8)
    header = f"P5\n{data.shape[1]} {data.shape[0]}\n255\n".encode("ascii")
    atomic_write_bytes(path, header + data.tobytes())


def write_ppm(rgb, path):
    """Write an (H, W, 3) uint8/float array as binary PPM."""
    arr = np.clip(np.rint(np.asarray(rgb)), 0, 255).astype(np.uint8)
    header = f"P6\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode("ascii")
    atomic_write_bytes(path, header + arr.tobytes())


def frame_filename(index, ext="pgm"):
    return f"frame_{index:06d}.{ext}"


def load_frames(directory, fps=30.0):
    """Load a frame_%06d.pgm sequence; timestamps come from the frame rate."""
    names = []
    for name in os.listdir(directory):
        m = FRAME_RE.match(name)
        if m:
            names.append((int(m.group(1)), name))
    if not names:
        raise DataError(f"no frame_NNNNNN.pgm files in {directory}")
    names.sort()
    return [
        read_image(os.path.join(directory, name), frame_index=idx, timestamp=idx / fps)
        for idx, name in names
    ]


def save_frames(frames, directory):
    os.makedirs(directory, exist_ok=True)
    for frame in frames:
        write_pgm(frame, os.path.join(directory, frame_filename(frame.frame_index)))


# ---------------------------------------------------------------------------
# CSV formats
# ---------------------------------------------------------------------------

def read_gyro_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["t", "rx", "ry", "rz"]:
            raise DataError(f"{path}: expected header t,rx,ry,rz")
        rows = [[float(v) for v in row] for row in reader if row]
    if not rows:
        raise DataError(f"{path}: no gyro samples")
    arr = np.asarray(rows)
    try:
        return GyroStream(arr[:, 0], arr[:, 1:4])
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc


def write_gyro_csv(stream, path):
    buf = io.StringIO()
    buf.write("t,rx,ry,rz\n")
    for t, r in zip(stream.times, stream.rates):
        buf.write(f"{t!r},{r[0]!r},{r[1]!r},{r[2]!r}\n")
    atomic_write_text(path, buf.getvalue())


def write_trajectories_csv(rows, path):
    """Rows of (frame, feature_id, x, y, status); positions get 4 decimals."""
    buf = io.StringIO()
    buf.write("frame,feature_id,x,y,status\n")
    for frame, fid, x, y, status in rows:
        buf.write(f"{frame},{fid},{x:.4f},{y:.4f},{status}\n")
    atomic_write_text(path, buf.getvalue())


def read_trajectories_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["frame", "feature_id", "x", "y", "status"]:
            raise DataError(f"{path}: expected header frame,feature_id,x,y,status")
        return [
            (int(r[0]), int(r[1]), float(r[2]), float(r[3]), r[4].strip())
            for r in reader if r
        ]


def write_truth_csv(truth, path):
    buf = io.StringIO()
    buf.write("frame,feature_id,x,y\n")
    for frame, fid, x, y in truth.to_rows():
        buf.write(f"{frame},{fid},{x:.4f},{y:.4f}\n")
    atomic_write_text(path, buf.getvalue())


def read_truth_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["frame", "feature_id", "x", "y"]:
            raise DataError(f"{path}: expected header frame,feature_id,x,y")
        rows = [(int(r[0]), int(r[1]), float(r[2]), float(r[3])) for r in reader if r]
    if not rows:
        raise DataError(f"{path}: no ground-truth rows")
    return GroundTruth.from_rows(rows)


# ---------------------------------------------------------------------------
# key/value profile files
# ---------------------------------------------------------------------------

def _parse_kv(path):
    values = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"{path}: expected key = value, got {line!r}")
            key, val = line.split("=", 1)
            values[key.strip()] = val.strip()
    return values


def read_calibration(path):
    values = _parse_kv(path)
    try:
        k = np.array([float(v) for v in values["k_tilde"].split()]).reshape(3, 3)
        bias = np.array([float(v) for v in values.get("bias", "0 0 0").split()])
        latency = float(values.get("latency", "0"))
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: bad calibration file ({exc})") from exc
    return CalibrationProfile(k_tilde=k, bias=bias, latency=latency)


def write_calibration(cal, path):
    k = " ".join(repr(v) for v in cal.k_tilde.reshape(-1))
    b = " ".join(repr(v) for v in cal.bias)
    atomic_write_text(path, f"k_tilde = {k}\nbias = {b}\nlatency = {cal.latency!r}\n")


def read_degradation_profile(path):
    values = _parse_kv(path)
    try:
        kwargs = {key: float(values[key])
                  for key in ("m", "mu1", "sigma1", "sigma_x", "sigma_y", "mu2", "sigma2")}
        kwargs["seed"] = int(values.get("seed", "0"))
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: bad degradation profile ({exc})") from exc
    return DegradationProfile(**kwargs)


def write_degradation_profile(profile, path):
    lines = [f"{key} = {getattr(profile, key)!r}"
             for key in ("m", "mu1", "sigma1", "sigma_x", "sigma_y", "mu2", "sigma2")]
    lines.append(f"seed = {profile.seed}")
    atomic_write_text(path, "\n".join(lines) + "\n")
