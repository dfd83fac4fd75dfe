"""Gyro-regularized template feature tracking.

A template tracker that predicts optical flow from a 3-axis gyroscope via
inter-frame homographies and uses the prediction both to initialize the
search and to regularize the tracking energy, so ambiguous (edge-like)
features stay put instead of wandering along their lines of ambiguity.
"""

from gyrotrack.energy import EnergyConfig, MultiState, PenaltyConfig
from gyrotrack.gyro import CalibrationProfile, GyroStream, Rotation
from gyrotrack.imaging import GrayFrame, Patch, Pyramid
from gyrotrack.kernels import get_backend
from gyrotrack.optimize import DescentConfig
from gyrotrack.tracker import Tracker, TrackerConfig, VARIANTS

__version__ = "0.1.0"

__all__ = [
    "CalibrationProfile",
    "DescentConfig",
    "EnergyConfig",
    "GrayFrame",
    "GyroStream",
    "MultiState",
    "Patch",
    "PenaltyConfig",
    "Pyramid",
    "Rotation",
    "Tracker",
    "TrackerConfig",
    "VARIANTS",
    "get_backend",
    "__version__",
]
