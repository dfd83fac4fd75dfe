"""Exception hierarchy shared across the package.

The CLI maps these onto distinct exit codes: configuration problems,
bad or missing input data, and failures during processing.
"""


class GyroTrackError(Exception):
    """Base class for all package errors."""


class ConfigError(GyroTrackError):
    """Invalid configuration (bad parameter values, missing required inputs)."""


class DataError(GyroTrackError):
    """Input data is malformed, missing, or unusable."""


class ProcessingError(GyroTrackError):
    """A computation failed on otherwise valid inputs."""


class OutOfBoundsError(ProcessingError):
    """A sample point or patch grid falls outside the frame.

    ``feature_index`` identifies the offending feature when the error is
    raised from a multi-feature energy evaluation; otherwise it is None.
    """

    def __init__(self, message, feature_index=None):
        super().__init__(message)
        self.feature_index = feature_index


class InsufficientDataError(DataError):
    """Too few samples to perform the requested computation."""


class AlignmentError(DataError):
    """Two time series cannot be aligned (no overlap or zero variance)."""


class CalibrationError(ProcessingError):
    """Calibration inputs are unusable or produced a singular result."""


class RankDeficiencyError(CalibrationError):
    """The rotation set does not excite enough axes to pin down the calibration.

    ``deficient_directions`` holds unit vectors spanning the unexcited axes.
    """

    def __init__(self, message, deficient_directions=None):
        super().__init__(message)
        self.deficient_directions = deficient_directions
