"""Exception types shared across the engine."""


class VisionCorrectError(Exception):
    """Base class for engine errors."""


class SizingError(VisionCorrectError):
    """A grid, kernel or tile does not fit its target."""


class OpticalConfigError(VisionCorrectError):
    """Optical parameters describe an impossible or degenerate system."""


class IllConditionedError(VisionCorrectError):
    """Inverse filtering would divide by a vanishing spectrum."""


class PoseOutOfRangeError(VisionCorrectError):
    """A viewer pose produces a degenerate perspective transform."""


class NoFaceError(VisionCorrectError):
    """A face observation is empty or has zero pixel width."""


class DetectorError(VisionCorrectError):
    """An external text detector failed on a region."""


class UndefinedCorrelationError(VisionCorrectError):
    """Correlation requested between images with zero variance."""
