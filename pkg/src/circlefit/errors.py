"""Exception hierarchy shared by all fitters and the CLI."""


class CircleFitError(Exception):
    """Base class for every error raised by circlefit."""


class InputError(CircleFitError, ValueError):
    """Malformed or out-of-range input (too few points, NaNs, bad tags)."""


class InvalidCircleError(InputError):
    """A circle with non-positive radius."""


class UnsupportedMethodError(InputError):
    """The requested method has no implementation for this quantity."""


class DegenerateDataError(CircleFitError):
    """The data do not determine a circle (coincident points, all lines, ...)."""


class DegenerateConicError(DegenerateDataError):
    """Algebraic parameters with B^2 + C^2 - 4AD <= 0 (no real circle)."""


class SingularGeometryError(DegenerateDataError):
    """A data point coincides with the circle center."""


class DegenerateFrameError(DegenerateDataError):
    """True-point configuration too poor for the error-analysis formulas."""


class ArcTooSmallError(DegenerateFrameError):
    """The arc is so short that the Kasa bias formula diverges."""


class NumericalError(CircleFitError):
    """A linear-algebra kernel failed to produce a usable answer."""
