"""Exception hierarchy shared by every module."""


class MMWiLocError(Exception):
    """Base class for all package errors."""


class InvalidArgument(MMWiLocError, ValueError):
    pass


class NumericalFailure(MMWiLocError, ArithmeticError):
    """A linear solve or update produced a singular or non-finite result."""

    def __init__(self, message, iteration=None, scale=None):
        super().__init__(message)
        self.iteration = iteration
        self.scale = scale


class DegenerateGeometry(MMWiLocError, ValueError):
    """Target coincides with a device, so no bearing is defined."""


class NoIntersection(MMWiLocError):
    """Bearing rays are parallel."""


class BehindDevice(MMWiLocError):
    """Bearing rays intersect behind at least one device."""


class NoDetection(MMWiLocError):
    """Angular profile has no positive peak."""


class FormatError(MMWiLocError, ValueError):
    def __init__(self, message, line=None, path=None):
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)
        self.line = line
        self.path = path


class ConvergenceWarning(UserWarning):
    pass
