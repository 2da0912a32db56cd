from __future__ import annotations

from typing import Any, Optional


class BurstError(ValueError):
    """Base class for every domain error raised by gyroburst."""


class NonUnitNormal(BurstError):
    pass


class DegenerateHomography(BurstError):
    """Homography is a pure rotation; the plane normal is undetermined."""

    def __init__(self, message: str, decomposition: Any = None):
        super().__init__(message)
        self.decomposition = decomposition


class PointAtInfinity(BurstError):
    pass


class OutOfRange(BurstError):
    pass


class NonFiniteResult(BurstError):
    pass


class TooFewFeatures(BurstError):
    def __init__(self, message: str, count: int = 0):
        super().__init__(message)
        self.count = count


class DegenerateConfiguration(BurstError):
    pass


class CovarianceNotPSD(BurstError):
    pass


class DimensionMismatch(BurstError):
    pass


class ExcursionTooLarge(BurstError):
    pass


class PreconditionError(BurstError):
    pass


class InputFormatError(BurstError):
    """Malformed input file; rendered as ``path:line: message``."""

    def __init__(self, path: Any, message: str, line: Optional[int] = None):
        self.path = str(path)
        self.line = line
        self.detail = message
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")
