"""Exception types shared across the package."""

from __future__ import annotations


class OTCurvatureError(Exception):
    """Base class for all package errors."""


class DegenerateMetricError(OTCurvatureError):
    pass


class NumericPrecisionError(OTCurvatureError):
    pass


class DegeneratePlaneError(OTCurvatureError):
    pass


class InvalidFrameError(OTCurvatureError):
    pass


class DomainEscapeError(OTCurvatureError):
    def __init__(self, time: float, message: str | None = None):
        self.time = float(time)
        super().__init__(message or f"trajectory left the chart domain at t={self.time:.6g}")


class DegenerateFrameError(OTCurvatureError):
    def __init__(self, time: float, message: str | None = None):
        self.time = float(time)
        super().__init__(message or f"Jacobi frame lost rank at t={self.time:.6g}")


class ImmersionError(OTCurvatureError):
    pass


class ScenarioError(OTCurvatureError):
    """A transport scenario violates its own structural assumptions."""


class UnsupportedInstanceError(OTCurvatureError):
    pass


class NotOptimalError(OTCurvatureError):
    def __init__(self, gap: float):
        self.gap = float(gap)
        super().__init__(f"potential coupling is not optimal: relative gap {self.gap:.3e}")


class UnboundedComparisonError(OTCurvatureError):
    """A distortion coefficient is infinite, so the comparison solution does not exist."""


class PreconditionError(OTCurvatureError):
    def __init__(self, message: str, worst: float | None = None):
        self.worst = worst
        super().__init__(message)


class ConfigError(OTCurvatureError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        self.key = key
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
