"""Exception hierarchy shared by the lab, the CLI and the API."""

from __future__ import annotations

from typing import Any, Optional


class LabError(Exception):
    """Root of every error raised on purpose by the lab."""

    exit_status = 1

    def to_dict(self) -> dict:
        return {"error": type(self).__name__, "detail": str(self)}


class FieldMismatchError(LabError):
    pass


class LiteralError(LabError):
    pass


class SurfaceFormatError(LabError):
    def __init__(self, message: str, line: Optional[int] = None, source: str = "<surface>"):
        self.line = line
        self.source = source
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


class SurfaceValidationError(LabError):
    pass


class CoverConsistencyError(LabError):
    """Internal failure while assembling a cover; signals a bug, not bad input."""


class ConePointHit(LabError):
    def __init__(self, message: str, cone_point: Any = None):
        self.cone_point = cone_point
        super().__init__(message)


class CorridorTooSmall(LabError):
    """Retriable: the geodesic left the unfolded ball."""

    def __init__(self, message: str, suggested_radius: int):
        self.suggested_radius = suggested_radius
        super().__init__(f"{message} (retry with radius ≥ {suggested_radius})")

    def to_dict(self) -> dict:
        return {**super().to_dict(), "suggestedRadius": self.suggested_radius}


class CapExceeded(LabError):
    exit_status = 3

    def __init__(self, message: str, cap: Any):
        self.cap = cap
        super().__init__(f"{message} (cap {cap})")

    def to_dict(self) -> dict:
        return {**super().to_dict(), "cap": str(self.cap)}


class CurveError(LabError):
    pass


class StuckSurgery(LabError):
    """No essential non-separating bicorn reduces the crossing count."""

    def __init__(self, message: str, configuration: dict):
        self.configuration = configuration
        super().__init__(message)

    def to_dict(self) -> dict:
        return {**super().to_dict(), "configuration": self.configuration}


class ConfigError(LabError):
    def __init__(self, field: str, message: str, location: str = "<flags>"):
        self.field = field
        self.location = location
        super().__init__(f"{location}: {field}: {message}")
