"""Exception types raised across the planner."""

from __future__ import annotations


class NavGuideError(Exception):
    """Base class for all planner errors."""


class NonFiniteError(NavGuideError, ValueError):
    """Input or intermediate value contained NaN or inf."""


class UndefinedDirectionError(NavGuideError):
    """A path's mean heading is undefined (mean waypoint at the origin)."""


class DegeneratePathError(NavGuideError):
    """All waypoints of a path coincide, so no local direction exists."""


class DivergedSampleError(NavGuideError):
    """Reverse diffusion produced a non-finite intermediate path."""


class InvalidArchitectureError(NavGuideError, ValueError):
    pass


class ShapeMismatchError(NavGuideError, ValueError):
    pass


class GenerationFailedError(NavGuideError):
    """World or dataset generation exhausted its retry budget."""

    def __init__(self, message: str, seed: int | None = None):
        super().__init__(message)
        self.seed = seed


class CheckpointError(NavGuideError):
    """Malformed checkpoint or cost-map file (bad magic, size or CRC)."""


class ConfigError(NavGuideError, ValueError):
    """Invalid configuration; message carries the dotted key path."""
