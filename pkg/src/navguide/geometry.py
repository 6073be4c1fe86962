"""Path and pose types plus frame and scale conversions.

A path is an ``(N_w, 2)`` float array of waypoints in the robot frame
(+x forward, +y left).  Most functions also accept a leading batch axis,
``(..., N_w, 2)``, so candidate sets can be handled in one call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteError, UndefinedDirectionError

N_WAYPOINTS = 8
R_MAX = 5.0


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.remainder(theta, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.x, self.y, self.heading)):
            raise NonFiniteError(f"non-finite pose {self}")
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def rotation(self) -> np.ndarray:
        c, s = math.cos(self.heading), math.sin(self.heading)
        return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class NormSpec:
    r_max: float = R_MAX

    def __post_init__(self) -> None:
        if not (self.r_max > 0 and math.isfinite(self.r_max)):
            raise ValueError(f"r_max must be positive, got {self.r_max}")


def as_path(points, n_waypoints: int | None = None) -> np.ndarray:
    """Validate and convert ``points`` to a float path array."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim < 2 or arr.shape[-1] != 2:
        raise ValueError(f"path must have shape (..., N, 2), got {arr.shape}")
    if n_waypoints is not None and arr.shape[-2] != n_waypoints:
        raise ValueError(f"expected {n_waypoints} waypoints, got {arr.shape[-2]}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError("path contains non-finite coordinates")
    return arr


def normalize(path, spec: NormSpec) -> np.ndarray:
    return as_path(path) / spec.r_max


def denormalize(npath, spec: NormSpec) -> np.ndarray:
    return as_path(npath) * spec.r_max


def robot_to_world(path, pose: Pose) -> np.ndarray:
    p = as_path(path)
    return p @ pose.rotation().T + pose.position


def world_to_robot(path, pose: Pose) -> np.ndarray:
    p = as_path(path)
    return (p - pose.position) @ pose.rotation()


def mean_heading(path, m: int) -> float:
    """Direction of the mean of the first ``m`` waypoints, seen from the origin."""
    p = as_path(path)
    if p.ndim != 2:
        raise ValueError("mean_heading takes a single path")
    if not 1 <= m <= len(p):
        raise ValueError(f"m must lie in [1, {len(p)}], got {m}")
    mx, my = p[:m].mean(axis=0)
    if math.hypot(mx, my) <= 1e-9:
        raise UndefinedDirectionError("mean of leading waypoints is at the origin")
    return wrap_angle(math.atan2(my, mx))


def path_length(path) -> float:
    p = np.asarray(path, dtype=float)
    return float(np.sum(np.linalg.norm(np.diff(p, axis=-2), axis=-1)))
