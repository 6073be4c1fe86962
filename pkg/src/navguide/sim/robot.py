"""Unicycle robot and a pure-pursuit waypoint follower."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..geometry import Pose

V_MAX = 0.5
OMEGA_MAX = 0.4
LOOKAHEAD = 0.6


@dataclass(frozen=True)
class RobotState:
    pose: Pose
    v: float = 0.0
    omega: float = 0.0


def lookahead_point(path: np.ndarray, lookahead: float) -> np.ndarray | None:
    """First point along the polyline at ``lookahead`` distance from the origin.

    Falls back to the final waypoint when the whole path stays inside the
    lookahead circle; returns None for a path collapsed onto the origin.
    """
    p = np.asarray(path, dtype=float)
    r = np.linalg.norm(p, axis=1)
    if np.all(r < 1e-6):
        return None
    outside = np.flatnonzero(r >= lookahead)
    if len(outside) == 0:
        return p[-1]
    k = int(outside[0])
    if k == 0:
        return p[0]
    a, b = p[k - 1], p[k]
    # solve |a + s (b - a)| = lookahead for s in [0, 1]
    d = b - a
    qa = d @ d
    qb = 2.0 * (a @ d)
    qc = a @ a - lookahead * lookahead
    s = (-qb + math.sqrt(max(qb * qb - 4 * qa * qc, 0.0))) / (2 * qa)
    return a + min(max(s, 0.0), 1.0) * d


def pursuit_command(path: np.ndarray, lookahead: float = LOOKAHEAD, v_max: float = V_MAX,
                    omega_max: float = OMEGA_MAX) -> tuple[float, float]:
    """Velocity command toward the lookahead point of a robot-frame path.

    When the requested turn rate exceeds ``omega_max`` the forward speed is
    reduced so the commanded curvature is still met.
    """
    target = lookahead_point(path, lookahead)
    if target is None:
        return 0.0, 0.0
    x, y = float(target[0]), float(target[1])
    dist2 = x * x + y * y
    if dist2 < 1e-12:
        return 0.0, 0.0
    curvature = 2.0 * y / dist2
    v = v_max
    omega = v * curvature
    if abs(omega) > omega_max:
        v = v * omega_max / abs(omega)
        omega = math.copysign(omega_max, omega)
    if x < 0 and abs(y) < 1e-9:
        # target straight behind: turn in place
        v, omega = 0.0, omega_max
    return v, omega


def integrate(pose: Pose, v: float, omega: float, dt: float) -> Pose:
    """Exact unicycle motion over ``dt`` (circular arc when ``omega != 0``)."""
    th = pose.heading
    if abs(omega) > 1e-9:
        r = v / omega
        x = pose.x + r * (math.sin(th + omega * dt) - math.sin(th))
        y = pose.y - r * (math.cos(th + omega * dt) - math.cos(th))
    else:
        x = pose.x + v * dt * math.cos(th)
        y = pose.y + v * dt * math.sin(th)
    return Pose(x, y, th + omega * dt)


def follow_step(state: RobotState, path, dt: float, *, lookahead: float = LOOKAHEAD,
                v_max: float = V_MAX, omega_max: float = OMEGA_MAX) -> RobotState:
    if not dt > 0:
        raise ValueError("dt must be positive")
    v, omega = pursuit_command(path, lookahead, v_max, omega_max)
    v = float(np.clip(v, -v_max, v_max))
    omega = float(np.clip(omega, -omega_max, omega_max))
    return RobotState(integrate(state.pose, v, omega, dt), v, omega)
