"""Closed-loop navigation trials."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..diffusion import Model
from ..errors import GenerationFailedError, NavGuideError
from ..geometry import Pose, world_to_robot
from ..metrics import TrialResult
from ..planner import Planner, PlannerConfig
from .expert import world_seed
from .robot import LOOKAHEAD, OMEGA_MAX, V_MAX, integrate, pursuit_command
from .world import SensorConfig, World, add_extra_obstacles, gen_world, raycast_depth

log = logging.getLogger(__name__)

SUITES = ("basic", "obstacle", "long")
GOAL_RANGES = {"basic": (6.0, 10.0), "obstacle": (6.0, 10.0), "long": (12.0, 16.0)}
EXTRA_REDRAWS = 10


@dataclass(frozen=True)
class TrialConfig:
    suite: str = "basic"
    kind: str = "outdoor"
    time_limit: float = 120.0
    goal_radius: float = 0.5
    control_dt: float = 0.1
    replan_period: int = 3
    num_candidates: int = 16
    guided: bool = True
    seed: int = 0
    lookahead: float = LOOKAHEAD
    v_max: float = V_MAX
    omega_max: float = OMEGA_MAX
    stuck_window: float = 10.0
    stuck_distance: float = 0.1

    def __post_init__(self) -> None:
        if self.suite not in SUITES:
            raise ValueError(f"unknown suite {self.suite!r}")
        if not (self.time_limit > 0 and self.control_dt > 0 and self.goal_radius > 0):
            raise ValueError("durations and goal_radius must be positive")
        if self.replan_period < 1 or self.num_candidates < 1:
            raise ValueError("replan_period and num_candidates must be >= 1")


@dataclass
class TrialTrace:
    poses: list[Pose] = field(default_factory=list)
    odometry: list[float] = field(default_factory=list)
    commands: list[tuple[float, float]] = field(default_factory=list)


def suite_world(suite: str, kind: str, seed: int, sigma_r: float = 0.25) -> World:
    """The world a trial of ``suite`` runs in; identical for both ablation arms."""
    if suite != "obstacle":
        return gen_world(kind, seed, goal_range=GOAL_RANGES[suite], sigma_r=sigma_r)
    # A base world too crowded along the spawn-goal line leaves no room for
    # spaced extra obstacles; redraw it from a derived seed in that case.
    last: GenerationFailedError | None = None
    for k in range(EXTRA_REDRAWS):
        base_seed = seed if k == 0 else int(np.random.SeedSequence([seed, 3, k]).generate_state(1)[0])
        world = gen_world(kind, base_seed, goal_range=GOAL_RANGES[suite], sigma_r=sigma_r)
        try:
            return add_extra_obstacles(world, np.random.default_rng([seed, 1, k]), sigma_r=sigma_r)
        except GenerationFailedError as exc:
            last = exc
    raise GenerationFailedError("could not place extra obstacles", seed=seed) from last


def start_pose(world: World, seed: int) -> Pose:
    rng = np.random.default_rng([seed, 2])
    sx, sy = world.spawn[:2]
    gx, gy = world.goal[:2]
    return Pose(sx, sy, math.atan2(gy - sy, gx - sx) + rng.uniform(-math.pi / 6, math.pi / 6))


def run_trial(world: World, model: Model, cfg: TrialConfig, planner_cfg: PlannerConfig = PlannerConfig(),
              sensor: SensorConfig = SensorConfig(), pose: Pose | None = None,
              trace: TrialTrace | None = None) -> TrialResult:
    """Sense, plan, and track until the goal, a timeout, or a stall.

    The robot disc cannot enter obstacles: a motion step that would overlap
    one keeps the position (heading still turns) and the first blocked step
    of each contact counts as one collision.
    """
    planner = Planner(model, PlannerConfig(planner_cfg.costmap, planner_cfg.guidance,
                                           planner_cfg.selection, cfg.num_candidates,
                                           planner_cfg.clip_denoised))
    sigma_r = planner_cfg.guidance.cost.sigma_r
    pose = pose or start_pose(world, cfg.seed)
    goal = np.array(world.goal[:2], dtype=float)
    n_steps = int(round(cfg.time_limit / cfg.control_dt))
    window = int(round(cfg.stuck_window / cfg.control_dt))
    positions = [pose.position]
    length = 0.0
    collisions = 0
    contact = False
    chosen_world = None
    common = dict(seed=cfg.seed, suite=cfg.suite, guided=cfg.guided, world_digest=world.digest())

    def result(success: bool, k: int, reason: str | None, error: str | None = None) -> TrialResult:
        return TrialResult(success, length, collisions, round(k * cfg.control_dt, 9), reason,
                           error=error, **common)

    if trace is not None:
        trace.poses.append(pose)
    for k in range(n_steps):
        if np.linalg.norm(pose.position - goal) <= cfg.goal_radius:
            return result(True, k, None)
        if k % cfg.replan_period == 0:
            try:
                scan = raycast_depth(world, pose, sensor)
                planner.plan(scan, pose, goal, world_seed(cfg.seed, k), cfg.guided)
            except NavGuideError as exc:
                log.warning("planner error in trial %d: %s", cfg.seed, exc)
                return result(False, k, "planner-error", str(exc))
            chosen_world = planner.history_world
        path = world_to_robot(chosen_world, pose)
        v, omega = pursuit_command(path, cfg.lookahead, cfg.v_max, cfg.omega_max)
        nxt = integrate(pose, v, omega, cfg.control_dt)
        blocked = bool(world.clearance(nxt.position) < sigma_r)
        if blocked:
            pose = Pose(pose.x, pose.y, nxt.heading)
            step_len = 0.0
        else:
            pose = nxt
            step_len = abs(v) * cfg.control_dt
        length += step_len
        if blocked and not contact:
            collisions += 1
        contact = blocked
        positions.append(pose.position)
        if trace is not None:
            trace.poses.append(pose)
            trace.odometry.append(step_len)
            trace.commands.append((v, omega))
        if len(positions) > window and np.linalg.norm(positions[-1] - positions[-1 - window]) < cfg.stuck_distance:
            return result(False, k + 1, "stuck")
    if np.linalg.norm(pose.position - goal) <= cfg.goal_radius:
        return result(True, n_steps, None)
    return result(False, n_steps, "timeout")
