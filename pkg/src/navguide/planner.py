"""One planning cycle: depth scan -> context + cost map -> candidates -> choice."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .costmap import CostMap, CostMapConfig, DepthScan, build_costmap
from .costs import total_cost
from .diffusion import GuidanceConfig, Model, sample_guided, sample_unguided
from .geometry import Pose, robot_to_world, world_to_robot
from .selection import SelectionConfig, SelectionState, select

CONTEXT_BINS = 32
CONTEXT_RESERVED = 2


def depth_context(scan: DepthScan, bins: int = CONTEXT_BINS, reserved: int = CONTEXT_RESERVED) -> np.ndarray:
    """Min range per angular bin over ``max_range``, followed by reserved zeros."""
    groups = np.array_split(scan.ranges, bins)
    hist = np.array([g.min() if len(g) else scan.max_range for g in groups]) / scan.max_range
    return np.concatenate([hist, np.zeros(reserved)])


@dataclass(frozen=True)
class PlannerConfig:
    costmap: CostMapConfig = field(default_factory=CostMapConfig)
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    num_candidates: int = 16
    clip_denoised: bool = True


@dataclass
class PlanResult:
    candidates: np.ndarray  # robot frame, (K, N_w, 2)
    costs: np.ndarray
    chosen: np.ndarray  # robot frame, after blending
    index: int
    cmap: CostMap


class Planner:
    """Stateful local planner; keeps the previous choice in the world frame."""

    def __init__(self, model: Model, cfg: PlannerConfig = PlannerConfig()):
        self.model = model
        self.cfg = cfg
        self.history_world: np.ndarray | None = None

    def reset(self) -> None:
        self.history_world = None

    def candidates(self, scan: DepthScan, pose: Pose, goal, seed: int, guided: bool,
                   cmap: CostMap | None = None, count: int | None = None) -> tuple[np.ndarray, CostMap]:
        cfg = self.cfg
        cmap = cmap if cmap is not None else build_costmap(scan, pose, cfg.costmap)
        ctx = depth_context(scan)
        count = count or cfg.num_candidates
        if guided:
            paths = sample_guided(self.model, ctx, seed, count, cmap, goal, cfg.guidance, pose,
                                  clip_denoised=cfg.clip_denoised)
        else:
            paths = sample_unguided(self.model, ctx, seed, count, clip_denoised=cfg.clip_denoised)
        return paths, cmap

    def plan(self, scan: DepthScan, pose: Pose, goal, seed: int, guided: bool = True) -> PlanResult:
        paths, cmap = self.candidates(scan, pose, goal, seed, guided)
        world_paths = robot_to_world(paths, pose)
        costs = np.asarray(total_cost(world_paths, cmap, goal, self.cfg.guidance.cost).value)
        history = None
        if self.history_world is not None:
            history = world_to_robot(self.history_world, pose)
        chosen, _, idx = select(list(paths), costs, SelectionState(history), self.cfg.selection)
        self.history_world = robot_to_world(chosen, pose)
        return PlanResult(paths, costs, chosen, idx, cmap)
