"""Expert-path oracle that produces (context, path) training pairs.

Paths come from an 8-connected grid search over free space inflated by the
robot radius, then greedy shortcut smoothing, then arc-length resampling of
the first few meters into the robot frame.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from ..geometry import N_WAYPOINTS, NormSpec, Pose, normalize, world_to_robot
from ..planner import depth_context
from .world import SensorConfig, World, gen_world, raycast_depth

log = logging.getLogger(__name__)

GRID_RES = 0.1
CHECK_STEP = 0.05


@dataclass(frozen=True)
class ExpertConfig:
    sigma_r: float = 0.25
    margin: float = 0.15  # extra clearance kept by the oracle beyond sigma_r
    horizon_frac: float = 0.8
    heading_noise: float = math.radians(15.0)
    max_goal_dist: float = 12.0
    starts_per_goal: int = 10

    @property
    def clearance(self) -> float:
        return self.sigma_r + self.margin


@dataclass
class ExpertSample:
    ctx: np.ndarray
    npath: np.ndarray
    world_id: int
    pose: Pose
    goal: tuple[float, float]

    def to_json(self) -> str:
        return json.dumps({
            "ctx": [float(v) for v in self.ctx],
            "npath": [float(v) for v in np.asarray(self.npath).ravel()],
            "world": self.world_id,
            "pose": [self.pose.x, self.pose.y, self.pose.heading],
            "goal": [float(self.goal[0]), float(self.goal[1])],
        })

    @classmethod
    def from_dict(cls, d: dict) -> "ExpertSample":
        return cls(np.asarray(d["ctx"], dtype=float), np.asarray(d["npath"], dtype=float).reshape(-1, 2),
                   int(d["world"]), Pose(*d["pose"]), tuple(d["goal"]))


class GridOracle:
    """Shortest paths on the inflated free grid of one world."""

    def __init__(self, world: World, clearance: float, resolution: float = GRID_RES):
        self.world = world
        self.res = resolution
        self.free = world.free_mask(resolution, clearance)
        self.shape = self.free.shape
        self.graph = self._build_graph()

    def _build_graph(self):
        h, w = self.shape
        idx = np.arange(h * w).reshape(h, w)
        free = self.free
        rows, cols, wts = [], [], []
        for dy, dx in ((0, 1), (1, 0), (1, 1), (1, -1)):
            ys = slice(0, h - dy)
            xs = slice(max(0, -dx), w - max(0, dx))
            ys2 = slice(dy, h)
            xs2 = slice(max(0, dx), w - max(0, -dx) if dx < 0 else w)
            a = free[ys, xs] & free[ys2, xs2]
            if dx and dy:
                # no corner cutting: both orthogonal neighbors must be free
                a &= free[ys, xs2] & free[ys2, xs]
            rows.append(idx[ys, xs][a])
            cols.append(idx[ys2, xs2][a])
            wts.append(np.full(int(a.sum()), self.res * math.hypot(dx, dy)))
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        wt = np.concatenate(wts)
        n = h * w
        return coo_matrix((np.concatenate([wt, wt]), (np.concatenate([r, c]), np.concatenate([c, r]))),
                          shape=(n, n)).tocsr()

    def cell_of(self, point) -> int | None:
        ix = int(point[0] / self.res)
        iy = int(point[1] / self.res)
        if not (0 <= iy < self.shape[0] and 0 <= ix < self.shape[1]) or not self.free[iy, ix]:
            return None
        return iy * self.shape[1] + ix

    def center(self, cell: int) -> np.ndarray:
        iy, ix = divmod(int(cell), self.shape[1])
        return np.array([(ix + 0.5) * self.res, (iy + 0.5) * self.res])

    def tree(self, goal) -> tuple[np.ndarray, np.ndarray] | None:
        g = self.cell_of(goal)
        if g is None:
            return None
        dist, pred = dijkstra(self.graph, directed=False, indices=g, return_predecessors=True)
        return dist, pred

    def path(self, start, goal, tree) -> np.ndarray | None:
        s = self.cell_of(start)
        if s is None or not np.isfinite(tree[0][s]):
            return None
        pred = tree[1]
        cells = [s]
        while pred[cells[-1]] >= 0:
            cells.append(int(pred[cells[-1]]))
        pts = np.array([self.center(c) for c in cells])
        pts[0] = start
        if len(pts) > 1:
            pts[-1] = goal
        else:
            pts = np.array([start, goal], dtype=float)
        return pts


def segment_clear(world: World, a, b, clearance: float, step: float = CHECK_STEP) -> bool:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = max(2, int(math.ceil(np.linalg.norm(b - a) / step)) + 1)
    s = np.linspace(0.0, 1.0, n)[:, None]
    return bool(world.clearance(a + s * (b - a)).min() >= clearance)


def shortcut(world: World, pts: np.ndarray, clearance: float) -> np.ndarray:
    """Greedy shortcut: from each kept vertex, jump as far ahead as stays clear."""
    out = [pts[0]]
    i, n = 0, len(pts)
    while i < n - 1:
        j = i + 1
        while j + 1 < n and segment_clear(world, pts[i], pts[j + 1], clearance):
            j += 1
        out.append(pts[j])
        i = j
    return np.array(out)


def truncate(pts: np.ndarray, length: float) -> np.ndarray:
    """Polyline prefix of arc length ``length`` (or the whole line if shorter)."""
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    if cum[-1] <= length:
        return pts
    k = int(np.searchsorted(cum, length))
    frac = (length - cum[k - 1]) / seg[k - 1]
    return np.vstack([pts[:k], pts[k - 1] + frac * (pts[k] - pts[k - 1])])


def resample(pts: np.ndarray, n: int, horizon: float) -> np.ndarray:
    """``n`` points equally spaced in arc length over the first ``horizon`` meters."""
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = min(cum[-1], horizon)
    s = np.linspace(0.0, total, n)
    return np.column_stack([np.interp(s, cum, pts[:, 0]), np.interp(s, cum, pts[:, 1])])


def min_clearance(world: World, pts: np.ndarray, step: float = 0.01) -> float:
    """Exact clearance minimum along a polyline sampled every ``step`` meters."""
    out = np.inf
    for a, b in zip(pts[:-1], pts[1:]):
        n = max(2, int(math.ceil(np.linalg.norm(b - a) / step)) + 1)
        s = np.linspace(0.0, 1.0, n)[:, None]
        out = min(out, float(world.clearance(a + s * (b - a)).min()))
    if len(pts) == 1:
        out = float(world.clearance(pts[0]))
    return out


def expert_path(world: World, start, goal, cfg: ExpertConfig = ExpertConfig(),
                oracle: GridOracle | None = None, tree=None, horizon: float | None = None) -> np.ndarray | None:
    """Smoothed world-frame expert polyline from ``start`` toward ``goal``, or None if unreachable."""
    oracle = oracle or GridOracle(world, cfg.clearance)
    tree = tree if tree is not None else oracle.tree(goal)
    if tree is None:
        return None
    raw = oracle.path(np.asarray(start, dtype=float), np.asarray(goal, dtype=float), tree)
    if raw is None:
        return None
    if horizon is not None:
        raw = truncate(raw, 2.0 * horizon)
    return shortcut(world, raw, cfg.clearance)


def make_sample(world: World, world_id: int, smooth: np.ndarray, goal, rng: np.random.Generator,
                cfg: ExpertConfig, norm: NormSpec, sensor: SensorConfig,
                n_waypoints: int = N_WAYPOINTS) -> ExpertSample | None:
    horizon = cfg.horizon_frac * norm.r_max
    pts = resample(smooth, n_waypoints, horizon)
    if min_clearance(world, pts) < cfg.sigma_r:
        return None
    lead = resample(smooth, 2, min(0.5, horizon))[-1] - smooth[0]
    heading = math.atan2(lead[1], lead[0]) if np.linalg.norm(lead) > 1e-9 else 0.0
    pose = Pose(float(smooth[0, 0]), float(smooth[0, 1]), heading + rng.normal(0.0, cfg.heading_noise))
    robot = world_to_robot(pts, pose)
    ctx = depth_context(raycast_depth(world, pose, sensor))
    return ExpertSample(ctx, normalize(robot, norm), world_id, pose, (float(goal[0]), float(goal[1])))


def world_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


@dataclass
class DatasetReport:
    samples: int = 0
    attempts: int = 0
    rejected: int = 0

    @property
    def rejection_rate(self) -> float:
        return self.rejected / self.attempts if self.attempts else 0.0


def gen_expert_dataset(worlds: int, samples_per_world: int, seed: int, kind: str = "outdoor",
                       cfg: ExpertConfig = ExpertConfig(), norm: NormSpec = NormSpec(),
                       sensor: SensorConfig = SensorConfig(), n_waypoints: int = N_WAYPOINTS,
                       report: DatasetReport | None = None) -> list[ExpertSample]:
    """``worlds * samples_per_world`` expert samples, deterministic in ``seed``.

    Unreachable or under-clearance pairs are redrawn, up to 20 attempts per
    requested sample.
    """
    if worlds < 1 or samples_per_world < 1:
        raise ValueError("counts must be >= 1")
    report = report if report is not None else DatasetReport()
    out: list[ExpertSample] = []
    horizon = cfg.horizon_frac * norm.r_max
    for w in range(worlds):
        wseed = world_seed(seed, w)
        world = gen_world(kind, wseed, sigma_r=cfg.sigma_r)
        rng = np.random.default_rng(wseed)
        oracle = GridOracle(world, cfg.clearance)
        free_cells = np.flatnonzero(oracle.free.ravel())
        got = 0
        budget = 20 * samples_per_world
        while got < samples_per_world and budget > 0:
            goal = oracle.center(rng.choice(free_cells)) + rng.uniform(-0.04, 0.04, size=2)
            tree = oracle.tree(goal)
            if tree is None:
                budget -= 1
                continue
            dist = tree[0]
            for _ in range(cfg.starts_per_goal):
                if got >= samples_per_world or budget <= 0:
                    break
                budget -= 1
                report.attempts += 1
                target = rng.uniform(0.5, cfg.max_goal_dist)
                near = np.flatnonzero(np.abs(dist - target) < 0.3)
                if len(near) == 0:
                    report.rejected += 1
                    continue
                start = oracle.center(rng.choice(near)) + rng.uniform(-0.04, 0.04, size=2)
                smooth = expert_path(world, start, goal, cfg, oracle, tree, horizon)
                sample = None
                if smooth is not None and len(smooth) >= 2:
                    sample = make_sample(world, w, smooth, goal, rng, cfg, norm, sensor, n_waypoints)
                if sample is None:
                    report.rejected += 1
                    continue
                out.append(sample)
                got += 1
        log.debug("world %d: %d samples", w, got)
    report.samples = len(out)
    return out
