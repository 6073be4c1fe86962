"""Procedural 2D worlds, exact clearance queries, and a raycast depth sensor."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from ..costmap import DepthScan
from ..errors import GenerationFailedError
from ..geometry import Pose

WORLD_SIZE = 20.0
REGION_RADIUS = 0.3
EXTRA_GAP = 1.0  # metres of free space kept around each extra obstacle
MAX_ATTEMPTS = 100


@dataclass(frozen=True)
class SensorConfig:
    fov: float = 2.0 * math.pi / 3.0
    n_rays: int = 96
    max_range: float = 6.0

    def angles(self) -> np.ndarray:
        if self.n_rays == 1:
            return np.zeros(1)
        return np.linspace(-self.fov / 2, self.fov / 2, self.n_rays)


@dataclass
class World:
    """Axis-aligned box ``[0, width] x [0, height]`` holding discs and rectangles.

    ``discs`` rows are ``(cx, cy, r)``; ``rects`` rows are
    ``(xmin, ymin, xmax, ymax)``.  Regions are ``(cx, cy, radius)``.
    """

    width: float = WORLD_SIZE
    height: float = WORLD_SIZE
    discs: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    rects: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    spawn: tuple[float, float, float] = (1.0, 1.0, REGION_RADIUS)
    goal: tuple[float, float, float] = (2.0, 2.0, REGION_RADIUS)
    kind: str = "outdoor"
    seed: int | None = None

    def __post_init__(self) -> None:
        self.discs = np.asarray(self.discs, dtype=float).reshape(-1, 3)
        self.rects = np.asarray(self.rects, dtype=float).reshape(-1, 4)

    @property
    def n_obstacles(self) -> int:
        return len(self.discs) + len(self.rects)

    def clearance(self, points, include_bounds: bool = True) -> np.ndarray:
        """Signed distance from ``points (..., 2)`` to the nearest obstacle surface."""
        p = np.asarray(points, dtype=float)
        best = np.full(p.shape[:-1], np.inf)
        if include_bounds:
            best = np.minimum.reduce([best, p[..., 0], self.width - p[..., 0],
                                      p[..., 1], self.height - p[..., 1]])
        if len(self.discs):
            d = p[..., None, :] - self.discs[:, :2]
            best = np.minimum(best, (np.linalg.norm(d, axis=-1) - self.discs[:, 2]).min(axis=-1))
        if len(self.rects):
            c = 0.5 * (self.rects[:, :2] + self.rects[:, 2:])
            half = 0.5 * (self.rects[:, 2:] - self.rects[:, :2])
            q = np.abs(p[..., None, :] - c) - half
            outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
            inside = np.minimum(np.max(q, axis=-1), 0.0)
            best = np.minimum(best, (outside + inside).min(axis=-1))
        return best

    def free_mask(self, resolution: float, inflate: float) -> np.ndarray:
        """Grid of cells (row = y) whose centers have clearance above ``inflate``."""
        xs = (np.arange(int(round(self.width / resolution))) + 0.5) * resolution
        ys = (np.arange(int(round(self.height / resolution))) + 0.5) * resolution
        gx, gy = np.meshgrid(xs, ys)
        return self.clearance(np.stack([gx, gy], axis=-1)) > inflate

    def to_dict(self) -> dict:
        return {
            "bounds": [self.width, self.height],
            "discs": self.discs.tolist(),
            "rects": self.rects.tolist(),
            "spawn": list(self.spawn),
            "goal": list(self.goal),
            "kind": self.kind,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "World":
        return cls(width=float(d["bounds"][0]), height=float(d["bounds"][1]),
                   discs=np.asarray(d.get("discs", []), dtype=float),
                   rects=np.asarray(d.get("rects", []), dtype=float),
                   spawn=tuple(d["spawn"]), goal=tuple(d["goal"]),
                   kind=d.get("kind", "outdoor"), seed=d.get("seed"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


def raycast_depth(world: World, pose: Pose, sensor: SensorConfig = SensorConfig()) -> DepthScan:
    """Exact ray intersection against discs, rectangles, and the outer walls."""
    angles = sensor.angles()
    a = angles + pose.heading
    d = np.stack([np.cos(a), np.sin(a)], axis=-1)
    o = pose.position
    t = np.full(len(a), np.inf)

    # outer walls: exit distance from the box
    with np.errstate(divide="ignore", invalid="ignore"):
        tx = np.where(d[:, 0] > 0, (world.width - o[0]) / d[:, 0],
                      np.where(d[:, 0] < 0, -o[0] / d[:, 0], np.inf))
        ty = np.where(d[:, 1] > 0, (world.height - o[1]) / d[:, 1],
                      np.where(d[:, 1] < 0, -o[1] / d[:, 1], np.inf))
    t = np.minimum(t, np.minimum(tx, ty))

    if len(world.discs):
        oc = o - world.discs[:, :2]  # (M, 2)
        b = d @ oc.T  # (R, M)
        c = np.sum(oc * oc, axis=1) - world.discs[:, 2] ** 2
        disc = b * b - c
        root = np.sqrt(np.maximum(disc, 0.0))
        near = -b - root
        far = -b + root
        hit_t = np.where(near >= 0, near, np.where(far >= 0, 0.0, np.inf))
        hit_t = np.where(disc >= 0, hit_t, np.inf)
        t = np.minimum(t, hit_t.min(axis=1))

    if len(world.rects):
        safe = np.where(np.abs(d) < 1e-15, 1e-15, d)
        inv = 1.0 / safe  # (R, 2)
        t1 = (world.rects[None, :, :2] - o) * inv[:, None, :]
        t2 = (world.rects[None, :, 2:] - o) * inv[:, None, :]
        tnear = np.minimum(t1, t2).max(axis=-1)
        tfar = np.maximum(t1, t2).min(axis=-1)
        hit = (tnear <= tfar) & (tfar >= 0)
        hit_t = np.where(hit, np.maximum(tnear, 0.0), np.inf)
        t = np.minimum(t, hit_t.min(axis=1))

    ranges = np.clip(t, 1e-6, sensor.max_range)
    return DepthScan(angles, ranges, sensor.max_range)


# --- generation -----------------------------------------------------------

def _region_ok(world: World, x: float, y: float, clearance: float) -> bool:
    return bool(world.clearance(np.array([x, y])) >= clearance + REGION_RADIUS)


def reachable(world: World, a, b, inflate: float, resolution: float = 0.1) -> bool:
    """True when ``a`` and ``b`` share an 8-connected component of the inflated free grid."""
    free = world.free_mask(resolution, inflate)
    labels, _ = ndimage.label(free, structure=np.ones((3, 3)))
    ia = int(a[1] / resolution), int(a[0] / resolution)
    ib = int(b[1] / resolution), int(b[0] / resolution)
    la, lb = labels[ia], labels[ib]
    return bool(la and la == lb)


def _place_regions(world: World, rng: np.random.Generator, goal_range: tuple[float, float],
                   clearance: float) -> tuple[tuple, tuple] | None:
    margin = clearance + REGION_RADIUS
    for _ in range(200):
        sx, sy = rng.uniform(margin, world.width - margin), rng.uniform(margin, world.height - margin)
        if not _region_ok(world, sx, sy, clearance):
            continue
        for _ in range(50):
            dist = rng.uniform(*goal_range)
            ang = rng.uniform(-math.pi, math.pi)
            gx, gy = sx + dist * math.cos(ang), sy + dist * math.sin(ang)
            if not (margin <= gx <= world.width - margin and margin <= gy <= world.height - margin):
                continue
            if _region_ok(world, gx, gy, clearance):
                return (sx, sy, REGION_RADIUS), (gx, gy, REGION_RADIUS)
    return None


def _outdoor_obstacles(rng: np.random.Generator, size: float) -> np.ndarray:
    n = int(rng.integers(8, 21))
    centers = rng.uniform(1.0, size - 1.0, size=(n, 2))
    radii = rng.uniform(0.2, 0.8, size=n)
    return np.column_stack([centers, radii])


def _indoor_obstacles(rng: np.random.Generator, size: float) -> np.ndarray:
    """3x3 rooms separated by 0.2 m walls, one door per shared wall, plus furniture."""
    rooms = 3
    cell = size / rooms
    half_t = 0.1
    rects = []
    for k in range(1, rooms):
        pos = k * cell
        for seg in range(rooms):
            lo, hi = seg * cell, (seg + 1) * cell
            door = rng.uniform(1.2, 2.0)
            start = rng.uniform(lo + 0.5, hi - 0.5 - door)
            for a, b in ((lo, start), (start + door, hi)):
                if b - a > 1e-6:
                    rects.append((pos - half_t, a, pos + half_t, b))  # vertical wall
            door = rng.uniform(1.2, 2.0)
            start = rng.uniform(lo + 0.5, hi - 0.5 - door)
            for a, b in ((lo, start), (start + door, hi)):
                if b - a > 1e-6:
                    rects.append((a, pos - half_t, b, pos + half_t))  # horizontal wall
    furniture = []
    for i in range(rooms):
        for j in range(rooms):
            for _ in range(int(rng.integers(0, 3))):
                w, h = rng.uniform(0.4, 1.2, size=2)
                x0 = rng.uniform(i * cell + 0.2, (i + 1) * cell - 0.2 - w)
                y0 = rng.uniform(j * cell + 0.2, (j + 1) * cell - 0.2 - h)
                box = (x0, y0, x0 + w, y0 + h)
                # keep at least a corridor width from walls, bounds and other furniture
                others = World(size, size, rects=np.array(rects + furniture))
                xs = np.linspace(box[0], box[2], 8)
                ys = np.linspace(box[1], box[3], 8)
                rim = np.concatenate([np.column_stack([xs, np.full(8, box[1])]),
                                      np.column_stack([xs, np.full(8, box[3])]),
                                      np.column_stack([np.full(8, box[0]), ys]),
                                      np.column_stack([np.full(8, box[2]), ys])])
                if others.clearance(rim).min() >= 1.2:
                    furniture.append(box)
    return np.array(rects + furniture)


def all_free_connected(world: World, resolution: float = 0.1) -> bool:
    free = world.free_mask(resolution, 0.0)
    _, n = ndimage.label(free, structure=np.ones((3, 3)))
    return n == 1


def gen_world(kind: str, seed: int, *, goal_range: tuple[float, float] = (6.0, 10.0),
              sigma_r: float = 0.25, size: float = WORLD_SIZE) -> World:
    """Deterministic world for ``seed``.

    ``indoor`` builds rooms and doors from rectangles; ``outdoor`` scatters
    8-20 discs.  Spawn and goal regions keep ``sigma_r + 0.1`` m clearance
    and are connected for a robot of radius ``sigma_r``.
    """
    if kind not in ("indoor", "outdoor"):
        raise ValueError(f"unknown world kind {kind!r}")
    rng = np.random.default_rng(seed)
    clearance = sigma_r + 0.1
    for _ in range(MAX_ATTEMPTS):
        if kind == "outdoor":
            world = World(size, size, discs=_outdoor_obstacles(rng, size), kind=kind, seed=seed)
        else:
            world = World(size, size, rects=_indoor_obstacles(rng, size), kind=kind, seed=seed)
            if not all_free_connected(world):
                continue
        regions = _place_regions(world, rng, goal_range, clearance)
        if regions is None:
            continue
        world.spawn, world.goal = regions
        if reachable(world, world.spawn, world.goal, sigma_r):
            return world
    raise GenerationFailedError(f"could not generate a {kind} world", seed=seed)


def add_extra_obstacles(world: World, rng: np.random.Generator, count_range: tuple[int, int] = (2, 5),
                        sigma_r: float = 0.25, gap: float = EXTRA_GAP) -> World:
    """Copy of ``world`` with unseen discs and boxes dropped near the spawn-goal line.

    Each new obstacle keeps ``gap`` metres of surface clearance from every
    other obstacle, so it can be passed on at least one side; obstacles that
    find no such spot within a few tries are skipped.
    """
    clearance = sigma_r + 0.1
    s = np.array(world.spawn[:2])
    g = np.array(world.goal[:2])
    axis = g - s
    length = float(np.linalg.norm(axis))
    u = axis / length
    nrm = np.array([-u[1], u[0]])
    for _ in range(MAX_ATTEMPTS):
        n = int(rng.integers(count_range[0], count_range[1] + 1))
        cand = world
        for _ in range(n):
            for _ in range(20):
                c = s + rng.uniform(0.3, 0.8) * axis + rng.uniform(-0.5, 0.5) * nrm
                if rng.random() < 0.5:
                    r = rng.uniform(0.25, 0.5)
                    ok = cand.clearance(c, include_bounds=False) >= r + gap
                    nxt = replace(cand, discs=np.vstack([cand.discs, [c[0], c[1], r]]))
                else:
                    hw, hh = rng.uniform(0.2, 0.45, size=2)
                    ok = cand.clearance(c, include_bounds=False) >= math.hypot(hw, hh) + gap
                    nxt = replace(cand, rects=np.vstack([cand.rects, [c[0] - hw, c[1] - hh, c[0] + hw, c[1] + hh]]))
                if ok:
                    cand = nxt
                    break
        if cand.n_obstacles == world.n_obstacles:
            continue
        if (_region_ok(cand, *world.spawn[:2], clearance) and _region_ok(cand, *world.goal[:2], clearance)
                and reachable(cand, cand.spawn, cand.goal, sigma_r)):
            return cand
    raise GenerationFailedError("could not place extra obstacles", seed=world.seed)
