"""Local collision cost map built from a depth scan.

Pipeline: ray endpoints -> occupancy grid -> truncated distance cost ->
Gaussian smoothing -> bilinear sampling with an analytic gradient.

Grids are stored row-major as ``values[iy, ix]``; cell ``(ix, iy)`` covers
``[ox + ix*res, ox + (ix+1)*res) x [oy + iy*res, oy + (iy+1)*res)`` in world
meters and its center sits half a cell in from that corner.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import CheckpointError
from .geometry import Pose

COSTMAP_MAGIC = b"NVCM"
COSTMAP_VERSION = 1
_HEADER = struct.Struct("<4sHIIddd")


@dataclass(frozen=True)
class DepthScan:
    angles: np.ndarray
    ranges: np.ndarray
    max_range: float

    def __post_init__(self) -> None:
        angles = np.asarray(self.angles, dtype=float)
        ranges = np.asarray(self.ranges, dtype=float)
        if angles.shape != ranges.shape or angles.ndim != 1:
            raise ValueError("angles and ranges must be 1-D and equally long")
        if len(angles) > 1 and np.any(np.diff(angles) <= 0):
            raise ValueError("scan angles must be strictly increasing")
        if np.any(ranges <= 0) or np.any(ranges > self.max_range):
            raise ValueError("ranges must lie in (0, max_range]")
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "ranges", ranges)


@dataclass(frozen=True)
class GridSpec:
    width: int
    height: int
    resolution: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0 or not self.resolution > 0:
            raise ValueError(f"invalid grid spec {self}")

    @classmethod
    def centered(cls, center, extent: float, resolution: float) -> "GridSpec":
        n = int(round(extent / resolution))
        half = 0.5 * n * resolution
        return cls(n, n, resolution, (float(center[0]) - half, float(center[1]) - half))

    def cell_index(self, points) -> tuple[np.ndarray, np.ndarray]:
        pts = np.asarray(points, dtype=float)
        ix = np.floor((pts[..., 0] - self.origin[0]) / self.resolution).astype(int)
        iy = np.floor((pts[..., 1] - self.origin[1]) / self.resolution).astype(int)
        return ix, iy

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        xs = self.origin[0] + (np.arange(self.width) + 0.5) * self.resolution
        ys = self.origin[1] + (np.arange(self.height) + 0.5) * self.resolution
        return xs, ys


@dataclass(frozen=True)
class OccupancyGrid:
    spec: GridSpec
    cells: np.ndarray  # bool, shape (height, width)


@dataclass(frozen=True)
class CostMap:
    spec: GridSpec
    values: np.ndarray  # float, shape (height, width), in [0, 1]

    @property
    def width(self) -> int:
        return self.spec.width

    @property
    def height(self) -> int:
        return self.spec.height

    @property
    def resolution(self) -> float:
        return self.spec.resolution

    @property
    def origin(self) -> tuple[float, float]:
        return self.spec.origin

    def to_bytes(self) -> bytes:
        s = self.spec
        header = _HEADER.pack(COSTMAP_MAGIC, COSTMAP_VERSION, s.width, s.height,
                              s.resolution, s.origin[0], s.origin[1])
        return header + np.ascontiguousarray(self.values, dtype="<f4").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "CostMap":
        if len(blob) < _HEADER.size:
            raise CheckpointError("cost map blob shorter than header")
        magic, version, w, h, res, ox, oy = _HEADER.unpack_from(blob)
        if magic != COSTMAP_MAGIC:
            raise CheckpointError(f"bad cost map magic {magic!r}")
        if version != COSTMAP_VERSION:
            raise CheckpointError(f"unsupported cost map version {version}")
        payload = blob[_HEADER.size:]
        if len(payload) != 4 * w * h:
            raise CheckpointError("cost map payload size does not match header")
        values = np.frombuffer(payload, dtype="<f4").reshape(h, w).astype(float)
        return cls(GridSpec(w, h, res, (ox, oy)), values)


@dataclass(frozen=True)
class CostSample:
    value: float
    grad: np.ndarray = field(default_factory=lambda: np.zeros(2))


def scan_to_occupancy(scan: DepthScan, spec: GridSpec, pose: Pose | None = None) -> OccupancyGrid:
    """Mark the cell hit by every ray that returned before ``max_range``."""
    pose = pose or Pose(0.0, 0.0, 0.0)
    cells = np.zeros((spec.height, spec.width), dtype=bool)
    hit = scan.ranges < scan.max_range
    if np.any(hit):
        a = scan.angles[hit] + pose.heading
        r = scan.ranges[hit]
        pts = np.stack([pose.x + r * np.cos(a), pose.y + r * np.sin(a)], axis=-1)
        ix, iy = spec.cell_index(pts)
        inside = (ix >= 0) & (ix < spec.width) & (iy >= 0) & (iy < spec.height)
        cells[iy[inside], ix[inside]] = True
    return OccupancyGrid(spec, cells)


def distance_to_occupied(grid: OccupancyGrid) -> np.ndarray:
    """Euclidean distance in meters from each cell center to the nearest occupied one."""
    occ = grid.cells
    if not occ.any():
        return np.full(occ.shape, np.inf)
    # exact EDT; nearest-feature indices let us form the distance from integer offsets
    _, (ny, nx) = ndimage.distance_transform_edt(~occ, return_indices=True)
    iy, ix = np.indices(occ.shape)
    dy = (ny - iy).astype(float)
    dx = (nx - ix).astype(float)
    return np.sqrt(dx * dx + dy * dy) * grid.spec.resolution


def truncated_cost(dist: np.ndarray, d_trunc: float) -> np.ndarray:
    return np.clip((d_trunc - dist) / d_trunc, 0.0, 1.0)


def occupancy_to_cost(grid: OccupancyGrid, d_trunc: float) -> CostMap:
    if not d_trunc > 0:
        raise ValueError("d_trunc must be positive")
    if not grid.cells.any():
        return CostMap(grid.spec, np.zeros(grid.cells.shape))
    return CostMap(grid.spec, truncated_cost(distance_to_occupied(grid), d_trunc))


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=float)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_smooth(cmap: CostMap, sigma_g: float) -> CostMap:
    """Separable Gaussian blur (sigma in cells) with clamp-to-edge borders."""
    if not sigma_g > 0:
        raise ValueError("sigma_g must be positive")
    k = gaussian_kernel(sigma_g)
    out = ndimage.correlate1d(cmap.values, k, axis=0, mode="nearest")
    out = ndimage.correlate1d(out, k, axis=1, mode="nearest")
    return CostMap(cmap.spec, np.clip(out, 0.0, 1.0))


def sample_many(cmap: CostMap, points) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear values and gradients at ``points`` of shape ``(..., 2)``.

    Queries are clamped to the square spanned by the outermost cell centers;
    a clamped axis reports zero gradient.
    """
    pts = np.asarray(points, dtype=float)
    spec = cmap.spec
    res = spec.resolution
    v = cmap.values
    fx = (pts[..., 0] - spec.origin[0]) / res - 0.5
    fy = (pts[..., 1] - spec.origin[1]) / res - 0.5
    max_x, max_y = spec.width - 1, spec.height - 1
    clamped_x = (fx < 0) | (fx > max_x)
    clamped_y = (fy < 0) | (fy > max_y)
    fx = np.clip(fx, 0, max_x)
    fy = np.clip(fy, 0, max_y)
    ix = np.minimum(np.floor(fx).astype(int), max(max_x - 1, 0))
    iy = np.minimum(np.floor(fy).astype(int), max(max_y - 1, 0))
    tx = fx - ix
    ty = fy - iy
    ix1 = np.minimum(ix + 1, max_x)
    iy1 = np.minimum(iy + 1, max_y)
    v00 = v[iy, ix]
    v10 = v[iy, ix1]
    v01 = v[iy1, ix]
    v11 = v[iy1, ix1]
    value = (v00 * (1 - tx) + v10 * tx) * (1 - ty) + (v01 * (1 - tx) + v11 * tx) * ty
    gx = ((v10 - v00) * (1 - ty) + (v11 - v01) * ty) / res
    gy = ((v01 - v00) * (1 - tx) + (v11 - v10) * tx) / res
    gx = np.where(clamped_x, 0.0, gx)
    gy = np.where(clamped_y, 0.0, gy)
    return value, np.stack([gx, gy], axis=-1)


def sample_cost(cmap: CostMap, point) -> CostSample:
    p = np.asarray(point, dtype=float)
    if p.shape != (2,) or not np.all(np.isfinite(p)):
        raise ValueError(f"point must be a finite 2-vector, got {point!r}")
    value, grad = sample_many(cmap, p)
    return CostSample(float(value), grad)


@dataclass(frozen=True)
class CostMapConfig:
    resolution: float = 0.1
    extent: float = 12.0
    d_trunc: float = 1.0
    sigma_g: float = 2.0  # cells; 0 disables smoothing


def build_costmap(scan: DepthScan, pose: Pose, cfg: CostMapConfig = CostMapConfig()) -> CostMap:
    """Full pipeline for one frame: local grid centered at ``pose``."""
    spec = GridSpec.centered((pose.x, pose.y), cfg.extent, cfg.resolution)
    grid = scan_to_occupancy(scan, spec, pose)
    cmap = occupancy_to_cost(grid, cfg.d_trunc)
    if cfg.sigma_g > 0:
        cmap = gaussian_smooth(cmap, cfg.sigma_g)
    return cmap
