"""Differentiable goal and collision costs over waypoint paths.

Every function accepts a single path ``(N, 2)`` or a batch ``(K, N, 2)``;
values and gradients carry the same leading batch shape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .costmap import CostMap, sample_many
from .errors import DegeneratePathError

_SEG_EPS = 1e-9


def linear_impact(n_waypoints: int) -> tuple[float, ...]:
    """Per-waypoint collision weights ramping from 0 (nearest) to 1 (farthest)."""
    if n_waypoints == 1:
        return (1.0,)
    return tuple(float(v) for v in np.linspace(0.0, 1.0, n_waypoints))


@dataclass(frozen=True)
class CostConfig:
    alpha: float = 0.03
    beta: float = 0.006
    sigma_r: float = 0.25
    impact: tuple[float, ...] | None = None  # None -> linear ramp sized to the path

    def __post_init__(self) -> None:
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("cost weights must be non-negative")
        if not self.sigma_r > 0:
            raise ValueError("sigma_r must be positive")
        if self.impact is not None:
            imp = tuple(float(v) for v in self.impact)
            if any(not 0.0 <= v <= 1.0 for v in imp):
                raise ValueError("impact weights must lie in [0, 1]")
            object.__setattr__(self, "impact", imp)

    def impact_weights(self, n_waypoints: int) -> np.ndarray:
        if self.impact is None:
            return np.asarray(linear_impact(n_waypoints))
        if len(self.impact) != n_waypoints:
            raise ValueError(f"impact has {len(self.impact)} entries, path has {n_waypoints}")
        return np.asarray(self.impact)


@dataclass
class CostEval:
    value: np.ndarray | float
    grad: np.ndarray


def goal_cost(path, goal) -> CostEval:
    """Squared distance from the final waypoint to the goal."""
    p = np.asarray(path, dtype=float)
    diff = p[..., -1, :] - np.asarray(goal, dtype=float)
    value = np.sum(diff * diff, axis=-1)
    grad = np.zeros_like(p)
    grad[..., -1, :] = 2.0 * diff
    return CostEval(value, grad)


def _unit_normals(path: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Left unit normals per waypoint and a mask of fully degenerate paths.

    Waypoint t uses segment t -> t+1; the last waypoint reuses the preceding
    segment.  A zero-length segment borrows the nearest valid segment, looking
    forward first.
    """
    seg = np.diff(path, axis=-2)
    seg = np.concatenate([seg, seg[..., -1:, :]], axis=-2)
    norm = np.linalg.norm(seg, axis=-1)
    ok = norm > _SEG_EPS
    n = path.shape[-2]
    degenerate = ~ok.any(axis=-1)
    if not ok.all():
        idx = np.arange(n)
        # nearest valid index at or after t, falling back to the nearest before
        fwd = np.where(ok, idx, n)
        fwd = np.minimum.accumulate(fwd[..., ::-1], axis=-1)[..., ::-1]
        bwd = np.where(ok, idx, -1)
        bwd = np.maximum.accumulate(bwd, axis=-1)
        src = np.where(fwd < n, fwd, np.maximum(bwd, 0))
        seg = np.take_along_axis(seg, src[..., None].repeat(2, axis=-1), axis=-2)
        norm = np.take_along_axis(norm, src, axis=-1)
    norm = np.where(norm > _SEG_EPS, norm, 1.0)
    d = seg / norm[..., None]
    return np.stack([-d[..., 1], d[..., 0]], axis=-1), degenerate


def lateral_offsets(path, sigma_r: float) -> tuple[np.ndarray, np.ndarray]:
    """Points ``sigma_r`` to the left and right of each waypoint."""
    p = np.asarray(path, dtype=float)
    normals, degenerate = _unit_normals(p)
    if np.any(degenerate):
        raise DegeneratePathError("all waypoints coincide")
    return p + sigma_r * normals, p - sigma_r * normals


def degenerate_mask(paths) -> np.ndarray:
    return _unit_normals(np.asarray(paths, dtype=float))[1]


def collision_cost(path, cmap: CostMap, cfg: CostConfig, *, chain_normals: bool = False) -> CostEval:
    """Impact-weighted cost-map value at each waypoint and its two lateral offsets.

    By default the offset direction is held constant, so offset-point
    gradients land on their center waypoint only.  ``chain_normals=True``
    also differentiates the normals through the neighboring waypoints.
    """
    p = np.asarray(path, dtype=float)
    normals, degenerate = _unit_normals(p)
    if np.any(degenerate):
        raise DegeneratePathError("all waypoints coincide")
    k = cfg.impact_weights(p.shape[-2])
    off = cfg.sigma_r * normals
    v_c, g_c = sample_many(cmap, p)
    v_l, g_l = sample_many(cmap, p + off)
    v_r, g_r = sample_many(cmap, p - off)
    value = np.sum(k * (v_c + v_l + v_r), axis=-1)
    grad = k[:, None] * (g_c + g_l + g_r)
    if chain_normals:
        grad = grad + _normal_chain(p, k[:, None] * (g_l - g_r) * cfg.sigma_r)
    return CostEval(value, grad)


def _normal_chain(p: np.ndarray, dnormal: np.ndarray) -> np.ndarray:
    """Back-propagate d(cost)/d(normal_t) onto the waypoints defining each normal."""
    seg = np.diff(p, axis=-2)
    seg = np.concatenate([seg, seg[..., -1:, :]], axis=-2)
    length = np.linalg.norm(seg, axis=-1, keepdims=True)
    d = seg / length
    # n = R90 d, so dL/dd = R90^T dL/dn
    dd = np.stack([dnormal[..., 1], -dnormal[..., 0]], axis=-1)
    # d = s/|s|  ->  dL/ds = (dL/dd - d (d . dL/dd)) / |s|
    ds = (dd - d * np.sum(d * dd, axis=-1, keepdims=True)) / length
    grad = np.zeros_like(p)
    n = p.shape[-2]
    # normal t (t < n-1) uses s_t = p[t+1] - p[t]; the last reuses s_{n-2}
    grad[..., 1:, :] += ds[..., :n - 1, :]
    grad[..., :n - 1, :] -= ds[..., :n - 1, :]
    grad[..., n - 1, :] += ds[..., n - 1, :]
    grad[..., n - 2, :] -= ds[..., n - 1, :]
    return grad


def total_cost(path, cmap: CostMap, goal, cfg: CostConfig, *, chain_normals: bool = False) -> CostEval:
    """``alpha * goal + beta * collision``; the goal term is dropped when ``goal`` is None."""
    coll = collision_cost(path, cmap, cfg, chain_normals=chain_normals)
    value = cfg.beta * coll.value
    grad = cfg.beta * coll.grad
    if goal is not None:
        g = goal_cost(path, goal)
        value = value + cfg.alpha * g.value
        grad = grad + cfg.alpha * g.grad
    return CostEval(value, grad)
