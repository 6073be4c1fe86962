"""Pick one path per planning cycle with direction consistency and smoothing."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import UndefinedDirectionError
from .geometry import mean_heading, wrap_angle


@dataclass(frozen=True)
class SelectionConfig:
    epsilon: float = math.pi / 4
    m: int = 4
    blend_alpha: float = 0.3

    def __post_init__(self) -> None:
        if not 0 < self.epsilon <= math.pi:
            raise ValueError("epsilon must lie in (0, pi]")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if not 0 <= self.blend_alpha < 1:
            raise ValueError("blend_alpha must lie in [0, 1)")


@dataclass(frozen=True)
class SelectionState:
    history: np.ndarray | None = None  # previous choice, already in the current robot frame


def direction_difference(p, q, m: int) -> float:
    return abs(wrap_angle(mean_heading(p, m) - mean_heading(q, m)))


def _consistent_indices(candidates: Sequence[np.ndarray], state: SelectionState,
                        cfg: SelectionConfig) -> list[int]:
    if state.history is None:
        return list(range(len(candidates)))
    try:
        ref = mean_heading(state.history, cfg.m)
    except UndefinedDirectionError:
        return list(range(len(candidates)))
    keep = []
    for i, cand in enumerate(candidates):
        try:
            if abs(wrap_angle(mean_heading(cand, cfg.m) - ref)) < cfg.epsilon:
                keep.append(i)
        except UndefinedDirectionError:
            continue
    return keep


def consistent_subset(candidates: Sequence[np.ndarray], state: SelectionState,
                      cfg: SelectionConfig) -> list[np.ndarray]:
    """Candidates whose heading is within ``epsilon`` of the history path.

    A history whose own heading is undefined constrains nothing.
    """
    return [candidates[i] for i in _consistent_indices(candidates, state, cfg)]


def blend(current, history, blend_alpha: float) -> np.ndarray:
    current = np.asarray(current, dtype=float)
    return (1.0 - blend_alpha) * current + blend_alpha * np.asarray(history, dtype=float)


def select(candidates: Sequence[np.ndarray], costs: Sequence[float], state: SelectionState,
           cfg: SelectionConfig) -> tuple[np.ndarray, SelectionState, int]:
    """Lowest-cost consistent candidate, blended with history.

    Falls back to the global minimum when no candidate is consistent. Returns
    the blended path, the new state, and the index of the raw pick.
    """
    if len(candidates) == 0 or len(candidates) != len(costs):
        raise ValueError("candidates and costs must be non-empty and equally long")
    pool = _consistent_indices(candidates, state, cfg) or list(range(len(candidates)))
    costs = np.asarray(costs, dtype=float)
    costs = np.where(np.isfinite(costs), costs, np.inf)
    # argmin returns the first minimum, i.e. the lowest index on ties
    best = pool[int(np.argmin(costs[pool]))]
    chosen = np.asarray(candidates[best], dtype=float)
    if state.history is not None:
        chosen = blend(chosen, state.history, cfg.blend_alpha)
    return chosen, SelectionState(chosen), best
