"""Per-trial outcomes and their aggregate metrics."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

FAILURE_REASONS = (None, "timeout", "stuck", "planner-error")


@dataclass(frozen=True)
class TrialResult:
    success: bool
    length: float  # traveled distance; only meaningful for successes
    collisions: int
    wall_time: float  # simulated seconds until the trial ended
    failure_reason: str | None = None
    seed: int = 0
    suite: str = "basic"
    guided: bool = True
    world_digest: str = ""
    error: str | None = None

    def __post_init__(self) -> None:
        if self.length < 0 or self.collisions < 0:
            raise ValueError("length and collisions must be non-negative")
        if self.failure_reason not in FAILURE_REASONS:
            raise ValueError(f"unknown failure reason {self.failure_reason!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrialResult":
        return cls(**d)


@dataclass(frozen=True)
class MetricsSummary:
    n_trials: int
    success_rate: float
    length_mean: float | None
    length_var: float | None
    collisions_mean: float
    n_success: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def summarize(results: Sequence[TrialResult]) -> MetricsSummary:
    """Success rate, length mean and population variance over successes, collisions per trial.

    Length statistics are None when no trial succeeded.
    """
    if len(results) == 0:
        raise ValueError("cannot summarize zero trials")
    n = len(results)
    lengths = np.array([r.length for r in results if r.success], dtype=float)
    n_s = len(lengths)
    collisions = float(np.mean([r.collisions for r in results]))
    if n_s:
        mean = float(lengths.mean())
        var = float(np.mean((lengths - mean) ** 2))
    else:
        mean = var = None
    return MetricsSummary(n, n_s / n, mean, var, collisions, n_s)


def combine(summaries: Iterable[MetricsSummary]) -> MetricsSummary:
    """Merge summaries of disjoint result sets as if summarizing their union."""
    parts = list(summaries)
    n = sum(s.n_trials for s in parts)
    n_s = sum(s.n_success for s in parts)
    coll = sum(s.collisions_mean * s.n_trials for s in parts) / n
    with_len = [s for s in parts if s.n_success]
    if not with_len:
        return MetricsSummary(n, n_s / n, None, None, coll, n_s)
    mean = sum(s.length_mean * s.n_success for s in with_len) / n_s
    second = sum((s.length_var + s.length_mean ** 2) * s.n_success for s in with_len) / n_s
    return MetricsSummary(n, n_s / n, mean, max(second - mean * mean, 0.0), coll, n_s)
