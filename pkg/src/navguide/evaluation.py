"""Paired guided/unguided ablation over the trial suites."""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import Config
from .diffusion import Model
from .metrics import MetricsSummary, TrialResult, summarize
from .sim.trial import SUITES, run_trial, suite_world

log = logging.getLogger(__name__)

CSV_COLUMNS = ("suite", "guided", "n", "success_rate", "length_mean", "length_var", "collisions_mean")


def trial_seed(seed: int, suite: str, index: int) -> int:
    """Seed shared by both arms for trial ``index`` of ``suite``."""
    ss = np.random.SeedSequence([seed, SUITES.index(suite), index])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _one_trial(model: Model, cfg: Config, suite: str, guided: bool, seed: int) -> TrialResult:
    """Run one trial; any exception becomes a recorded planner-error result."""
    digest = ""
    try:
        world = suite_world(suite, cfg.sim.kind, seed, cfg.costs.sigma_r)
        digest = world.digest()
        return run_trial(world, model, cfg.trial(suite, guided, seed), cfg.planner(), cfg.sensor)
    except Exception as exc:  # noqa: BLE001 - a broken trial must not abort the batch
        log.warning("trial %s/%s/%d failed: %s", suite, guided, seed, exc)
        return TrialResult(False, 0.0, 0, 0.0, "planner-error", seed=seed, suite=suite, guided=guided,
                           world_digest=digest, error=f"{type(exc).__name__}: {exc}")


def _star(args) -> TrialResult:
    return _one_trial(*args)


@dataclass
class AblationResult:
    results: dict[tuple[str, bool], list[TrialResult]] = field(default_factory=dict)

    @property
    def summaries(self) -> dict[tuple[str, bool], MetricsSummary]:
        return {key: summarize(rs) for key, rs in self.results.items()}

    def deltas(self) -> list[dict]:
        """Guided minus unguided outcome for each paired trial."""
        out = []
        for suite in dict.fromkeys(s for s, _ in self.results):
            g, u = self.results.get((suite, True)), self.results.get((suite, False))
            if g is None or u is None:
                continue
            for i, (a, b) in enumerate(zip(g, u)):
                out.append({"suite": suite, "trial": i, "seed": a.seed,
                            "success": int(a.success) - int(b.success),
                            "collisions": a.collisions - b.collisions,
                            "same_world": a.world_digest == b.world_digest})
        return out

    def to_json(self) -> str:
        doc = {
            "results": [r.to_dict() for rs in self.results.values() for r in rs],
            "summary": [{"suite": s, "guided": g, **m.to_dict()} for (s, g), m in self.summaries.items()],
            "deltas": self.deltas(),
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for (s, g), m in self.summaries.items():
            w.writerow([s, int(g), m.n_trials, repr(m.success_rate), _fmt(m.length_mean),
                        _fmt(m.length_var), repr(m.collisions_mean)])
        return buf.getvalue()

    def table(self) -> str:
        lines = [f"{'suite':<9} {'arm':<9} {'n':>4} {'success':>8} {'length (var)':>16} {'collisions':>10}"]
        for (s, g), m in self.summaries.items():
            length = "-" if m.length_mean is None else f"{m.length_mean:.2f} ({m.length_var:.2f})"
            lines.append(f"{s:<9} {'guided' if g else 'unguided':<9} {m.n_trials:>4} "
                         f"{m.success_rate:>8.2f} {length:>16} {m.collisions_mean:>10.2f}")
        return "\n".join(lines)


def _fmt(x: float | None) -> str:
    return "" if x is None else repr(x)


def run_ablation(model: Model, suites, trials_per_cell: int, seed: int, cfg: Config = Config(),
                 arms: tuple[bool, ...] = (True, False), jobs: int = 1) -> AblationResult:
    """Run every (suite, arm) cell with paired trial seeds.

    Trial ``i`` of a suite uses the same seed in every arm, hence the same
    world, start pose and sampling noise; only guidance differs. Results are
    ordered by trial index regardless of ``jobs``.
    """
    if trials_per_cell < 1:
        raise ValueError("trials_per_cell must be >= 1")
    for s in suites:
        if s not in SUITES:
            raise ValueError(f"unknown suite {s!r}")
    tasks = [(model, cfg, s, g, trial_seed(seed, s, i))
             for s in suites for g in arms for i in range(trials_per_cell)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            flat = list(pool.map(_star, tasks, chunksize=1))
    else:
        flat = [_star(t) for t in tasks]
    out = AblationResult()
    for task, res in zip(tasks, flat):
        out.results.setdefault((task[2], task[3]), []).append(res)
    return out
