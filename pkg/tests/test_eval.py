from __future__ import annotations

import csv
import io
import json
import statistics

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from navguide import evaluation
from navguide.config import Config, with_overrides
from navguide.evaluation import CSV_COLUMNS, run_ablation, trial_seed
from navguide.metrics import MetricsSummary, TrialResult, combine, summarize
from navguide.sim import World


def results(n: int, successes: int = 0, collisions: int = 0) -> list[TrialResult]:
    out = []
    for i in range(n):
        ok = i < successes
        out.append(TrialResult(ok, 10.0 + i if ok else 0.0, 1 if i < collisions else 0, 30.0,
                               None if ok else "timeout", seed=i))
    return out


def test_summarize_success_rate_example():
    assert summarize(results(50, successes=41)).success_rate == 0.82


def test_summarize_collisions_example():
    assert summarize(results(50, successes=50, collisions=4)).collisions_mean == 0.08


def test_summarize_all_failures():
    m = summarize(results(7, collisions=3))
    assert m.success_rate == 0.0 and m.length_mean is None and m.length_var is None
    assert m.collisions_mean == pytest.approx(3 / 7)
    with pytest.raises(ValueError):
        summarize([])


def test_length_stats_use_successes_and_population_variance():
    rs = results(10, successes=4) + [TrialResult(False, 99.0, 0, 1.0, "stuck")]
    m = summarize(rs)
    lengths = [10.0, 11.0, 12.0, 13.0]
    assert m.length_mean == statistics.fmean(lengths)
    assert m.length_var == pytest.approx(statistics.pvariance(lengths), abs=1e-15)


def test_trial_result_validation():
    with pytest.raises(ValueError):
        TrialResult(True, -1.0, 0, 1.0)
    with pytest.raises(ValueError):
        TrialResult(False, 0.0, -1, 1.0, "timeout")
    with pytest.raises(ValueError):
        TrialResult(False, 0.0, 0, 1.0, "bored")
    r = TrialResult(False, 0.0, 2, 3.5, "stuck", seed=4, suite="obstacle", guided=False)
    assert TrialResult.from_dict(r.to_dict()) == r


trial = st.builds(lambda ok, length, coll: TrialResult(ok, length if ok else 0.0, coll, 1.0,
                                                       None if ok else "timeout"),
                  st.booleans(), st.floats(0, 50), st.integers(0, 5))


@given(st.lists(trial, min_size=1, max_size=30), st.randoms())
def test_summarize_permutation_invariant(rs, rnd):
    shuffled = list(rs)
    rnd.shuffle(shuffled)
    a, b = summarize(rs), summarize(shuffled)
    assert a.n_trials == b.n_trials and a.success_rate == b.success_rate and a.n_success == b.n_success
    for x, y in ((a.length_mean, b.length_mean), (a.length_var, b.length_var),
                 (a.collisions_mean, b.collisions_mean)):
        assert (x is None and y is None) or x == pytest.approx(y, rel=1e-12, abs=1e-12)


@settings(max_examples=200)
@given(st.lists(st.lists(trial, min_size=1, max_size=15), min_size=1, max_size=4))
def test_combine_matches_union(parts):
    merged = combine(summarize(p) for p in parts)
    union = summarize([r for p in parts for r in p])
    assert merged.n_trials == union.n_trials and merged.n_success == union.n_success
    assert abs(merged.success_rate - union.success_rate) <= 1e-12
    assert abs(merged.collisions_mean - union.collisions_mean) <= 1e-12
    if union.length_mean is None:
        assert merged.length_mean is None
    else:
        assert abs(merged.length_mean - union.length_mean) <= 1e-12 * max(1.0, union.length_mean)
        assert abs(merged.length_var - union.length_var) <= 1e-9 * max(1.0, union.length_mean ** 2)


def quick_config() -> Config:
    return with_overrides(Config(), {"sim.time_limit": 6.0, "sim.num_candidates": 4})


def test_ablation_easy_world_all_succeed(single_mode, monkeypatch):
    easy = World(10, 10, spawn=(5, 5, 0.3), goal=(5.3, 5, 0.3))
    monkeypatch.setattr(evaluation, "suite_world", lambda suite, kind, seed, sigma_r: easy)
    out = run_ablation(single_mode.model, ["basic"], 1, 0, quick_config())
    for arm in (True, False):
        assert out.summaries[("basic", arm)].success_rate == 1.0


def test_ablation_pairs_worlds_and_is_deterministic(single_mode):
    cfg = quick_config()
    a = run_ablation(single_mode.model, ["basic", "obstacle"], 2, 3, cfg)
    for suite in ("basic", "obstacle"):
        g, u = a.results[(suite, True)], a.results[(suite, False)]
        assert [r.world_digest for r in g] == [r.world_digest for r in u]
        assert [r.seed for r in g] == [trial_seed(3, suite, i) for i in range(2)]
        assert all(r.guided for r in g) and not any(r.guided for r in u)
    assert all(d["same_world"] for d in a.deltas())
    b = run_ablation(single_mode.model, ["basic", "obstacle"], 2, 3, cfg)
    assert a.results == b.results and a.to_json() == b.to_json() and a.to_csv() == b.to_csv()


def test_ablation_parallel_matches_serial(single_mode):
    cfg = quick_config()
    serial = run_ablation(single_mode.model, ["basic"], 2, 1, cfg)
    parallel = run_ablation(single_mode.model, ["basic"], 2, 1, cfg, jobs=2)
    assert serial.to_json() == parallel.to_json()


def test_ablation_records_errors_without_aborting(single_mode, monkeypatch):
    def broken(suite, kind, seed, sigma_r):
        raise RuntimeError("no world today")
    monkeypatch.setattr(evaluation, "suite_world", broken)
    out = run_ablation(single_mode.model, ["basic"], 2, 0, quick_config())
    rs = out.results[("basic", True)]
    assert len(rs) == 2 and all(r.failure_reason == "planner-error" and "no world" in r.error for r in rs)


def test_ablation_argument_checks(single_mode):
    with pytest.raises(ValueError):
        run_ablation(single_mode.model, ["basic"], 0, 0)
    with pytest.raises(ValueError):
        run_ablation(single_mode.model, ["moon"], 1, 0)


def test_exports_format(single_mode, monkeypatch):
    easy = World(10, 10, spawn=(5, 5, 0.3), goal=(5.3, 5, 0.3))
    monkeypatch.setattr(evaluation, "suite_world", lambda suite, kind, seed, sigma_r: easy)
    out = run_ablation(single_mode.model, ["basic"], 2, 0, quick_config())
    doc = json.loads(out.to_json())
    assert len(doc["results"]) == 4 and len(doc["summary"]) == 2 and len(doc["deltas"]) == 2
    assert set(doc["results"][0]) >= {"success", "length", "collisions", "wall_time", "failure_reason",
                                      "seed", "suite", "guided"}
    rows = list(csv.reader(io.StringIO(out.to_csv())))
    assert tuple(rows[0]) == CSV_COLUMNS and len(rows) == 3
    assert float(rows[1][3]) == 1.0
    assert "length (var)" in out.table()


def test_guided_collisions_no_worse_on_most_pairs(obstacle_ablation):
    g = obstacle_ablation.results[("obstacle", True)]
    u = obstacle_ablation.results[("obstacle", False)]
    assert len(g) == len(u) == 50
    assert all(a.world_digest == b.world_digest for a, b in zip(g, u))
    better_or_equal = np.mean([a.collisions <= b.collisions for a, b in zip(g, u)])
    assert better_or_equal >= 0.7


def test_trained_model_ablation_direction(obstacle_ablation):
    s = obstacle_ablation.summaries
    guided, unguided = s[("obstacle", True)], s[("obstacle", False)]
    assert isinstance(guided, MetricsSummary)
    assert guided.success_rate > unguided.success_rate
    assert guided.collisions_mean < unguided.collisions_mean
