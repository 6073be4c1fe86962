from __future__ import annotations

import json
import re

import numpy as np
import pytest

from navguide import cli, evaluation
from navguide.config import Config, config_from_dict, load_config, with_overrides
from navguide.denoiser import forward
from navguide.errors import CheckpointError, ConfigError
from navguide.io import DatasetError, checkpoint_bytes, load_model, model_from_bytes, read_dataset, save_model
from navguide.sim import World

TINY_CONFIG = {"denoiser": {"hidden": 32, "depth": 1}, "train": {"epochs": 2, "batch_size": 16}}


# --- config --------------------------------------------------------------------

def test_config_defaults_round_trip():
    cfg = Config()
    assert config_from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_config_unknown_and_mistyped_keys():
    with pytest.raises(ConfigError, match="unknown config key train.sead"):
        config_from_dict({"train": {"sead": 1}})
    with pytest.raises(ConfigError, match="train.seed"):
        config_from_dict({"train": {"seed": "one"}})
    with pytest.raises(ConfigError, match="unknown config key nope.x"):
        with_overrides(Config(), {"nope.x": 1})
    with pytest.raises(ConfigError, match="sim"):
        config_from_dict({"sim": {"kind": "lunar"}})


def test_config_overrides_and_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"train": {"seed": 4}, "diffusion": {"guidance_scale": [1.0, 2.0]}}))
    cfg = load_config(path)
    assert cfg.train.seed == 4 and cfg.diffusion.guidance_scale == (1.0, 2.0)
    assert with_overrides(cfg, {"train.seed": 9}).train.seed == 9
    path.write_text("{ bad json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(path)


# --- file formats ---------------------------------------------------------------

def test_checkpoint_round_trip_is_exact(single_mode):
    once = model_from_bytes(checkpoint_bytes(single_mode.model))
    blob = checkpoint_bytes(once)
    twice = model_from_bytes(blob)
    assert checkpoint_bytes(twice) == blob
    x = np.random.default_rng(0).normal(size=(4, 16))
    ctx = np.tile(single_mode.ctx, (4, 1))
    np.testing.assert_array_equal(forward(once.params, x, 3, ctx), forward(twice.params, x, 3, ctx))
    assert twice.sched.kind == single_mode.model.sched.kind
    np.testing.assert_array_equal(twice.sched.alpha_bar, single_mode.model.sched.alpha_bar)


def test_checkpoint_corruption_detected(single_mode):
    blob = bytearray(checkpoint_bytes(single_mode.model))
    blob[100] ^= 0x01
    with pytest.raises(CheckpointError, match="CRC"):
        model_from_bytes(bytes(blob))
    with pytest.raises(CheckpointError, match="truncated"):
        model_from_bytes(bytes(blob[:10]))


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n")
    return path


def test_dataset_errors_carry_line_numbers(tmp_path):
    good = json.dumps({"ctx": [0.5] * 34, "npath": [0.1] * 16})
    cases = {
        "{not json": "invalid JSON",
        json.dumps({"ctx": [0.5] * 34}): "needs",
        json.dumps({"ctx": [0.5] * 33, "npath": [0.1] * 16}): "ctx has 33",
        json.dumps({"ctx": [0.5] * 34, "npath": [0.1] * 14}): "7 waypoints",
        json.dumps({"ctx": [0.5] * 34, "npath": [0.1] * 15 + [None]}): "non-finite",
    }
    for bad, msg in cases.items():
        path = write_lines(tmp_path / "d.ndjson", [good, good, bad])
        with pytest.raises(DatasetError, match=f"line 3: .*{msg}") as info:
            read_dataset(path, 34, 8)
        assert info.value.line == 3
    with pytest.raises(DatasetError, match="empty"):
        read_dataset(write_lines(tmp_path / "e.ndjson", [""]))


# --- verbs ----------------------------------------------------------------------

def run(argv, capsys) -> tuple[int, str, str]:
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def tiny_data(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "d.ndjson"
    assert cli.main(["gen-data", "--worlds", "1", "--samples", "10", "--seed", "3", "--out", str(path)]) == 0
    return path


def test_gen_data_count_and_determinism(tiny_data, tmp_path, capsys):
    assert len(tiny_data.read_text().splitlines()) == 10
    again = tmp_path / "again.ndjson"
    code, out, _ = run(["gen-data", "--worlds", 1, "--samples", 10, "--seed", 3, "--out", again], capsys)
    assert code == 0 and "wrote 10 samples" in out
    assert again.read_bytes() == tiny_data.read_bytes()


def test_gen_data_rejection_rate_is_low(tmp_path, capsys):
    code, out, _ = run(["gen-data", "--worlds", 3, "--samples", 100, "--seed", 0, "--out", tmp_path / "d"], capsys)
    rate = float(re.search(r"rejection rate ([0-9.]+)", out).group(1))
    assert code == 0 and rate < 0.2


def test_train_deterministic_with_loss_log(tiny_data, tmp_path, capsys):
    cfg = tmp_path / "tiny.json"
    cfg.write_text(json.dumps(TINY_CONFIG))
    outs = []
    for name in ("a.ndif", "b.ndif"):
        code, out, _ = run(["train", "--data", tiny_data, "--config", cfg, "--seed", 5, "--out", tmp_path / name],
                           capsys)
        assert code == 0 and "final loss" in out
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1]
    log = (tmp_path / "a.ndif.loss.csv").read_text().splitlines()
    assert log[0] == "epoch,loss" and len(log) == 3
    model = load_model(tmp_path / "a.ndif")
    assert model.params.arch.hidden == 32 and model.params.arch.depth == 1
    code, _, _ = run(["train", "--data", tiny_data, "--config", cfg, "--seed", 6, "--out", tmp_path / "c.ndif"],
                     capsys)
    assert (tmp_path / "c.ndif").read_bytes() != outs[0]


def test_train_reports_bad_dataset_line(tmp_path, capsys):
    data = write_lines(tmp_path / "bad.ndjson", [json.dumps({"ctx": [0.5] * 34, "npath": [0.1] * 16}), "oops"])
    code, _, err = run(["train", "--data", data, "--out", tmp_path / "m.ndif"], capsys)
    assert code == 1 and "line 2" in err


@pytest.fixture(scope="module")
def toy_files(tmp_path_factory, two_mode):
    d = tmp_path_factory.mktemp("toy")
    save_model(two_mode.model, d / "model.ndif")
    (d / "empty.json").write_text(World(20, 20, spawn=(5, 10, 0.3), goal=(9, 10, 0.3)).to_json())
    return d


def test_sample_scale_zero_matches_unguided(toy_files, tmp_path, capsys):
    out = tmp_path / "paths.json"
    code, _, _ = run(["sample", "--model", toy_files / "model.ndif", "--world", toy_files / "empty.json",
                      "--pose", "5,10,0", "--num", 8, "--scale", 0, "--out", out], capsys)
    doc = json.loads(out.read_text())
    assert code == 0 and doc["scale"] == 0.0
    assert doc["guided"] == doc["unguided"]


def test_sample_svg_has_both_path_sets(toy_files, tmp_path, capsys):
    svg = tmp_path / "paths.svg"
    code, _, _ = run(["sample", "--model", toy_files / "model.ndif", "--world", toy_files / "empty.json",
                      "--pose", "5,10,0", "--num", 50, "--svg", svg, "--out", tmp_path / "p.json"], capsys)
    text = svg.read_text()
    assert code == 0 and text.count("<polyline") == 100
    groups = re.findall(r'<g class="(guided|unguided)".*?</g>', text, flags=re.S)
    assert sorted(groups) == ["guided", "unguided"]


def test_sample_errors(toy_files, tmp_path, capsys):
    base = ["sample", "--model", toy_files / "model.ndif", "--world", toy_files / "empty.json"]
    code, _, err = run(base + ["--pose", "25,10,0"], capsys)
    assert code == 1 and "outside" in err
    bad = tmp_path / "bad.ndif"
    blob = bytearray((toy_files / "model.ndif").read_bytes())
    blob[-1] ^= 0xFF
    bad.write_bytes(bytes(blob))
    code, _, err = run(["sample", "--model", bad, "--world", toy_files / "empty.json", "--pose", "5,10,0"], capsys)
    assert code == 1 and "CRC" in err
    code, _, err = run(base + ["--pose", "1,2"], capsys)
    assert code == 1 and "--pose needs 3" in err


def test_sample_obstacle_fixture_guided_lower_collision_cost(expert_model, tmp_path, capsys):
    save_model(expert_model, tmp_path / "m.ndif")
    world = World(20, 20, discs=[[7.5, 10.0, 0.4]], spawn=(5, 10, 0.3), goal=(10, 10, 0.3))
    (tmp_path / "w.json").write_text(world.to_json())
    code, _, _ = run(["sample", "--model", tmp_path / "m.ndif", "--world", tmp_path / "w.json",
                      "--pose", "5,10,0", "--num", 50, "--out", tmp_path / "p.json"], capsys)
    doc = json.loads((tmp_path / "p.json").read_text())
    assert code == 0
    assert np.mean(doc["guided_collision_cost"]) < np.mean(doc["unguided_collision_cost"])


def test_eval_trivial_world_and_determinism(toy_files, tmp_path, capsys, monkeypatch):
    easy = World(10, 10, spawn=(5, 5, 0.3), goal=(5.3, 5, 0.3))
    monkeypatch.setattr(evaluation, "suite_world", lambda suite, kind, seed, sigma_r: easy)
    outs = []
    for name in ("a.json", "b.json"):
        code, table, _ = run(["eval", "--model", toy_files / "model.ndif", "--suite", "basic", "--trials", 1,
                              "--seed", 2, "--out", tmp_path / name], capsys)
        assert code == 0 and "guided" in table
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1]
    doc = json.loads(outs[0])
    assert [s["success_rate"] for s in doc["summary"]] == [1.0, 1.0]
    assert (tmp_path / "a.csv").read_text().startswith("suite,guided,n,")


def test_eval_single_arm_and_failures_do_not_fail_the_command(toy_files, tmp_path, capsys, monkeypatch):
    walled = World(10, 10, rects=[[6, 0, 6.5, 10]], spawn=(3, 5, 0.3), goal=(9, 5, 0.3))
    monkeypatch.setattr(evaluation, "suite_world", lambda suite, kind, seed, sigma_r: walled)
    cfg = tmp_path / "short.json"
    cfg.write_text(json.dumps({"sim": {"time_limit": 3.0, "num_candidates": 2}}))
    code, _, _ = run(["eval", "--model", toy_files / "model.ndif", "--suite", "basic", "--trials", 1,
                      "--no-guided", "--config", cfg, "--out", tmp_path / "r.json"], capsys)
    doc = json.loads((tmp_path / "r.json").read_text())
    assert code == 0
    assert [s["guided"] for s in doc["summary"]] == [False] and doc["summary"][0]["success_rate"] == 0.0


def test_missing_model_is_an_infrastructure_error(tmp_path, capsys):
    code, _, err = run(["eval", "--model", tmp_path / "nope.ndif", "--out", tmp_path / "r.json"], capsys)
    assert code == 1 and "error" in err
