"""Command-line interface: gen-data, train, sample, eval."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import Config, load_config, with_overrides
from .costs import collision_cost
from .denoiser import init_params
from .diffusion import Model, make_schedule, train
from .errors import NavGuideError
from .evaluation import run_ablation
from .geometry import Pose, robot_to_world
from .io import DatasetError, load_model, read_dataset, save_model, write_dataset
from .planner import Planner
from .render import render_svg
from .sim.expert import DatasetReport, gen_expert_dataset
from .sim.trial import SUITES
from .sim.world import World, raycast_depth

log = logging.getLogger("navguide")


def _config(args, overrides: dict) -> Config:
    cfg = load_config(args.config) if args.config else Config()
    return with_overrides(cfg, {k: v for k, v in overrides.items() if v is not None})


def _floats(text: str, n: int, what: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        vals = ()
    if len(vals) != n or not all(np.isfinite(vals)):
        raise argparse.ArgumentTypeError(f"{what} needs {n} comma-separated numbers, got {text!r}")
    return vals


def cmd_gen_data(args) -> int:
    cfg = _config(args, {"sim.kind": args.kind})
    report = DatasetReport()
    samples = gen_expert_dataset(args.worlds, args.samples, args.seed, cfg.sim.kind, cfg.sim.expert,
                                 cfg.geometry, cfg.sensor, cfg.denoiser.n_waypoints, report)
    write_dataset(samples, args.out)
    print(f"wrote {report.samples} samples to {args.out} "
          f"(attempts {report.attempts}, rejection rate {report.rejection_rate:.3f})")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args, {"train.seed": args.seed, "train.epochs": args.epochs})
    arch = cfg.denoiser
    ctx, npaths = read_dataset(args.data, arch.ctx_dim, arch.n_waypoints)
    d = cfg.diffusion
    sched = make_schedule(d.T, d.schedule, d.beta_start, d.beta_end)
    params = init_params(arch, cfg.train.seed)
    log_path = Path(args.log) if args.log else Path(str(args.out) + ".loss.csv")
    with open(log_path, "w", encoding="utf-8") as fh:
        fh.write("epoch,loss\n")

        def on_epoch(epoch: int, loss: float) -> None:
            fh.write(f"{epoch},{loss!r}\n")
            fh.flush()
            log.info("epoch %d loss %.6f", epoch, loss)

        losses = train(params, ctx, npaths, sched, cfg.train, on_epoch=on_epoch)
    save_model(Model(params, sched, cfg.geometry), args.out)
    print(f"final loss {losses[-1]:.6f} after {len(losses)} epochs on {len(npaths)} samples; wrote {args.out}")
    return 0


def cmd_sample(args) -> int:
    cfg = _config(args, {"sim.num_candidates": args.num})
    model = load_model(args.model)
    world = World.from_dict(json.loads(Path(args.world).read_text(encoding="utf-8")))
    x, y, th = _floats(args.pose, 3, "--pose")
    if not (0.0 <= x <= world.width and 0.0 <= y <= world.height):
        raise NavGuideError(f"pose ({x}, {y}) lies outside the {world.width}x{world.height} world")
    pose = Pose(x, y, th)
    goal = np.array(_floats(args.goal, 2, "--goal") if args.goal else world.goal[:2], dtype=float)
    scale = cfg.diffusion.guidance_scale if args.scale is None else args.scale
    planner = Planner(model, cfg.planner(scale))
    scan = raycast_depth(world, pose, cfg.sensor)
    guided, cmap = planner.candidates(scan, pose, goal, args.seed, True)
    unguided, _ = planner.candidates(scan, pose, goal, args.seed, False, cmap=cmap)
    gw, uw = robot_to_world(guided, pose), robot_to_world(unguided, pose)
    fc_g = np.asarray(collision_cost(gw, cmap, cfg.costs).value)
    fc_u = np.asarray(collision_cost(uw, cmap, cfg.costs).value)
    doc = {
        "pose": [pose.x, pose.y, pose.heading], "goal": goal.tolist(), "seed": args.seed,
        "scale": list(scale) if isinstance(scale, tuple) else scale,
        "guided": gw.tolist(), "unguided": uw.tolist(),
        "guided_collision_cost": fc_g.tolist(), "unguided_collision_cost": fc_u.tolist(),
    }
    text = json.dumps(doc, indent=1) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.svg:
        Path(args.svg).write_text(render_svg(cmap, gw, uw, goal, pose), encoding="utf-8")
    print(f"mean collision cost: guided {fc_g.mean():.4f}, unguided {fc_u.mean():.4f}", file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    cfg = _config(args, {})
    model = load_model(args.model)
    arms = (True, False) if args.guided is None else (args.guided,)
    seed = cfg.eval.seed if args.seed is None else args.seed
    trials = cfg.eval.trials if args.trials is None else args.trials
    suites = [args.suite] if args.suite else list(cfg.eval.suites)
    result = run_ablation(model, suites, trials, seed, cfg, arms, args.jobs)
    out = Path(args.out)
    out.write_text(result.to_json(), encoding="utf-8")
    csv_path = Path(args.csv) if args.csv else out.with_suffix(".csv")
    csv_path.write_text(result.to_csv(), encoding="utf-8")
    print(result.table())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="navguide", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config file; flags override its values")
        return sp

    g = common(sub.add_parser("gen-data", help="generate an expert-path dataset"))
    g.add_argument("--worlds", type=int, required=True)
    g.add_argument("--samples", type=int, required=True, help="samples per world")
    g.add_argument("--kind", choices=("indoor", "outdoor"))
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    t = common(sub.add_parser("train", help="train the denoiser"))
    t.add_argument("--data", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--out", required=True)
    t.add_argument("--log", help="per-epoch loss CSV (default: <out>.loss.csv)")
    t.set_defaults(func=cmd_train)

    s = common(sub.add_parser("sample", help="sample guided and unguided paths at one pose"))
    s.add_argument("--model", required=True)
    s.add_argument("--world", required=True, help="world JSON")
    s.add_argument("--pose", required=True, help="X,Y,TH")
    s.add_argument("--goal", help="X,Y (default: the world's goal)")
    s.add_argument("--num", type=int, default=50)
    s.add_argument("--scale", type=float)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--svg")
    s.add_argument("--out", help="paths JSON (default: stdout)")
    s.set_defaults(func=cmd_sample)

    e = common(sub.add_parser("eval", help="run the guided/unguided ablation"))
    e.add_argument("--model", required=True)
    e.add_argument("--suite", choices=SUITES)
    e.add_argument("--trials", type=int)
    e.add_argument("--guided", dest="guided", action="store_true", default=None)
    e.add_argument("--no-guided", dest="guided", action="store_false")
    e.add_argument("--seed", type=int)
    e.add_argument("--out", required=True, help="results JSON")
    e.add_argument("--csv", help="summary CSV (default: <out> with .csv suffix)")
    e.add_argument("--jobs", type=int, default=1)
    e.set_defaults(func=cmd_eval)
    return p


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("NAVGUIDE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DatasetError as exc:
        print(f"error: {args.data}: {exc}", file=sys.stderr)
    except (NavGuideError, OSError, ValueError, argparse.ArgumentTypeError) as exc:
        seed = getattr(exc, "seed", None)
        suffix = f" (world seed {seed})" if seed is not None else ""
        print(f"error: {exc}{suffix}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
