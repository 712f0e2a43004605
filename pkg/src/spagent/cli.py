"""``spagent`` command-line entry point.

Subcommands: generate, train, eval, demo, inspect.  Configuration precedence,
lowest to highest: built-in defaults, ``--config FILE``, ``--set KEY=VALUE``,
then the dedicated flags (``--seed``, ``--downsample``, ...).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .agent.checkpoint import save_checkpoint
from .config import RunConfig, load_config, parse_pairs
from .env import PlaneEnv
from .errors import ConfigError, SpagentError
from .geom import TangentPoint, build_frame
from .imitation import agreement, generate_demos, save_demos
from .pipeline import evaluate, generate_dataset, load_agent_net, load_dataset, pretrain_agent, train
from .volume import load_volume, reslice


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="key = value configuration file")
    p.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                   help="override one configuration key (repeatable)")
    p.add_argument("--seed", type=int, help="run seed")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--uniform-replay", action="store_true", default=None,
                   help="sample replay uniformly instead of by priority")
    p.add_argument("--asr-sign-literal", action="store_true", default=None,
                   help="use the printed operand order for the anatomical reward term")
    p.add_argument("--downsample", type=int, metavar="N", help="frame downsampling factor")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spagent", description="Tangent-point plane search workbench.")
    parser.add_argument("--version", action="version", version=f"spagent {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic phantom dataset")
    _common(p)

    p = sub.add_parser("train", help="imitation warm start then reinforcement learning")
    _common(p)
    p.add_argument("--dataset", metavar="DIR", help="dataset directory (default: dataset_dir)")

    p = sub.add_parser("eval", help="score a policy from the canonical start")
    _common(p)
    p.add_argument("--checkpoint", metavar="PATH", help="agent checkpoint (required for --policy agent)")
    p.add_argument("--dataset", metavar="DIR", help="dataset directory (default: dataset_dir)")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--policy", default="agent", choices=("agent", "random", "oracle"))

    p = sub.add_parser("demo", help="oracle demonstrations and behavior cloning only")
    _common(p)
    p.add_argument("--dataset", metavar="DIR", help="dataset directory (default: dataset_dir)")

    p = sub.add_parser("inspect", help="dump a plane reslice as a PGM image")
    _common(p)
    p.add_argument("volume", help="a .spvol file")
    p.add_argument("--tangent", metavar="X,Y,Z", help="tangent point in mm (default: ground truth)")
    p.add_argument("--heatmap", action="store_true", help="reslice the landmark heatmap instead")
    return parser


def resolve_config(args, base: RunConfig | None = None) -> RunConfig:
    overrides = parse_pairs(args.set)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.downsample is not None:
        overrides["downsample"] = args.downsample
    if args.uniform_replay:
        overrides["uniform_replay"] = True
    if args.asr_sign_literal:
        overrides["asr_sign_literal"] = True
    return load_config(args.config, overrides, base)


def write_pgm(path, image: np.ndarray) -> None:
    img = np.asarray(image, dtype=np.float64)
    lo, hi = float(img.min()), float(img.max())
    scaled = np.zeros_like(img) if hi <= lo else (img - lo) / (hi - lo)
    data = np.round(scaled * 255).astype(np.uint8)
    h, w = data.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + data.tobytes())


def cmd_generate(args) -> int:
    cfg = resolve_config(args)
    ds = generate_dataset(cfg, args.out or cfg.dataset_dir)
    print(f"wrote {len(ds.manifest['volumes'])} volumes to {ds.root}")
    return 0


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    ds = load_dataset(args.dataset or cfg.dataset_dir)
    summary = train(cfg, ds, args.out or cfg.out_dir)
    print(f"best validation Ang: {summary['best_val_ang']}")
    print(f"outputs in {summary['out_dir']}")
    return 0


def cmd_eval(args) -> int:
    base = None
    if args.checkpoint and args.config is None:
        side = Path(args.checkpoint).with_name("config.txt")
        if side.exists():
            base = load_config(side)
    cfg = resolve_config(args, base)
    ds = load_dataset(args.dataset or cfg.dataset_dir)
    net = None
    if args.policy == "agent":
        if not args.checkpoint:
            raise SystemExit("eval --policy agent needs --checkpoint")
        net = load_agent_net(args.checkpoint, cfg)
    report = evaluate(ds.volumes(args.split), ds.names(args.split), cfg.env_config(), args.policy,
                      net, cfg.downsample, cfg.pose_scale, seed=cfg.seed)
    out = Path(args.out or cfg.out_dir)
    csv_path, _ = report.write(out, f"eval_{args.split}_{args.policy}")
    sys.stdout.write(report.to_table())
    print(f"report: {csv_path}")
    return 0


def cmd_demo(args) -> int:
    cfg = resolve_config(args)
    if cfg.demos_per_volume < 1 or cfg.il_epochs < 1:
        raise ConfigError("demo needs demos_per_volume >= 1 and il_epochs >= 1")
    ds = load_dataset(args.dataset or cfg.dataset_dir)
    out = Path(args.out or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    agent, demos, _ = pretrain_agent(cfg, ds)
    save_demos(demos, out / "demos.spdem")
    save_checkpoint(agent, out / "pretrained.ckpt")
    (out / "config.txt").write_text(cfg.dumps())
    print(f"demonstrations: {len(demos)} ({sum(len(d) for d in demos)} pairs)")
    print(f"train agreement: {agreement(agent.net, demos):.4f}")
    held = []
    for i, vol in enumerate(ds.volumes("val")):
        held.extend(generate_demos(vol, cfg.demos_per_volume, cfg.seed + 10_000 + i, ds.sampler(),
                                   cfg.env_config(), cfg.downsample, cfg.pose_scale))
    if held:
        print(f"held-out agreement (val split): {agreement(agent.net, held):.4f}")
    return 0


def cmd_inspect(args) -> int:
    cfg = resolve_config(args)
    vol = load_volume(args.volume)
    if args.tangent:
        t = TangentPoint(*(float(x) for x in args.tangent.split(",")))
    else:
        t = vol.gt_tangent
    env = PlaneEnv(vol, cfg.env_config())
    frame = build_frame(t, cfg.pixel_pitch, cfg.extent)
    img = reslice(vol, frame, vol.heatmap if args.heatmap else None)
    out = Path(args.out or f"{Path(args.volume).stem}.pgm")
    if out.suffix != ".pgm":
        out = out / f"{Path(args.volume).stem}.pgm"
        out.parent.mkdir(parents=True, exist_ok=True)
    write_pgm(out, img)
    print(f"tangent {t.as_array().tolist()}  heat mass {env.heat_sum(t):.4f}  -> {out}")
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "demo": cmd_demo,
    "inspect": cmd_inspect,
}


def main(argv=None) -> int:
    level = os.environ.get("SPAGENT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (SpagentError, OSError) as exc:
        print(f"spagent: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
