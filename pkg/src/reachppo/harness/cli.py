"""Command-line entry point: ``reachppo {train,eval,compare,inspect-checkpoint}``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .checkpoint import CheckpointFormatError, checkpoint_load, describe
from .config import OUT_ENV_VAR, ConfigError, load_config
from .runner import compare, evaluate, run_dir, train


def _pairs(items) -> dict:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _run_config(args, mode: str):
    overrides = _pairs(args.set)
    overrides["run.mode"] = mode
    if args.seed:
        overrides["run.seeds"] = ",".join(str(s) for s in args.seed)
    if args.out:
        overrides["run.out_dir"] = args.out
    return load_config(args.config, overrides)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="reachppo", description="PPO reaching experiments on a UR5e kinematic model.")
    p.add_argument("-v", "--verbose", action="store_true", help="log every update")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp):
        sp.add_argument("--config", help="flat key = value config file")
        sp.add_argument("--seed", type=int, action="append", help="seed (repeatable)")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
        sp.add_argument("--out", help=f"output directory (default: ${OUT_ENV_VAR} or ./runs)")

    common(sub.add_parser("train", help="train one agent per seed"))
    ev = sub.add_parser("eval", help="greedy success-rate sweep of a checkpoint")
    common(ev)
    ev.add_argument("checkpoint", nargs="?", help="checkpoint file (default: final.ckpt of the first seed's run)")
    common(sub.add_parser("compare", help="train vanilla, aep and improved variants on the same seeds"))
    ins = sub.add_parser("inspect-checkpoint", help="print checkpoint metadata and shapes")
    ins.add_argument("checkpoint")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.verb == "inspect-checkpoint":
            print(describe(checkpoint_load(args.checkpoint)))
            return 0
        cfg = _run_config(args, args.verb)
        if args.verb == "train":
            for res in train(cfg):
                print(f"seed {res.seed}: final-100 reward {res.final_reward():.3f} -> {res.out_dir}")
        elif args.verb == "eval":
            path = args.checkpoint or run_dir(cfg, cfg.seeds[0]) / "final.ckpt"
            report = evaluate(path, cfg)
            dest = cfg.output_path / cfg.task / cfg.variant / "evalreport.csv"
            report.write(dest)
            for t, s in zip(report.thresholds, report.success_rate):
                print(f"{t * 100:4.0f} cm  {s:6.1%}")
            print(f"final error {report.final_err_mean:.4f} +- {report.final_err_std:.4f} m, "
                  f"collision rate {report.collision_rate:.1%} -> {dest}")
        else:
            out = compare(replace(cfg, mode="compare"))
            for v, res in out.items():
                print(f"{v:9s} success@5cm {res['success'][4]:.1%}  success@10cm {res['success'][9]:.1%}")
    except (ConfigError, CheckpointFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
