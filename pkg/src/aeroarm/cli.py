"""Command-line entry point: ``aeroarm {plan,train,eval,sweep,disturb}``."""

import argparse
import os
import sys

from aeroarm import experiments
from aeroarm.arm import NumericalBlowup
from aeroarm.config import ConfigError, load_config
from aeroarm.corridor import CorridorEmpty
from aeroarm.planner import NoFeasiblePath

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERICAL = 4


def build_parser():
    parser = argparse.ArgumentParser(prog="aeroarm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH")
    common.add_argument("--seed", type=int, help="root RNG seed (u64)")
    common.add_argument("--episodes", type=int)
    common.add_argument("--lr", type=float, help="learning rate")
    common.add_argument("--gamma", type=float, help="discount factor")
    common.add_argument("--out", metavar="DIR", help="output directory")
    for name in ("plan", "train", "eval", "disturb"):
        sub.add_parser(name, parents=[common])
    sweep = sub.add_parser("sweep", parents=[common])
    sweep.add_argument("--axis", required=True, choices=sorted(experiments.SWEEP_AXES))
    return parser


def apply_overrides(cfg, args):
    learn = {}
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        learn["rng_seed"] = args.seed
    if args.episodes is not None:
        learn["episodes"] = args.episodes
    if args.lr is not None:
        learn["learning_rate"] = args.lr
    if args.gamma is not None:
        learn["discount"] = args.gamma
    if learn:
        cfg = cfg.override("learn", **learn)
    if args.out is not None:
        cfg = cfg.override(None, output_dir=os.path.abspath(args.out))
    return cfg


def run(args):
    try:
        cfg = apply_overrides(load_config(args.config), args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "plan":
            experiments.cmd_plan(cfg)
        elif args.command == "train":
            rep = experiments.cmd_train(cfg).report
            if rep.blown_up:
                print("greedy evaluation diverged", file=sys.stderr)
                return EXIT_NUMERICAL
        elif args.command == "eval":
            rep = experiments.cmd_eval(cfg)
            if rep.blown_up:
                print("greedy evaluation diverged", file=sys.stderr)
                return EXIT_NUMERICAL
        elif args.command == "sweep":
            experiments.cmd_sweep(cfg, args.axis)
        else:
            experiments.cmd_disturb(cfg)
    except (CorridorEmpty, NoFeasiblePath) as exc:
        print(f"infeasible mission: {exc} (blocking index {exc.index})", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (NumericalBlowup, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
