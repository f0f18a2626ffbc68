"""Command-line entry point: ``xbar-robust <subcommand> --config FILE``."""

from __future__ import annotations

import argparse
import json
import os
import sys

import torch

from ..errors import ConfigError
from .commands import COMMANDS, run
from .config import load_config, parse_config_text


def _apply_thread_cap():
    cap = os.environ.get("XBAR_THREADS")
    if cap:
        try:
            n = max(1, int(cap))
        except ValueError:
            raise ConfigError(f"XBAR_THREADS must be an integer, got {cap!r}")
        torch.set_num_threads(min(torch.get_num_threads(), n))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xbar-robust",
        description="Crossbar-robustness experiment harness")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in sorted(COMMANDS):
        p = sub.add_parser(name)
        p.add_argument("--config", required=False, default=None,
                       help="flat key = value config file (defaults apply "
                            "when omitted)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--out", default=None, help="override the output dir")
        p.add_argument("--checkpoint", default=None,
                       help="override the checkpoint path")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _apply_thread_cap()
    overrides = {"seed": args.seed, "out_dir": args.out,
                 "checkpoint": args.checkpoint}
    try:
        if args.config:
            cfg = load_config(args.config, overrides)
        else:
            cfg = parse_config_text("")
            for k, v in overrides.items():
                if v is not None:
                    cfg.values[k] = v
        results = run(args.command, cfg)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    print(json.dumps({"command": args.command, "out_dir": cfg.out_dir,
                      "results": results}, indent=2, sort_keys=True,
                     default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
