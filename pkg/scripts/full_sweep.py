#!/usr/bin/env python3
"""Run the Monte-Carlo SNR sweep on the shipped default configuration.

Desk scale by default (500 trials per SNR point, about 15 minutes);
--trials 15000 reproduces the long-running protocol. Resume is on, so an
interrupted sweep picks up where it stopped.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from mlasloc.cli import main as cli_main


def run(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument(
        "--config",
        default=str(Path(__file__).resolve().parents[1] / "configs" / "default.json"),
    )
    ap.add_argument("--out", default="out/sweep")
    ap.add_argument("--trials", type=int, default=None)
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args(argv)

    cli_args = ["sweep", "--config", args.config, "--out", args.out, "--resume"]
    if args.trials is not None:
        cli_args += ["--trials", str(args.trials)]
    if args.seed is not None:
        cli_args += ["--seed", str(args.seed)]
    rc = cli_main(cli_args)
    if rc == 0:
        print(f"compare with: mlasloc compare --out {args.out}")
    return rc


if __name__ == "__main__":
    sys.exit(run())
