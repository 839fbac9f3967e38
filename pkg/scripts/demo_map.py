#!/usr/bin/env python3
"""Render one high-SNR combined map for a fixed three-target scene.

Writes the raw and normalized-dB maps plus detections for each configured
method into --out, then prints detections next to the truth. Equivalent to
`mlasloc map --config configs/fixed_three_targets.json`, kept as a script so
the output is one `python scripts/demo_map.py` away.
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
        default=str(Path(__file__).resolve().parents[1] / "configs" / "fixed_three_targets.json"),
    )
    ap.add_argument("--out", default="out/demo_map")
    ap.add_argument("--snr", type=float, default=None, help="override snr_db")
    args = ap.parse_args(argv)

    cli_args = ["map", "--config", args.config, "--out", args.out]
    if args.snr is not None:
        cli_args += ["--set", f"snr_db={args.snr}"]
    return cli_main(cli_args)


if __name__ == "__main__":
    sys.exit(run())
