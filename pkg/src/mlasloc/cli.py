"""Command-line front end: single maps, Monte-Carlo sweeps, comparisons.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime or I/O
error. All commands are deterministic given (config, seed, overrides).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import (
    ALL_METHODS,
    METHOD_SOFT_FUSION,
    ConfigError,
    build_config,
    load_raw,
)
from .harness import read_summary_csv, run_sweep, run_trial
from .textio import write_rows

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on usage errors; we reserve 2 for runtime
    failures, so usage problems are remapped to the config exit code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _add_config_options(parser, with_out: bool = True):
    parser.add_argument("--config", required=True, help="path to the JSON config file")
    if with_out:
        parser.add_argument("--out", default="out", help="output directory (default: out)")
    parser.add_argument("--seed", type=int, default=None, help="override master_seed")
    parser.add_argument("--trials", type=int, default=None, help="override num_trials")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="dotted-path config override, repeatable, last wins "
        "(e.g. --set map_grid.spacing=0.5)",
    )
    parser.add_argument(
        "--methods",
        default=None,
        help=f"comma-separated subset of {', '.join(ALL_METHODS)}",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mlasloc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_map = sub.add_parser("map", help="run one trial and dump its maps/detections")
    _add_config_options(p_map)
    p_map.set_defaults(func=cmd_map)

    p_sweep = sub.add_parser("sweep", help="run the Monte-Carlo SNR sweep")
    _add_config_options(p_sweep)
    p_sweep.add_argument(
        "--resume",
        action="store_true",
        help="reuse completed trials from an existing trials.csv",
    )
    p_sweep.set_defaults(func=cmd_sweep)

    p_cmp = sub.add_parser("compare", help="tabulate a finished sweep's summary.csv")
    p_cmp.add_argument("--out", default="out", help="sweep output directory")
    p_cmp.set_defaults(func=cmd_compare)

    p_val = sub.add_parser("validate-config", help="check a config file and exit")
    _add_config_options(p_val, with_out=False)
    p_val.set_defaults(func=cmd_validate_config)
    return parser


def _effective_raw(args) -> dict:
    raw = load_raw(args.config, args.overrides)
    if args.methods is not None:
        methods = [m.strip() for m in args.methods.split(",") if m.strip()]
        if not methods:
            raise ConfigError("--methods must name at least one method")
        raw["methods"] = methods
    if args.seed is not None:
        raw["master_seed"] = args.seed
    if args.trials is not None:
        raw["num_trials"] = args.trials
    return raw


def _write_resolved_config(raw: dict, out: Path) -> None:
    (out / "config.json").write_text(json.dumps(raw, indent=2) + "\n")


def cmd_map(args) -> int:
    raw = _effective_raw(args)
    config = build_config(raw)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_resolved_config(raw, out)

    result, maps = run_trial(config, config.snr_db, trial_index=0, return_maps=True)
    write_rows(
        out / "truth.csv",
        ("target", "x", "y"),
        [(t, result.truth[t, 0], result.truth[t, 1]) for t in range(result.truth.shape[0])],
    )
    for method, (lik_map, det) in maps.items():
        lik_map.to_csv(out / f"map_0_{method}.csv")
        lik_map.to_csv_db(out / f"map_0_{method}_db.csv")
        det.to_csv(out / f"detections_0_{method}.csv")
    if METHOD_SOFT_FUSION in result.outcomes:
        pos = result.outcomes[METHOD_SOFT_FUSION].positions
        write_rows(
            out / f"detections_0_{METHOD_SOFT_FUSION}.csv",
            ("rank", "x", "y", "value", "refined_flag"),
            [(i + 1, pos[i, 0], pos[i, 1], np.nan, False) for i in range(pos.shape[0])],
        )
    for method in config.methods:
        outcome = result.outcomes[method]
        hits = int(outcome.hits.sum())
        print(f"{method}: {hits}/{len(outcome.hits)} targets hit at {config.snr_db} dB")
    print(f"wrote results to {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    raw = _effective_raw(args)
    config = build_config(raw)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_resolved_config(raw, out)

    def progress(snr_db: float, trial: int) -> None:
        if (trial + 1) % 50 == 0 or trial + 1 == config.num_trials:
            print(
                f"snr {snr_db:+.1f} dB: trial {trial + 1}/{config.num_trials}",
                file=sys.stderr,
            )

    summary = run_sweep(config, out, resume=args.resume, progress=progress)
    _print_summary_table(summary)
    print(f"wrote {out / 'summary.csv'} and {out / 'trials.csv'}")
    return EXIT_OK


def _print_summary_table(summary) -> None:
    print(f"{'snr_db':>8}  {'method':<18} {'hit_rate':>8}  {'rmse':>10}  {'n_common':>8}")
    for row in summary.rows:
        rmse = f"{row.rmse:.4f}" if np.isfinite(row.rmse) else "n/a"
        print(
            f"{row.snr_db:>8.1f}  {row.method:<18} {row.hit_rate:>8.4f}  "
            f"{rmse:>10}  {row.n_common:>8}"
        )


def cmd_compare(args) -> int:
    path = Path(args.out) / "summary.csv"
    if not path.is_file():
        raise RuntimeError(f"missing sweep output: {path}")
    summary = read_summary_csv(path)
    methods = []
    snrs = []
    for row in summary.rows:
        if row.method not in methods:
            methods.append(row.method)
        if row.snr_db not in snrs:
            snrs.append(row.snr_db)

    print(f"{'snr_db':>8}  {'method':<18} {'hit_rate':>8}  {'rmse':>10}  best")
    for snr in snrs:
        rows = [summary.lookup(snr, m) for m in methods]
        best_hit = max(r.hit_rate for r in rows)
        finite_rmse = [r.rmse for r in rows if np.isfinite(r.rmse)]
        best_rmse = min(finite_rmse) if finite_rmse else None
        for row in rows:
            flags = []
            if len(methods) > 1:
                if row.hit_rate == best_hit:
                    flags.append("hit_rate")
                if best_rmse is not None and row.rmse == best_rmse:
                    flags.append("rmse")
            rmse = f"{row.rmse:.4f}" if np.isfinite(row.rmse) else "n/a"
            print(
                f"{snr:>8.1f}  {row.method:<18} {row.hit_rate:>8.4f}  "
                f"{rmse:>10}  {','.join(flags)}"
            )
    return EXIT_OK


def cmd_validate_config(args) -> int:
    raw = _effective_raw(args)
    config = build_config(raw)
    region = "fixed targets" if config.scene.fixed_targets is not None else "random targets"
    print(
        f"config ok: {len(config.scene.pairs)} radar pairs, "
        f"{config.scene.num_targets} targets ({region}), "
        f"methods: {', '.join(config.methods)}"
    )
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
