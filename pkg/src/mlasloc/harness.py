"""Monte-Carlo evaluation: randomized trials, SNR sweep, hit rate and RMSE.

Seeding: every random draw comes from a SeedSequence keyed by
(master_seed, trial_index, stream[, pair]), so a trial is reproducible in
isolation and the target/coefficient/noise draws are shared across SNR
points (common random numbers; only the noise scaling changes with SNR).

File formats (all floats via repr, so re-runs are byte-identical):
  trials.csv   one row per trial x method x true target
  summary.csv  one row per (snr_db, method)
  maps/snr_<snr>/map_<trial>_<method>.csv   optional raw map dumps
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .baselines import (
    MusicObjective,
    music_combination_map,
    soft_fusion_estimate,
)
from .channel import calibrate_noise_for_snr, path_coefficients, synthesize_observation
from .config import (
    METHOD_MLAS,
    METHOD_MUSIC_COMBINATION,
    METHOD_SOFT_FUSION,
    ExperimentConfig,
)
from .detection import extract_peaks
from .likelihood import CombinedObjective, PerPairContext, combined_map
from .subspace import noise_variance_from_covariance, pre_estimate
from .textio import fmt

STREAM_TARGETS = 0
STREAM_COEFFS = 1
STREAM_NOISE = 2

TRIALS_HEADER = (
    "snr_db",
    "trial",
    "method",
    "target",
    "truth_x",
    "truth_y",
    "est_x",
    "est_y",
    "hit",
    "error",
)
SUMMARY_HEADER = ("snr_db", "method", "hit_rate", "rmse", "n_common")

_BIG_COST = 1e9


def trial_rng(
    master_seed: int, trial_index: int, stream: int, pair_index: int | None = None
) -> np.random.Generator:
    key = (master_seed, trial_index, stream)
    if pair_index is not None:
        key = key + (pair_index,)
    return np.random.default_rng(np.random.SeedSequence(key))


def match_detections(
    truth: np.ndarray,
    estimates: np.ndarray,
    hit_radius: float,
    mode: str = "greedy",
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Associate estimates to true targets within the hit radius.

    Greedy mode repeatedly takes the globally closest remaining
    (truth, estimate) pair; "optimal" solves the assignment problem instead
    and exists to check that greedy matching does not distort the metrics.
    Returns (hit flags, errors, matched estimate index) per true target;
    errors are NaN and the index -1 for misses.
    """
    truth = np.asarray(truth, dtype=float).reshape(-1, 2)
    estimates = np.asarray(estimates, dtype=float).reshape(-1, 2)
    k_true = truth.shape[0]
    hits = np.zeros(k_true, dtype=bool)
    errors = np.full(k_true, np.nan)
    matched = np.full(k_true, -1, dtype=int)
    if estimates.shape[0] == 0:
        return hits, errors, matched
    with np.errstate(invalid="ignore"):
        dist = np.linalg.norm(truth[:, None, :] - estimates[None, :, :], axis=2)
    dist = np.where(np.isnan(dist), np.inf, dist)

    if mode == "optimal":
        cost = np.where(dist <= hit_radius, dist, _BIG_COST)
        rows, cols = linear_sum_assignment(cost)
        for t, e in zip(rows, cols):
            if dist[t, e] <= hit_radius:
                hits[t] = True
                errors[t] = float(dist[t, e])
                matched[t] = int(e)
        return hits, errors, matched
    if mode != "greedy":
        raise ValueError(f"unknown matching mode {mode!r}")

    work = dist.copy()
    while True:
        flat = int(np.argmin(work))
        t, e = np.unravel_index(flat, work.shape)
        if not work[t, e] <= hit_radius:
            break
        hits[t] = True
        errors[t] = float(work[t, e])
        matched[t] = int(e)
        work[t, :] = np.inf
        work[:, e] = np.inf
    return hits, errors, matched


@dataclass(frozen=True)
class MethodOutcome:
    positions: np.ndarray  # (K, 2) raw estimates, detection order
    hits: np.ndarray  # (K,) bool, indexed by true target
    errors: np.ndarray  # (K,) float, NaN for misses
    matched: np.ndarray  # (K,) int estimate index, -1 for misses
    failed: bool = False


@dataclass(frozen=True)
class TrialResult:
    trial_index: int
    snr_db: float
    truth: np.ndarray
    outcomes: dict[str, MethodOutcome] = field(default_factory=dict)


def build_contexts(
    config: ExperimentConfig, scene, snr_db: float, trial_index: int
) -> list[PerPairContext]:
    """Synthesize observations and per-pair payloads for one trial.

    All pairs' coefficients are drawn first so that a single noise variance
    (calibrated against the pooled mean path power) is shared by every pair.
    """
    k = config.scene.num_targets
    all_coeffs = [
        path_coefficients(
            scene,
            pair,
            config.ofdm,
            config.coefficients,
            trial_rng(config.master_seed, trial_index, STREAM_COEFFS, p_idx),
        )
        for p_idx, pair in enumerate(scene.pairs)
    ]
    sigma2 = calibrate_noise_for_snr(all_coeffs, snr_db)
    contexts = []
    for p_idx, pair in enumerate(scene.pairs):
        obs = synthesize_observation(
            scene,
            pair,
            config.ofdm,
            config.coefficients,
            sigma2,
            trial_rng(config.master_seed, trial_index, STREAM_NOISE, p_idx),
            coefficients=all_coeffs[p_idx],
        )
        pre = pre_estimate(pair, obs.covariance, k, config.angle_grid)
        if config.noise_variance_mode == "known":
            noise_var = sigma2
        else:
            noise_var = noise_variance_from_covariance(obs.covariance, k)
        contexts.append(
            PerPairContext(
                geometry=pair,
                covariance=obs.covariance,
                noise_variance=noise_var,
                num_subcarriers=config.ofdm.num_subcarriers,
                pre_estimates=pre,
            )
        )
    return contexts


def run_method(
    method: str,
    contexts: Sequence[PerPairContext],
    config: ExperimentConfig,
    truth: np.ndarray,
):
    """Positions (K, 2) for one method, plus its map and detections if any."""
    k = config.scene.num_targets
    bounds = (config.grid.x_min, config.grid.x_max, config.grid.y_min, config.grid.y_max)
    if method == METHOD_MLAS:
        lik_map = combined_map(contexts, config.grid)
        det = extract_peaks(lik_map, CombinedObjective(contexts), k, bounds)
        return det.positions, lik_map, det
    if method == METHOD_MUSIC_COMBINATION:
        lik_map = music_combination_map(contexts, config.grid, config.music_combination_scale)
        det = extract_peaks(
            lik_map, MusicObjective(contexts, config.music_combination_scale), k, bounds
        )
        return det.positions, lik_map, det
    if method == METHOD_SOFT_FUSION:
        return soft_fusion_estimate(contexts, truth).positions, None, None
    raise ValueError(f"unknown method {method!r}")


def run_trial(
    config: ExperimentConfig,
    snr_db: float,
    trial_index: int,
    return_maps: bool = False,
):
    """One end-to-end trial; deterministic given (config, snr_db, trial_index).

    Method failures (degenerate draws) become all-miss outcomes with the
    ``failed`` flag set; a sweep is never aborted by a single trial.
    """
    scene = config.scene.realize(
        trial_rng(config.master_seed, trial_index, STREAM_TARGETS)
    )
    k = config.scene.num_targets
    contexts = build_contexts(config, scene, snr_db, trial_index)
    outcomes: dict[str, MethodOutcome] = {}
    maps: dict[str, tuple] = {}
    for method in config.methods:
        failed = False
        try:
            positions, lik_map, det = run_method(method, contexts, config, scene.targets)
        except (ValueError, RuntimeError, np.linalg.LinAlgError):
            positions = np.full((k, 2), np.inf)
            lik_map = det = None
            failed = True
        hits, errors, matched = match_detections(
            scene.targets, positions, config.hit_radius, config.matching_mode
        )
        outcomes[method] = MethodOutcome(
            positions=positions, hits=hits, errors=errors, matched=matched, failed=failed
        )
        if return_maps and lik_map is not None:
            maps[method] = (lik_map, det)
    result = TrialResult(
        trial_index=trial_index, snr_db=float(snr_db), truth=scene.targets, outcomes=outcomes
    )
    return (result, maps) if return_maps else result


def trial_lines(config: ExperimentConfig, result: TrialResult) -> list[str]:
    """CSV lines for one trial, methods in config order, targets ascending."""
    lines = []
    for method in config.methods:
        out = result.outcomes[method]
        for t in range(result.truth.shape[0]):
            if out.hits[t]:
                est = out.positions[out.matched[t]]
                est_x, est_y = float(est[0]), float(est[1])
            else:
                est_x = est_y = np.nan
            cells = (
                fmt(float(result.snr_db)),
                fmt(result.trial_index),
                method,
                fmt(t),
                fmt(float(result.truth[t, 0])),
                fmt(float(result.truth[t, 1])),
                fmt(est_x),
                fmt(est_y),
                fmt(bool(out.hits[t])),
                fmt(float(out.errors[t])) if out.hits[t] else "nan",
            )
            lines.append(",".join(cells))
    return lines


def parse_trial_line(line: str, lineno: int) -> dict:
    parts = line.rstrip("\n").split(",")
    if len(parts) != len(TRIALS_HEADER):
        raise ValueError(f"trials.csv line {lineno}: expected {len(TRIALS_HEADER)} fields")
    try:
        return {
            "snr_key": parts[0],
            "snr_db": float(parts[0]),
            "trial": int(parts[1]),
            "method": parts[2],
            "target": int(parts[3]),
            "hit": parts[8] == "1",
            "error": float(parts[9]),
            "line": line.rstrip("\n"),
        }
    except ValueError as exc:
        raise ValueError(f"trials.csv line {lineno}: {exc}") from exc


def _load_complete_trials(path: Path, config: ExperimentConfig) -> dict:
    """Rows of finished (snr, trial) groups from a partial log, keyed for resume.

    A group is complete when it holds exactly one row per configured method
    and target; anything else (torn writes, config drift) is recomputed.
    """
    k = config.scene.num_targets
    want = {(m, t) for m in config.methods for t in range(k)}
    groups: dict[tuple, list] = defaultdict(list)
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != ",".join(TRIALS_HEADER):
            return {}
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                row = parse_trial_line(line, lineno)
            except ValueError:
                continue
            groups[(row["snr_key"], row["trial"])].append(row)
    complete = {}
    for key, rows in groups.items():
        if {(r["method"], r["target"]) for r in rows} == want and len(rows) == len(want):
            ordered = sorted(
                rows, key=lambda r: (config.methods.index(r["method"]), r["target"])
            )
            complete[key] = ordered
    return complete


@dataclass(frozen=True)
class MetricRow:
    snr_db: float
    method: str
    hit_rate: float
    rmse: float  # NaN when no target was hit by every method
    n_common: int


@dataclass(frozen=True)
class MetricsSummary:
    rows: tuple[MetricRow, ...]

    def lookup(self, snr_db: float, method: str) -> MetricRow:
        for row in self.rows:
            if row.method == method and row.snr_db == snr_db:
                return row
        raise KeyError((snr_db, method))


def aggregate(parsed_rows: Sequence[dict], methods: Sequence[str]) -> MetricsSummary:
    """Hit rate per (snr, method) and RMSE over targets hit by all methods."""
    hit_counts: dict[tuple, list] = defaultdict(lambda: [0, 0])
    per_target: dict[tuple, dict] = defaultdict(dict)
    snr_order: list[str] = []
    for row in parsed_rows:
        if row["method"] not in methods:
            continue
        key = (row["snr_key"], row["method"])
        hit_counts[key][0] += int(row["hit"])
        hit_counts[key][1] += 1
        per_target[(row["snr_key"], row["trial"], row["target"])][row["method"]] = row
        if row["snr_key"] not in snr_order:
            snr_order.append(row["snr_key"])

    sq_errors: dict[tuple, list] = defaultdict(list)
    common_counts: dict[str, int] = defaultdict(int)
    for (snr_key, _trial, _target), by_method in per_target.items():
        if all(m in by_method and by_method[m]["hit"] for m in methods):
            common_counts[snr_key] += 1
            for m in methods:
                sq_errors[(snr_key, m)].append(by_method[m]["error"] ** 2)

    rows_out = []
    for snr_key in snr_order:
        for method in methods:
            hits, count = hit_counts[(snr_key, method)]
            sq = sq_errors[(snr_key, method)]
            rows_out.append(
                MetricRow(
                    snr_db=float(snr_key),
                    method=method,
                    hit_rate=hits / count if count else np.nan,
                    rmse=float(np.sqrt(np.mean(sq))) if sq else np.nan,
                    n_common=common_counts[snr_key],
                )
            )
    return MetricsSummary(rows=tuple(rows_out))


def summary_to_csv(summary: MetricsSummary, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(SUMMARY_HEADER) + "\n")
        for row in summary.rows:
            fh.write(
                ",".join(
                    (
                        fmt(row.snr_db),
                        row.method,
                        fmt(row.hit_rate),
                        fmt(row.rmse),
                        fmt(row.n_common),
                    )
                )
                + "\n"
            )


def read_summary_csv(path) -> MetricsSummary:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != ",".join(SUMMARY_HEADER):
            raise ValueError(f"summary.csv line 1: unexpected header {header!r}")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split(",")
            if len(parts) != len(SUMMARY_HEADER):
                raise ValueError(
                    f"summary.csv line {lineno}: expected {len(SUMMARY_HEADER)} fields"
                )
            try:
                rows.append(
                    MetricRow(
                        snr_db=float(parts[0]),
                        method=parts[1],
                        hit_rate=float(parts[2]),
                        rmse=float(parts[3]),
                        n_common=int(parts[4]),
                    )
                )
            except ValueError as exc:
                raise ValueError(f"summary.csv line {lineno}: {exc}") from exc
    return MetricsSummary(rows=tuple(rows))


def _dump_trial_maps(out_dir: Path, snr_db: float, trial_index: int, maps: dict) -> None:
    snr_dir = out_dir / "maps" / f"snr_{fmt(float(snr_db))}"
    snr_dir.mkdir(parents=True, exist_ok=True)
    for method, (lik_map, _det) in maps.items():
        lik_map.to_csv(snr_dir / f"map_{trial_index}_{method}.csv")


def run_sweep(
    config: ExperimentConfig,
    out_dir,
    resume: bool = False,
    progress: Callable[[float, int], None] | None = None,
) -> MetricsSummary:
    """Full SNR x trials sweep, persisted incrementally.

    trials.csv is flushed after every trial, so an interrupted sweep leaves
    complete rows behind; with ``resume`` those (snr, trial) groups are
    reused instead of recomputed. The summary is always aggregated from the
    rows actually written.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trials_path = out / "trials.csv"
    cache = {}
    if resume and trials_path.exists():
        cache = _load_complete_trials(trials_path, config)

    all_rows: list[dict] = []
    with open(trials_path, "w", encoding="utf-8") as fh:
        fh.write(",".join(TRIALS_HEADER) + "\n")
        lineno = 1
        for snr_db in config.snr_grid_db:
            for trial in range(config.num_trials):
                key = (fmt(float(snr_db)), trial)
                cached = cache.get(key)
                if cached is not None:
                    lines = [row["line"] for row in cached]
                else:
                    if config.dump_maps:
                        result, maps = run_trial(config, snr_db, trial, return_maps=True)
                        _dump_trial_maps(out, snr_db, trial, maps)
                    else:
                        result = run_trial(config, snr_db, trial)
                    lines = trial_lines(config, result)
                for line in lines:
                    fh.write(line + "\n")
                    lineno += 1
                    all_rows.append(parse_trial_line(line, lineno))
                fh.flush()
                if progress is not None:
                    progress(float(snr_db), trial)

    summary = aggregate(all_rows, config.methods)
    summary_to_csv(summary, out / "summary.csv")
    return summary
