"""End-to-end command-line behavior and exit codes."""

from pathlib import Path

import numpy as np
import pytest

from mlasloc.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"

# Overrides making one-off trials cheap while exercising the full pipeline.
SMALL = [
    "--set", "ofdm.num_subcarriers=64",
    "--set", "map_grid.spacing=0.5",
    "--set", "angle_grid_spacing_deg=2.0",
    "--set", "num_targets=2",
]


def test_validate_config_accepts_every_shipped_config():
    shipped = sorted(CONFIG_DIR.glob("*.json"))
    assert shipped, "expected config files in configs/"
    for path in shipped:
        assert main(["validate-config", "--config", str(path)]) == EXIT_OK


def test_validate_config_missing_file_names_path(capsys):
    code = main(["validate-config", "--config", "/nonexistent/conf.json"])
    assert code == EXIT_CONFIG
    assert "/nonexistent/conf.json" in capsys.readouterr().err


def test_validate_config_rejects_bad_override(capsys):
    code = main(
        ["validate-config", "--config", str(CONFIG_DIR / "default.json"),
         "--set", "num_trials=0"]
    )
    assert code == EXIT_CONFIG
    assert "num_trials" in capsys.readouterr().err


def test_usage_errors_exit_with_config_code(capsys):
    assert main([]) == EXIT_CONFIG
    assert main(["frobnicate"]) == EXIT_CONFIG
    assert main(["map"]) == EXIT_CONFIG  # --config is required
    capsys.readouterr()


def test_methods_flag(capsys):
    config = str(CONFIG_DIR / "default.json")
    assert main(["validate-config", "--config", config, "--methods", "mlas"]) == EXIT_OK
    assert main(["validate-config", "--config", config, "--methods", ""]) == EXIT_CONFIG
    assert main(["validate-config", "--config", config, "--methods", "fft"]) == EXIT_CONFIG
    capsys.readouterr()


def test_map_writes_expected_files(tmp_path, capsys):
    out = tmp_path / "map_out"
    code = main(
        ["map", "--config", str(CONFIG_DIR / "default.json"), "--out", str(out)]
        + SMALL + ["--set", "snr_db=30.0"]
    )
    assert code == EXIT_OK
    for name in (
        "config.json",
        "truth.csv",
        "map_0_mlas.csv",
        "map_0_mlas_db.csv",
        "detections_0_mlas.csv",
        "map_0_music-combination.csv",
        "detections_0_music-combination.csv",
        "detections_0_soft-fusion.csv",
    ):
        assert (out / name).is_file(), name
    truth = out.joinpath("truth.csv").read_text().splitlines()
    assert truth[0] == "target,x,y"
    assert len(truth) == 3  # header + 2 targets
    det = out.joinpath("detections_0_mlas.csv").read_text()
    assert "np.float64" not in det  # fields must be plain reprs
    stdout = capsys.readouterr().out
    assert "mlas" in stdout and "targets hit" in stdout


def test_map_at_high_snr_recovers_fixed_targets(tmp_path, capsys):
    out = tmp_path / "fixed"
    code = main(
        ["map", "--config", str(CONFIG_DIR / "fixed_three_targets.json"),
         "--out", str(out)]
    )
    assert code == EXIT_OK
    capsys.readouterr()

    def read_xy(path, skip_cols):
        rows = [
            line.split(",") for line in path.read_text().splitlines()[1:] if line
        ]
        return np.array([[float(r[skip_cols]), float(r[skip_cols + 1])] for r in rows])

    truth = read_xy(out / "truth.csv", 1)
    det = read_xy(out / "detections_0_mlas.csv", 1)
    assert det.shape == truth.shape
    for t in truth:
        assert np.linalg.norm(det - t, axis=1).min() < 0.05


def test_sweep_compare_and_resume(tmp_path, capsys):
    out = tmp_path / "sweep_out"
    args = [
        "sweep", "--config", str(CONFIG_DIR / "quick.json"), "--out", str(out)
    ] + SMALL
    assert main(args) == EXIT_OK
    capsys.readouterr()
    summary = (out / "summary.csv").read_text().splitlines()
    assert summary[0] == "snr_db,method,hit_rate,rmse,n_common"
    assert len(summary) == 1 + 2 * 3  # two SNR points, three methods
    first_trials = (out / "trials.csv").read_bytes()

    assert main(["compare", "--out", str(out)]) == EXIT_OK
    table = capsys.readouterr().out
    assert "mlas" in table and "soft-fusion" in table

    # resuming over a complete log must reproduce it byte for byte
    assert main(args + ["--resume"]) == EXIT_OK
    capsys.readouterr()
    assert (out / "trials.csv").read_bytes() == first_trials


def test_sweep_seed_and_trials_flags(tmp_path, capsys):
    out = tmp_path / "seeded"
    code = main(
        ["sweep", "--config", str(CONFIG_DIR / "quick.json"), "--out", str(out),
         "--seed", "123", "--trials", "1", "--set", "snr_grid_db=[0.0]"] + SMALL
    )
    assert code == EXIT_OK
    capsys.readouterr()
    resolved = (out / "config.json").read_text()
    assert '"master_seed": 123' in resolved
    assert '"num_trials": 1' in resolved
    trials = (out / "trials.csv").read_text().splitlines()
    assert len(trials) == 1 + 3 * 2  # three methods, two targets, one trial


def test_compare_missing_summary_exits_runtime(tmp_path, capsys):
    code = main(["compare", "--out", str(tmp_path / "nothing")])
    assert code == EXIT_RUNTIME
    assert "summary.csv" in capsys.readouterr().err


def test_compare_malformed_summary_names_line(tmp_path, capsys):
    out = tmp_path / "bad"
    out.mkdir()
    (out / "summary.csv").write_text(
        "snr_db,method,hit_rate,rmse,n_common\n0.0,mlas,almost,nan,0\n"
    )
    code = main(["compare", "--out", str(out)])
    assert code == EXIT_RUNTIME
    assert "line 2" in capsys.readouterr().err

    (out / "summary.csv").write_text("who,is,this\n")
    code = main(["compare", "--out", str(out)])
    assert code == EXIT_RUNTIME
    assert "line 1" in capsys.readouterr().err
