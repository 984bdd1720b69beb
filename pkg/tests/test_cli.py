import os

import pytest
import yaml

from bisense.channel import load_samples
from bisense.cli import main
from bisense.waveform import FrameConfig


def mini_yaml(path, **overrides):
    raw = {
        "frame": {
            "carrier_freq_hz": 30.0e9,
            "subcarrier_spacing_hz": 200.0e3,
            "cp_duration_s": 1.25e-6,
            "n_subcarriers": 16,
            "n_symbols": 12,
        },
        "prior": {
            "x_min": -100.0, "x_max": 100.0,
            "y_min": -150.0, "y_max": -50.0,
            "speed_min_mps": 0.0, "speed_max_mps": 30.0,
            "heading_min_deg": -5.0, "heading_max_deg": 5.0,
            "p_tx": [-150.0, 0.0], "p_rx": [150.0, 0.0],
        },
        "patterns": [[2, 4]],
        "trials": 4,
        "calib_trials": 60,
        "p_fa": 0.2,
        "snr_grid_db": [25.0],
        "max_bistatic_range_m": 800.0,
        "n_doppler_bins": 128,
        "n_delay_bins": 128,
        "work_dtype": None,
        "seed": 424242,
        "out_dir": os.path.join(os.path.dirname(str(path)), "results"),
    }
    raw.update(overrides)
    with open(path, "w") as fh:
        yaml.safe_dump(raw, fh)
    return str(path)


def test_sweep_snr_writes_csv(tmp_path, capsys):
    cfg = mini_yaml(tmp_path / "mini.yaml")
    out = tmp_path / "run_a"
    assert main(["sweep-snr", "--config", cfg, "--out", str(out)]) == 0
    csv_path = out / "rmse_vs_snr.csv"
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "x,pattern,n_trials,n_detected,rmse_range_m,rmse_velocity_mps"
    assert len(lines) == 2
    assert lines[1].startswith("25.0,2x4,4,")
    assert f"wrote {csv_path}" in capsys.readouterr().out

    # byte-identical rerun through the CLI with the same seed
    again = tmp_path / "run_b"
    assert main(["sweep-snr", "--config", cfg, "--out", str(again)]) == 0
    assert (again / "rmse_vs_snr.csv").read_bytes() == csv_path.read_bytes()


def test_trials_and_seed_overrides(tmp_path):
    cfg = mini_yaml(tmp_path / "mini.yaml")
    out = tmp_path / "results"
    assert main(["sweep-snr", "--config", cfg, "--trials", "2", "--seed", "7"]) == 0
    row = (out / "rmse_vs_snr.csv").read_text().splitlines()[1]
    assert row.startswith("25.0,2x4,2,")


def test_calibrate_prints_and_reuses_cache(tmp_path, capsys):
    cfg = mini_yaml(tmp_path / "mini.yaml")
    assert main(["calibrate", "--config", cfg]) == 0
    first = capsys.readouterr().out.strip()
    assert first.startswith("pattern=2x4 p_fa=0.2 trials=60 kappa=")
    cache = [
        name for name in os.listdir(tmp_path / "results")
        if name.startswith("calibration_2x4_")
    ]
    assert len(cache) == 1
    assert main(["calibrate", "--config", cfg]) == 0
    assert capsys.readouterr().out.strip() == first


def test_aoa_study_csv(tmp_path, capsys):
    cfg = mini_yaml(
        tmp_path / "mini.yaml",
        snr_grid_db=[60.0], aoa_errors_deg=[0.0, 20.0], trials=3,
    )
    assert main(["aoa-study", "--config", cfg]) == 0
    lines = (tmp_path / "results" / "aoa_mismatch.csv").read_text().splitlines()
    assert lines[0] == "snr_db,aoa_error_deg,pattern,n_trials,n_detected,rmse_velocity_mps"
    assert len(lines) == 3


def test_sweep_ratio_csv(tmp_path):
    cfg = mini_yaml(
        tmp_path / "mini.yaml",
        snr_grid_db=[], ratio_grid_db=[-10.0], trials=3,
        prior={
            "x_min": -100.0, "x_max": 100.0,
            "y_min": -150.0, "y_max": -50.0,
            "speed_min_mps": 0.0, "speed_max_mps": 30.0,
            "heading_min_deg": -5.0, "heading_max_deg": 5.0,
            "p_tx": [-150.0, 0.0], "p_rx": [150.0, 0.0],
            "los_blocked": False,
        },
    )
    assert main(["sweep-ratio", "--config", cfg]) == 0
    lines = (tmp_path / "results" / "rmse_vs_ratio.csv").read_text().splitlines()
    assert len(lines) == 2
    assert lines[1].startswith("-10.0,2x4,3,")


def test_oracle_check_csv(tmp_path):
    cfg = mini_yaml(tmp_path / "mini.yaml", trials=2)
    assert main(["oracle-check", "--config", cfg]) == 0
    lines = (tmp_path / "results" / "oracle_check.csv").read_text().splitlines()
    assert lines[0].startswith("scene_seed,pipeline_delay_s,")
    assert len(lines) == 3


def test_dump_samples_roundtrip(tmp_path, capsys):
    cfg = mini_yaml(tmp_path / "mini.yaml")
    assert main(["dump-samples", "--config", cfg]) == 0
    out = tmp_path / "results" / "samples_2x4.iq64"
    assert out.exists() and (tmp_path / "results" / "samples_2x4.iq64.meta.txt").exists()
    mini = FrameConfig(30.0e9, 200.0e3, 1.25e-6, 16, 12)
    stream = load_samples(str(out), mini)
    assert stream.samples.size == mini.n_samples_frame
    assert "truth: bistatic_range_m=" in capsys.readouterr().out


def test_error_line_on_bad_config(tmp_path, capsys):
    missing = str(tmp_path / "nope.yaml")
    assert main(["sweep-snr", "--config", missing]) == 1
    err = capsys.readouterr().err
    assert err.startswith("error: ")

    empty_grid = mini_yaml(tmp_path / "empty.yaml", snr_grid_db=[])
    assert main(["sweep-snr", "--config", empty_grid]) == 1
    assert "empty snr_grid_db" in capsys.readouterr().err


def test_bad_flag_values_exit_nonzero(tmp_path):
    cfg = mini_yaml(tmp_path / "mini.yaml")
    with pytest.raises(SystemExit) as info:
        main(["sweep-snr", "--config", cfg, "--seed", "-1"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        main(["sweep-snr", "--config", cfg, "--trials", "0"])
    assert info.value.code == 2
