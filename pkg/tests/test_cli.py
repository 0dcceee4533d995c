import csv
import hashlib
import json
import subprocess
import sys

import pytest

from consensus_dyn.cli import (
    EXIT_BLOWUP,
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_VERIFY,
    load_run_config,
    main,
)


def write_config(path, payload):
    path.write_text(json.dumps(payload), encoding="utf-8")
    return str(path)


def opt_config(**overrides):
    cfg = {
        "seed": 11,
        "objective": {"id": "quadratic", "dim": 2},
        "dynamics": {"mode": "cbo", "lambda": 1.0, "beta": 30.0, "dt": 0.05,
                     "t_final": 1.0, "j": 16,
                     "init": {"kind": "uniform_box", "lo": -3.0, "hi": 3.0}},
    }
    cfg.update(overrides)
    return cfg


def sample_config(**overrides):
    cfg = {
        "seed": 3,
        "objective": {"id": "quadratic-shifted", "dim": 2, "m": [1.0, 2.0],
                      "a": [2.0, 4.0]},
        "dynamics": {"mode": "cbs", "beta": 1.0, "dt": 0.05, "t_final": 1.0,
                     "j": 64, "record_stride": 4},
    }
    cfg.update(overrides)
    return cfg


def meanfield_config(**overrides):
    cfg = {
        "seed": 21,
        "objective": {"id": "quadratic", "dim": 1},
        "dynamics": {"mode": "cbs", "lambda": 0.5, "beta": 1.0, "dt": 0.01,
                     "t_final": 0.1},
        "meanfield": {"j_list": [8, 16, 32], "reps": 10,
                      "phi": {"center": "initial-mean", "radius": 3.0}},
    }
    cfg.update(overrides)
    return cfg


def read_rows(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


# --- config validation ----------------------------------------------------


def test_unknown_top_level_key(tmp_path):
    cfg = write_config(tmp_path / "c.json", opt_config(bogus=1))
    assert main(["optimize", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_unknown_nested_key(tmp_path):
    payload = opt_config()
    payload["dynamics"]["typo"] = True
    cfg = write_config(tmp_path / "c.json", payload)
    assert main(["optimize", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_missing_required_block(tmp_path):
    payload = opt_config()
    del payload["dynamics"]
    cfg = write_config(tmp_path / "c.json", payload)
    assert main(["optimize", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_invalid_json_and_missing_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json", encoding="utf-8")
    assert main(["optimize", "--config", str(bad)]) == EXIT_CONFIG
    assert main(["optimize", "--config", str(tmp_path / "absent.json")]) == EXIT_CONFIG


def test_optimize_rejects_free_lambda(tmp_path):
    payload = opt_config()
    payload["dynamics"]["lambda"] = 2.0
    cfg = write_config(tmp_path / "c.json", payload)
    assert main(["optimize", "--config", cfg]) == EXIT_CONFIG


def test_sample_lambda_is_tied_to_beta(tmp_path):
    payload = sample_config()
    payload["dynamics"]["lambda"] = 0.4
    cfg = write_config(tmp_path / "c.json", payload)
    assert main(["sample", "--config", cfg]) == EXIT_CONFIG
    # the correct tied value is accepted
    payload["dynamics"]["lambda"] = 0.5
    cfg = write_config(tmp_path / "c2.json", payload)
    assert main(["sample", "--config", cfg,
                 "--out", str(tmp_path / "o")]) == EXIT_OK


def test_sample_requires_cbs(tmp_path):
    payload = sample_config()
    payload["dynamics"]["mode"] = "cbo"
    cfg = write_config(tmp_path / "c.json", payload)
    assert main(["sample", "--config", cfg]) == EXIT_CONFIG


def test_meanfield_validates_lists(tmp_path):
    payload = meanfield_config()
    payload["meanfield"]["j_list"] = [32, 16, 8]
    cfg = write_config(tmp_path / "c.json", payload)
    assert main(["meanfield", "--config", cfg]) == EXIT_CONFIG

    payload = meanfield_config()
    payload["meanfield"]["reps"] = 5
    cfg = write_config(tmp_path / "c2.json", payload)
    assert main(["meanfield", "--config", cfg]) == EXIT_CONFIG

    payload = meanfield_config()
    payload["meanfield"]["rep_seeds"] = [7] * 10
    cfg = write_config(tmp_path / "c3.json", payload)
    assert main(["meanfield", "--config", cfg]) == EXIT_CONFIG

    payload = meanfield_config()
    payload["dynamics"]["j"] = 8
    cfg = write_config(tmp_path / "c4.json", payload)
    assert main(["meanfield", "--config", cfg]) == EXIT_CONFIG


def test_verify_rejects_unknown_or_empty_checks(tmp_path):
    cfg = write_config(tmp_path / "c.json",
                       {"verify": {"checks": ["nonsense"]}})
    assert main(["verify", "--config", cfg]) == EXIT_CONFIG
    cfg = write_config(tmp_path / "c2.json", {"verify": {"checks": []}})
    assert main(["verify", "--config", cfg]) == EXIT_CONFIG


def test_negative_seed_rejected(tmp_path):
    cfg = write_config(tmp_path / "c.json", opt_config(seed=-1))
    assert main(["optimize", "--config", cfg]) == EXIT_CONFIG


def test_workers_env_parsing(tmp_path, monkeypatch):
    monkeypatch.setenv("CONSENSUS_DYN_WORKERS", "not-a-number")
    cfg = write_config(tmp_path / "c.json", meanfield_config())
    assert main(["meanfield", "--config", cfg]) == EXIT_CONFIG
    monkeypatch.setenv("CONSENSUS_DYN_WORKERS", "0")
    assert main(["meanfield", "--config", cfg]) == EXIT_CONFIG


def test_load_run_config_round_trip(tmp_path):
    cfg_path = write_config(tmp_path / "c.json", opt_config())
    rc = load_run_config("optimize", cfg_path, str(tmp_path / "o"), None, None)
    assert rc.subcommand == "optimize"
    assert rc.seed == 11
    assert rc.workers == 1
    assert rc.dynamics.j == 16
    text = json.dumps(rc.raw, sort_keys=True, separators=(",", ":")).encode()
    assert rc.config_hash == hashlib.sha256(text).hexdigest()


# --- optimize -------------------------------------------------------------


def test_optimize_end_to_end(tmp_path):
    cfg = write_config(tmp_path / "c.json", opt_config())
    out = tmp_path / "run"
    assert main(["optimize", "--config", cfg, "--out", str(out)]) == EXIT_OK
    rows = read_rows(out / "optimize_trace.csv")
    steps = [r for r in rows if r["row"] == "step"]
    summary = [r for r in rows if r["row"] == "summary"]
    assert len(summary) == 1
    assert len(steps) >= 2
    assert float(steps[0]["t"]) == 0.0
    assert float(summary[0]["t"]) == 1.0
    assert summary[0]["success"] in ("0", "1")
    assert summary[0]["mode"] == "cbo"
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["subcommand"] == "optimize"
    assert "optimize_trace.csv" in manifest["outputs"]


def test_optimize_reruns_are_byte_identical(tmp_path):
    cfg = write_config(tmp_path / "c.json", opt_config())
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["optimize", "--config", cfg, "--out", str(a)]) == EXIT_OK
    assert main(["optimize", "--config", cfg, "--out", str(b)]) == EXIT_OK
    assert (a / "optimize_trace.csv").read_bytes() == \
        (b / "optimize_trace.csv").read_bytes()


def test_optimize_seed_override(tmp_path):
    cfg = write_config(tmp_path / "c.json", opt_config())
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["optimize", "--config", cfg, "--out", str(a)]) == EXIT_OK
    assert main(["optimize", "--config", cfg, "--out", str(b),
                 "--seed", "99"]) == EXIT_OK
    assert (a / "optimize_trace.csv").read_bytes() != \
        (b / "optimize_trace.csv").read_bytes()


def test_blow_up_exit_code(tmp_path):
    payload = meanfield_config()
    payload["dynamics"]["mode"] = "cbo"
    payload["dynamics"]["lambda"] = 1e-8
    payload["dynamics"]["dt"] = 0.5
    payload["dynamics"]["t_final"] = 10.0
    cfg = write_config(tmp_path / "c.json", payload)
    assert main(["meanfield", "--config", cfg,
                 "--out", str(tmp_path / "o")]) == EXIT_BLOWUP


# --- sample ---------------------------------------------------------------


def test_sample_end_to_end_with_reference_columns(tmp_path):
    cfg = write_config(tmp_path / "c.json", sample_config())
    out = tmp_path / "run"
    assert main(["sample", "--config", cfg, "--out", str(out)]) == EXIT_OK
    rows = read_rows(out / "sample_trace.csv")
    summary = [r for r in rows if r["row"] == "summary"][0]
    assert set(summary) >= {"mean_0", "mean_1", "cov_0_0", "cov_1_1",
                            "mean_abs_err_max", "cov_rel_fro_err"}
    assert float(summary["mean_abs_err_max"]) >= 0.0
    assert float(summary["cov_rel_fro_err"]) >= 0.0
    steps = [r for r in rows if r["row"] == "step"]
    assert steps[0]["mean_abs_err_max"] == ""


def test_sample_without_gaussian_reference_drops_columns(tmp_path):
    payload = {
        "seed": 5,
        "objective": {"id": "rastrigin", "dim": 2},
        "dynamics": {"mode": "cbs", "beta": 1.0, "dt": 0.05, "t_final": 0.5,
                     "j": 32},
    }
    cfg = write_config(tmp_path / "c.json", payload)
    out = tmp_path / "run"
    assert main(["sample", "--config", cfg, "--out", str(out)]) == EXIT_OK
    rows = read_rows(out / "sample_trace.csv")
    assert "mean_abs_err_max" not in rows[0]
    assert "cov_rel_fro_err" not in rows[0]


# --- meanfield ------------------------------------------------------------


def test_meanfield_end_to_end(tmp_path):
    cfg = write_config(tmp_path / "c.json", meanfield_config())
    out = tmp_path / "run"
    assert main(["meanfield", "--config", cfg, "--out", str(out)]) == EXIT_OK
    rows = read_rows(out / "meanfield_residuals.csv")
    assert len(rows) == 3 * 10
    seeds = {r["rep_seed"] for r in rows}
    assert len(seeds) == 30
    report = json.loads((out / "meanfield_report.json").read_text())
    assert report["j_values"] == [8, 16, 32]
    assert len(report["mean_square_residual"]) == 3
    assert report["slope_ci95"][0] <= report["slope"] <= report["slope_ci95"][1]
    assert len(report["w2_pairs"]) == 2
    w2_rows = read_rows(out / "meanfield_w2.csv")
    assert len(w2_rows) == 2 * 10
    assert all(float(r["w2"]) >= 0.0 for r in w2_rows)


def test_meanfield_workers_do_not_change_bytes(tmp_path):
    cfg = write_config(tmp_path / "c.json", meanfield_config())
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["meanfield", "--config", cfg, "--out", str(a)]) == EXIT_OK
    assert main(["meanfield", "--config", cfg, "--out", str(b),
                 "--workers", "3"]) == EXIT_OK
    for name in ("meanfield_residuals.csv", "meanfield_w2.csv",
                 "meanfield_report.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_meanfield_explicit_rep_seeds(tmp_path):
    payload = meanfield_config()
    payload["meanfield"]["rep_seeds"] = list(range(100, 110))
    cfg = write_config(tmp_path / "c.json", payload)
    out = tmp_path / "run"
    assert main(["meanfield", "--config", cfg, "--out", str(out)]) == EXIT_OK
    rows = read_rows(out / "meanfield_residuals.csv")
    assert len({r["rep_seed"] for r in rows}) == 30


# --- verify ---------------------------------------------------------------


def test_verify_subcommand_passes(tmp_path):
    cfg = write_config(tmp_path / "c.json",
                       {"seed": 5, "verify": {"checks": ["powers-stormer",
                                                         "stability"]}})
    out = tmp_path / "run"
    assert main(["verify", "--config", cfg, "--out", str(out)]) == EXIT_OK
    rows = read_rows(out / "verify_results.csv")
    assert [r["family"] for r in rows] == ["powers-stormer", "stability"]
    assert all(r["failures"] == "0" for r in rows)


def test_verify_corruption_exits_nonzero(tmp_path):
    cfg = write_config(tmp_path / "c.json",
                       {"seed": 5, "verify": {"checks": ["moment-bounds"],
                                              "corrupt_certificate": True}})
    out = tmp_path / "run"
    assert main(["verify", "--config", cfg, "--out", str(out)]) == EXIT_VERIFY
    rows = read_rows(out / "verify_results.csv")
    assert int(rows[0]["failures"]) > 0


def test_verify_defaults_to_all_families(tmp_path):
    cfg = write_config(tmp_path / "c.json", {"seed": 1})
    out = tmp_path / "run"
    assert main(["verify", "--config", cfg, "--out", str(out)]) == EXIT_OK
    rows = read_rows(out / "verify_results.csv")
    assert len(rows) == 8


# --- render ---------------------------------------------------------------


def test_render_optimize_and_meanfield(tmp_path):
    cfg = write_config(tmp_path / "c.json", opt_config())
    out = tmp_path / "run"
    assert main(["optimize", "--config", cfg, "--out", str(out)]) == EXIT_OK
    assert main(["render", "--config", str(out)]) == EXIT_OK
    dat = out / "optimize_trace.dat"
    assert dat.is_file()
    lines = dat.read_text().splitlines()
    csv_lines = (out / "optimize_trace.csv").read_text().splitlines()
    assert lines[0].startswith("# ")
    assert len(lines) == len(csv_lines)
    png = out / "optimize_trace.png"
    assert png.is_file() and png.stat().st_size > 1000

    mcfg = write_config(tmp_path / "m.json", meanfield_config())
    mout = tmp_path / "mrun"
    assert main(["meanfield", "--config", mcfg, "--out", str(mout)]) == EXIT_OK
    assert main(["render", "--config", str(mout / "manifest.json"),
                 "--out", str(mout)]) == EXIT_OK
    assert (mout / "meanfield_scaling.png").stat().st_size > 1000
    assert (mout / "meanfield_w2.png").is_file()
    assert (mout / "meanfield_residuals.dat").is_file()


def test_render_missing_manifest_is_config_error(tmp_path):
    assert main(["render", "--config", str(tmp_path)]) == EXIT_CONFIG


# --- console script -------------------------------------------------------


def test_console_script_help():
    proc = subprocess.run([sys.executable, "-m", "consensus_dyn.cli"],
                          capture_output=True, text=True)
    assert proc.returncode == EXIT_CONFIG
    proc = subprocess.run(["consensus-dyn", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    for name in ("optimize", "sample", "meanfield", "verify", "render"):
        assert name in proc.stdout
