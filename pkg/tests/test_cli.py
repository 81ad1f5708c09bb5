import csv
import json
import subprocess
import sys

import pytest

from ddbt import cli

from conftest import make_config


def write_cfg(tmp_path, **kw):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(make_config(**kw)))
    return p


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr().out.strip().splitlines()
    assert len(out) == 1, "stdout must be a single JSON line"
    return code, json.loads(out[0])


def read_rows(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


def test_oracle_subcommand(tmp_path, capsys):
    code, summary = run(capsys, "oracle", "--config", write_cfg(tmp_path), "--out", tmp_path / "o")
    assert code == 0
    rows = read_rows(tmp_path / "o" / "hsv_true.csv")
    assert rows[0] == ["index", "value"] and len(rows) == 7
    assert float(rows[1][1]) == pytest.approx(summary["hsv_true"][0])


def test_pipeline_report(tmp_path, capsys):
    out = tmp_path / "p"
    code, summary = run(capsys, "pipeline", "--config", write_cfg(tmp_path), "--out", out)
    assert code == 0 and summary["informative"] is True
    rep = json.loads((out / "report.json").read_text())
    assert rep["slater"] and rep["informative"] and rep["status"] == "ok"
    assert all(rep["consistency"].values())
    assert rep["seed"] == 63 and rep["config"]["noise"]["sigma"] == 0.01
    assert read_rows(out / "bounds.csv")[0] == ["sigma", "gamma", "gamma0", "actual_error", "ordinary_bt_error"]
    assert read_rows(out / "hsv.csv")[0] == ["index", "sigma", "value"]
    assert len(read_rows(out / "hsv.csv")) == 7
    assert set(rep["timings"]) >= {"simulate", "informativity", "bound_apriori", "bound_aposteriori"}


def test_pipeline_is_deterministic(tmp_path, capsys):
    cfg = write_cfg(tmp_path, sigma=0.005)
    for d in ("a", "b"):
        assert run(capsys, "pipeline", "--config", cfg, "--out", tmp_path / d)[0] == 0
    for name in ("hsv.csv", "bounds.csv", "hsv_true.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_overrides(tmp_path, capsys):
    code, summary = run(capsys, "simulate", "--config", write_cfg(tmp_path), "--out", tmp_path / "s",
                        "--seed", 5, "--sigma", 0.002)
    assert code == 0 and summary["seed"] == 5 and summary["sigma"] == 0.002
    for name in ("U_minus.csv", "X.csv", "Y_minus.csv", "Phi11.csv", "Phi12.csv", "Phi22.csv"):
        assert (tmp_path / "s" / name).exists()


def test_invalid_config(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"system": "builtin:cart_double_pendulum"}))
    code, summary = run(capsys, "pipeline", "--config", p, "--out", tmp_path / "x")
    assert code == 1 and summary["status"] == "config_error"
    code, _ = run(capsys, "pipeline", "--config", tmp_path / "missing.json", "--out", tmp_path / "x")
    assert code == 1


def test_bad_sweep(tmp_path, capsys):
    code, _ = run(capsys, "pipeline", "--config", write_cfg(tmp_path), "--out", tmp_path / "x", "--sweep", "L=3")
    assert code == 1


def test_precondition_failure(tmp_path, capsys):
    cfg = write_cfg(tmp_path, L=5)
    code, summary = run(capsys, "build-qmi", "--config", cfg, "--out", tmp_path / "x")
    assert code == 2
    code, summary = run(capsys, "pipeline", "--config", cfg, "--out", tmp_path / "y")
    assert code == 2 and summary["status"] == "precondition_failed"


def test_infeasible_is_reported(tmp_path, capsys):
    code, summary = run(capsys, "pipeline", "--config", write_cfg(tmp_path, sigma=0.05, seed=0), "--out", tmp_path / "i")
    assert code == 3 and summary["status"] == "infeasible"
    rep = json.loads((tmp_path / "i" / "report.json").read_text())
    assert rep["informative"] is False and rep["best_margin"] <= 2e-6
    assert read_rows(tmp_path / "i" / "bounds.csv")[1][1] == "nan"


def test_multiplicity_or_order_precondition(tmp_path, capsys):
    code, _ = run(capsys, "reduce", "--config", write_cfg(tmp_path), "--out", tmp_path / "x", "--order", 6)
    assert code == 2


@pytest.mark.parametrize(
    "command,artifact",
    [
        ("build-qmi", "N.csv"),
        ("check-informativity", "certificate.json"),
        ("balance", "T.csv"),
        ("reduce", "rom_A.csv"),
        ("bound-apriori", "apriori.json"),
        ("bound-aposteriori", "aposteriori.json"),
    ],
)
def test_stage_subcommands(tmp_path, capsys, command, artifact):
    code, summary = run(capsys, command, "--config", write_cfg(tmp_path), "--out", tmp_path / "st")
    assert code == 0 and summary["command"] == command
    assert (tmp_path / "st" / artifact).exists()


def test_sweep_orders_by_sigma(tmp_path, capsys):
    out = tmp_path / "sw"
    code, summary = run(capsys, "pipeline", "--config", write_cfg(tmp_path), "--out", out,
                        "--sweep", "sigma=0.01,0.002")
    assert code == 0 and summary["sweep"] == [0.002, 0.01]
    rows = read_rows(out / "bounds.csv")[1:]
    assert [float(r[0]) for r in rows] == [0.002, 0.01]
    gammas = [float(r[1]) for r in rows]
    assert gammas[0] < gammas[1]


def test_parallel_sweep_matches_serial(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    args = ["pipeline", "--config", cfg, "--sweep", "sigma=0.002,0.005"]
    assert run(capsys, *args, "--out", tmp_path / "s1")[0] == 0
    assert run(capsys, *args, "--out", tmp_path / "s2", "--jobs", 2)[0] == 0
    for name in ("hsv.csv", "bounds.csv"):
        assert (tmp_path / "s1" / name).read_bytes() == (tmp_path / "s2" / name).read_bytes()


def test_noise_free_pipeline(tmp_path, capsys):
    out = tmp_path / "z"
    code, _ = run(capsys, "pipeline", "--config", write_cfg(tmp_path, sigma=0.0), "--out", out)
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    actual = rep["actual_error_center_rom"]
    assert actual <= rep["classical_bound"]
    assert actual <= rep["gamma0"] <= 1.1 * actual


def test_ingested_trajectory(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    assert run(capsys, "simulate", "--config", cfg, "--out", tmp_path / "traj")[0] == 0
    assert run(capsys, "pipeline", "--config", cfg, "--out", tmp_path / "a")[0] == 0
    c2 = json.loads(cfg.read_text())
    c2["data_dir"] = str(tmp_path / "traj")
    p2 = tmp_path / "cfg2.json"
    p2.write_text(json.dumps(c2))
    assert run(capsys, "pipeline", "--config", p2, "--out", tmp_path / "b")[0] == 0
    assert (tmp_path / "a" / "hsv.csv").read_bytes() == (tmp_path / "b" / "hsv.csv").read_bytes()


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "ddbt", "oracle", "--config", str(write_cfg(tmp_path)), "--out", str(tmp_path / "m")],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["command"] == "oracle"
