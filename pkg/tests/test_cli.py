import csv
import json
import math
import subprocess
import sys

import pytest

from svropf.cli import COMPARE_COLUMNS, run

from conftest import FEEDERS, dump, two_bus_doc

TINY = str(FEEDERS / "tiny4_wye.json")


def call(capsys, *argv):
    code = run(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_solve_report_and_artifacts(capsys, tmp_path):
    csv_path, npz = tmp_path / "v.csv", tmp_path / "sol.npz"
    code, out, _ = call(capsys, "solve", "--feeder", TINY, "--voltages-csv", str(csv_path),
                        "--save-solution", str(npz))
    assert code == 0
    rep = json.loads(out)
    assert rep["objective_relax"] <= rep["objective_feasible"] + 1e-6
    assert 0 <= rep["gap_pct"] <= 1.0
    assert "quantized" in rep and rep["feeder"] == "tiny4_wye"
    rows = list(csv.DictReader(csv_path.open()))
    assert rows[0].keys() == {"bus", "name", "phase", "magnitude", "angle_deg"}
    assert all(0.9 - 1e-6 <= float(r["magnitude"]) <= 1.1 + 1e-6 for r in rows)

    code, out, _ = call(capsys, "check", "--feeder", TINY, "--solution", str(npz))
    assert code == 0
    res = json.loads(out)
    assert res["eig_ratio_avg"] < 1e-3 and res["psd"] < 1e-6


def test_loadflow_at_taps(capsys):
    code, out, _ = call(capsys, "loadflow", "--feeder", TINY, "--taps", "4")
    assert code == 0
    rep = json.loads(out)
    assert list(rep["taps"].values()) == [[4, 4, 4]]
    assert rep["metrics"]["power_import"] == pytest.approx(rep["objective_feasible"])


def test_compare_schema(capsys, tmp_path):
    out_path = tmp_path / "cmp.csv"
    code, _, _ = call(capsys, "compare", "--feeder", TINY, "--modes", "mbopf", "cgopf_style", "ciopf_style",
                      "--svr-types", "wye", "closed_delta", "--out", str(out_path))
    assert code == 0
    rows = list(csv.DictReader(out_path.open()))
    assert list(rows[0].keys()) == COMPARE_COLUMNS
    # the baseline modes only model wye units, so their delta rows are skipped
    assert {(r["svr_type"], r["mode"]) for r in rows} == {
        ("wye", "mbopf"), ("wye", "cgopf_style"), ("wye", "ciopf_style"), ("closed_delta", "mbopf")}
    for r in rows:
        for key in ("c", "c_breve", "gap_pct", "vmin", "vmax", "time_s"):
            assert math.isfinite(float(r[key]))


def test_oracle_is_above_relaxation(capsys):
    code, out, _ = call(capsys, "solve", "--feeder", TINY)
    c = json.loads(out)["objective_relax"]
    code, out, _ = call(capsys, "oracle", "--feeder", TINY, "--tap-step", "4")
    assert code == 0
    rep = json.loads(out)
    assert rep["evaluated"] == 9 and rep["feasible"] > 0
    assert rep["best_cost"] >= c - 1e-6


def test_input_errors_exit_1(capsys, tmp_path):
    code, _, err = call(capsys, "solve", "--feeder", str(tmp_path / "missing.json"))
    assert code == 1 and json.loads(err)["error"] == "FileNotFoundError"
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    code, _, err = call(capsys, "solve", "--feeder", str(bad))
    assert code == 1 and "error" in json.loads(err)
    code, _, err = call(capsys, "solve", "--feeder", TINY, "--delta", "45")
    assert code == 1 and json.loads(err)["error"] == "ValueError"
    code, _, err = call(capsys, "solve", "--feeder", TINY, "--mode", "chordal")
    # argparse prints its usage first; the JSON record is the last line
    assert code == 1 and json.loads(err.strip().splitlines()[-1])["exit_code"] == 1


def test_solver_failure_exit_2(capsys, tmp_path):
    # no regulator, so a loaded bus cannot sit above the slack voltage
    doc = two_bus_doc(load=(0.5, 0.5, 0.5))
    doc["limits"] = {"v_min": 1.05, "v_max": 1.1}
    path = tmp_path / "tight.json"
    path.write_text(dump(doc))
    code, _, err = call(capsys, "solve", "--feeder", str(path))
    assert code == 2
    assert json.loads(err)["error"] == "SolverFailure"


def test_loadflow_failure_exit_3(capsys, tmp_path):
    path = tmp_path / "heavy.json"
    path.write_text(dump(two_bus_doc(load=(40, 40, 40))))
    code, _, err = call(capsys, "loadflow", "--feeder", str(path))
    assert code == 3 and json.loads(err)["exit_code"] == 3


def test_backend_from_env_and_config(capsys, monkeypatch, tmp_path):
    monkeypatch.setenv("SVROPF_SOLVER", "cvxpy")
    code, out, _ = call(capsys, "solve", "--feeder", TINY)
    assert code == 0 and json.loads(out)["backend"] == "cvxpy"
    code, out, _ = call(capsys, "solve", "--feeder", TINY, "--backend", "clarabel")
    assert json.loads(out)["backend"] == "clarabel"
    monkeypatch.delenv("SVROPF_SOLVER")
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"solver": {"backend": "cvxpy"}}))
    code, out, _ = call(capsys, "solve", "--feeder", TINY, "--config", str(cfg))
    assert json.loads(out)["backend"] == "cvxpy"


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "svropf", "loadflow", "--feeder", TINY],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["feasible"] in (True, False)
