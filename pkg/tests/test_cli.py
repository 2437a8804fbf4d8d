import json
import os

import pytest

from bubbletower.cli import main

from conftest import CACHE


def _run(tmp_path, *args):
    return main(list(args) + ["--outdir", str(tmp_path), "--cache-dir", CACHE, "--stamp", "s"])


def test_constants_n7_k3(tmp_path, capsys):
    assert _run(tmp_path, "constants", "--n", "7", "--k", "3") == 0
    doc = json.loads((tmp_path / "constants" / "s" / "constants.json").read_text())
    assert doc["alpha"] == ["0", "2", "12"]
    assert doc["N_k"] == 17
    assert doc["provenance"]["c"] == "quadrature"
    assert "lambda0" in capsys.readouterr().out
    assert (tmp_path / "constants" / "s" / "manifest.ini").exists()


def test_constants_n8(tmp_path):
    assert _run(tmp_path, "constants", "--n", "8", "--k", "2") == 0
    doc = json.loads((tmp_path / "constants" / "s" / "constants.json").read_text())
    assert doc["alpha"] == ["0", "1"]


def test_usage_errors(tmp_path, capsys):
    assert _run(tmp_path, "constants", "--n", "6") == 2
    assert main(["frobnicate"]) == 2
    assert _run(tmp_path, "constants", "--k", "0") == 2
    assert _run(tmp_path, "constants", "--config", str(tmp_path / "missing.ini")) == 2
    assert _run(tmp_path, "barriers", "--cases", "nonsense") == 2


def test_no_output_flag(tmp_path):
    assert main(["constants", "--outdir", str(tmp_path), "--cache-dir", CACHE, "--no-output"]) == 0
    assert not os.listdir(tmp_path)


def test_evolve_manifest_round_trip(tmp_path):
    args = ["evolve", "--k", "1", "--t-end", "1000", "--ell", "0.3"]
    assert _run(tmp_path, *args) == 0
    first = tmp_path / "evolve" / "s"
    summary = json.loads((first / "summary.json").read_text())
    assert summary["classification"] in ("blowup", "collapse", "window-complete", "step-limit")
    assert summary["ell"] == [0.3]
    assert main(["evolve", "--config", str(first / "manifest.ini"), "--stamp", "again"]) == 0
    again = tmp_path / "evolve" / "again"
    assert (again / "run.csv").read_bytes() == (first / "run.csv").read_bytes()
    assert (again / "run.csv").read_text().splitlines()[0] == "t,u0,mu_hat_1,J,sup_u,dt"


def test_evolve_wrong_ell_count(tmp_path):
    assert _run(tmp_path, "evolve", "--k", "2", "--ell", "0.1") == 2


def test_evolve_shoot_k1(tmp_path):
    assert _run(tmp_path, "evolve", "--k", "1", "--mode", "shoot", "--budget", "6",
                "--t-end", "1000") == 0
    table = (tmp_path / "evolve" / "s" / "shooting_table.csv").read_text().splitlines()
    assert table[0] == "ell,termination,t_last" and len(table) == 7


def test_barriers_zero_source(tmp_path):
    assert _run(tmp_path, "barriers", "--cases", "zero_source") == 0
    doc = json.loads((tmp_path / "barriers" / "s" / "barriers.json").read_text())
    assert doc[0]["case"] == "zero_source" and doc[0]["fitted_C"] == 0.0 and doc[0]["passed"]


def test_build_ansatz_k1(tmp_path):
    assert _run(tmp_path, "build-ansatz", "--k", "1", "--times", "100,1000") == 0
    d = tmp_path / "build-ansatz" / "s"
    assert (d / "ansatz_summary.csv").exists()
    assert len(list(d.glob("snapshot_t*.csv"))) == 2
