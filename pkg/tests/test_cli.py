"""The ``oblimatch`` command line: outputs, files and exit codes."""

import csv
import io
import json
import subprocess
import sys

import pytest

from oblimatch.bench import double_bomb_edge_count
from oblimatch.cli import EXIT_OK, EXIT_USAGE, EXIT_VERIFY, OUT_DIR_ENV, main
from oblimatch.factor_lp import build_bipartite_lp, from_lp_text


def _rows(text):
    return list(csv.reader(io.StringIO(text)))


@pytest.fixture
def four_vertex_file(tmp_path):
    path = tmp_path / "four.json"
    assert main(["gen", "four-vertex", "--out", str(path)]) == EXIT_OK
    return path


def test_gen_writes_instance_and_reports_edge_count(tmp_path, capsys):
    path = tmp_path / "db.inst"
    code = main(["gen", "double-bomb", "--n1", "10", "--n2", "15", "--cross-block", "10", "--out", str(path)])
    assert code == EXIT_OK
    doc = json.loads(path.read_text())
    assert doc["n"] == 4 * 15 + 2 * 10
    assert len(doc["edges"]) == double_bomb_edge_count(10, 15, 10) == 10 + 30 + 300 + 100
    summary = json.loads(capsys.readouterr().out)
    assert summary["edges"] == len(doc["edges"])


def test_gen_to_stdout_and_config_echo(capsys):
    assert main(["gen", "dyer-frieze", "--n", "4", "--seed", "5"]) == EXIT_OK
    out, err = capsys.readouterr()
    doc = json.loads(out)
    assert doc["decision_order"] == list(range(8))
    config_line = next(line for line in err.splitlines() if line.startswith("# config "))
    config = json.loads(config_line[len("# config "):])
    assert config["seed"] == 5 and config["family"] == "dyer-frieze"


def test_out_dir_env_applies_to_relative_paths(tmp_path, monkeypatch):
    monkeypatch.setenv(OUT_DIR_ENV, str(tmp_path / "results"))
    assert main(["gen", "four-vertex", "--out", "inst/four.json"]) == EXIT_OK
    assert (tmp_path / "results" / "inst" / "four.json").exists()


def test_simulate_csv_and_thresholds(four_vertex_file, capsys):
    args = ["simulate", "--inst", str(four_vertex_file), "--algo", "rdo", "--trials", "4000", "--seed", "7"]
    assert main(args) == EXIT_OK
    rows = _rows(capsys.readouterr().out)
    assert rows[0] == ["family", "params", "algorithm", "trials", "seed", "mean", "se", "min", "max"]
    mean, se = float(rows[1][5]), float(rows[1][6])
    assert abs(mean - 0.625) <= 4 * se
    # Same seed, same line.
    assert main(args) == EXIT_OK
    assert _rows(capsys.readouterr().out) == rows
    assert main(args + ["--assert-min", "0.6"]) == EXIT_OK
    assert main(args + ["--assert-max", "0.5"]) == EXIT_VERIFY
    assert main(args + ["--assert-min", "0.9"]) == EXIT_VERIFY


def test_simulate_json_and_threads(four_vertex_file, capsys):
    base = ["simulate", "--inst", str(four_vertex_file), "--trials", "600", "--format", "json"]
    assert main(base) == EXIT_OK
    single = json.loads(capsys.readouterr().out)
    assert main(base + ["--threads", "2"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out) == single
    assert single["opt"] == 2.0 and single["opt_source"] == "oracle"


def test_duals_checks_certificates(tmp_path, capsys):
    path = tmp_path / "w.json"
    assert main(["gen", "random-weighted", "--n", "7", "--p", "0.6", "--seed", "3", "--out", str(path)]) == EXIT_OK
    capsys.readouterr()
    assert main(["duals", "--inst", str(path), "--algo", "pg", "--trials", "30", "--format", "json"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["mode"] == "weighted" and doc["runs"] == 30
    assert doc["negative"] == doc["matched_low"] == doc["victim_low"] == 0


def test_lp_solves_exports_and_gates(tmp_path, capsys):
    lp_path = tmp_path / "b6.lp"
    args = ["lp", "--family", "bipartite", "--n", "6", "--export-lp", str(lp_path), "--soundness", "50"]
    assert main(args + ["--format", "json"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["status"] == "optimal" and doc["soundness"]["violations"] == 0
    names, *_ = from_lp_text(lp_path.read_text())
    assert names == build_bipartite_lp(6).names
    assert main(["lp", "--n", "6", "--assert-min", "0.99"]) == EXIT_VERIFY
    rows = _rows(capsys.readouterr().out)
    assert rows[1][4] == "optimal"


def test_analytic_assert_min(capsys):
    assert main(["analytic", "--assert-min", "0.5014"]) == EXIT_OK
    rows = _rows(capsys.readouterr().out)
    assert rows[0] == ["item", "expected", "computed", "tol", "passed"]
    assert main(["analytic", "--assert-min", "0.6"]) == EXIT_VERIFY


def test_oracle_and_probe(capsys):
    assert main(["oracle", "--instances", "25", "--max-n", "9", "--format", "json"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["mismatches"] == 0
    assert main(["probe", "--n", "6", "--trials", "60", "--format", "json"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["trials"] == 60 and 0 < doc["min"] <= doc["mean"] <= 1
    assert main(["probe", "--n", "6", "--trials", "60", "--assert-min", "2.0"]) == EXIT_VERIFY


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["teleport"],
        ["gen", "four-vertex", "--colour", "red"],
        ["gen", "four-vertex", "--se", "1"],
        ["simulate"],
        ["simulate", "--inst", "/nonexistent/file.json"],
        ["simulate", "--inst", "x.json", "--trials", "0"],
        ["gen", "dyer-frieze", "--n", "3"],
        ["lp", "--n", "1"],
    ],
)
def test_usage_errors_exit_one(argv, capsys):
    assert main(argv) == EXIT_USAGE
    assert capsys.readouterr().err


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "oblimatch", "gen", "four-vertex"], capture_output=True, text=True, check=False
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["n"] == 4
    bad = subprocess.run([sys.executable, "-m", "oblimatch", "--bogus"], capture_output=True, text=True, check=False)
    assert bad.returncode == 1
