import csv
import json
import subprocess
import sys

import pytest

from aposc.cli import build_parser, main

SMALL = {
    "forcing": {"constant": 1.0, "terms": [{"freq": "sqrt(2)", "amp": 0.3}, {"freq": "sqrt(3)", "amp": 0.2}]},
    "experiment": {"n_orbits": 2, "t_end": 40.0, "checkpoint_range": [4.0, 40.0], "n_iter": 120},
    "dioph": {"grid_n": 40, "K": 4},
}


@pytest.fixture
def cfg_path(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(SMALL))
    return path


def test_parser_has_all_subcommands():
    parser = build_parser()
    for cmd in ("simulate", "poincare", "twist-check", "dioph-scan", "normalform", "curve", "boundedness", "report"):
        args = parser.parse_args([cmd, "--config", "c.json", "--out", "o", "--tol", "1e-9", "--seed", "3"])
        assert args.command == cmd and args.seed == 3 and args.tol == 1e-9


def test_simulate_writes_trajectory(tmp_path, cfg_path, capsys):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", str(cfg_path), "--out", str(out), "--t-end", "5"]) == 0
    rows = list(csv.reader((out / "trajectory.csv").open()))
    assert rows[0] == ["t", "x", "y"] and float(rows[-1][0]) == 5.0
    assert "crossings" in capsys.readouterr().out


def test_poincare_iterates(tmp_path, cfg_path):
    out = tmp_path / "p"
    assert main(["poincare", "--config", str(cfg_path), "--out", str(out), "--iterations", "3"]) == 0
    rows = list(csv.reader((out / "poincare.csv").open()))
    assert rows[0] == ["j", "t", "r"] and len(rows) == 5


def test_twist_and_dioph(tmp_path, cfg_path):
    assert main(["twist-check", "--config", str(cfg_path), "--out", str(tmp_path / "t")]) == 0
    assert (tmp_path / "t" / "twist.csv").exists()
    assert main(["dioph-scan", "--config", str(cfg_path), "--out", str(tmp_path / "d")]) == 0
    rows = list(csv.reader((tmp_path / "d" / "dioph_scan.csv").open()))
    assert rows[0] == ["gamma", "K", "fraction"] and len(rows) == 4


def test_twist_failure_exit_code(tmp_path):
    path = tmp_path / "zero.json"
    path.write_text(json.dumps({"forcing": {"constant": 0.0, "terms": [{"freq": "sqrt(2)", "amp": 1.0}]}}))
    assert main(["twist-check", "--config", str(path), "--out", str(tmp_path / "z")]) == 1


def test_boundedness_rows_match_ensemble(tmp_path, cfg_path):
    out = tmp_path / "b"
    main(["boundedness", "--config", str(cfg_path), "--out", str(out)])
    rows = list(csv.reader((out / "boundedness_summary.csv").open()))
    assert len(rows) - 1 == SMALL["experiment"]["n_orbits"]
    assert all(r[-1] == str(json.loads(cfg_path.read_text()).get("seed", 20240101)) for r in rows[1:])


def test_report_names_all_clauses(tmp_path, cfg_path):
    out = tmp_path / "r"
    main(["report", "--config", str(cfg_path), "--out", str(out), "--skip-boundedness"])
    text = (out / "report.txt").read_text()
    for clause in ("twist condition", "rotation admissibility", "homological equation", "first-integral PDE", "shift identity"):
        assert clause in text
    for line in text.splitlines()[2:]:
        clause, check, module, tol, value, status = line.split("\t")
        assert module and tol and status in ("pass", "FAIL")
    echo = json.loads((out / "config.json").read_text())
    assert echo["out"] == str(out)


def test_bad_config_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"oscillator": {"a": 1.0, "b": 1.0}}))
    assert main(["twist-check", "--config", str(path)]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "aposc", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "aposc" in res.stdout
