import json
import subprocess
import sys

import pytest

from conftest import config_path
from semiflat.cli import main


@pytest.mark.parametrize("name", ["lyz_semiflat.cfg", "rotation.cfg", "line_locus.cfg", "two_chart_shifted.cfg"])
def test_verify_exit_zero(name, capsys):
    assert main(["verify", "--config", config_path(name)]) == 0
    out = capsys.readouterr()
    assert json.loads(out.out)["verdict"] == "PASS"
    assert "verify: PASS" in out.err


@pytest.mark.parametrize("cmd", ["check-atlas", "check-section", "build-locus"])
def test_report_only_commands(cmd, capsys):
    assert main([cmd, "--config", config_path("broken_glue.cfg")]) == 0
    assert json.loads(capsys.readouterr().out)["verdict"] == "REPORT"


def test_disagreement_exit_two(capsys):
    assert main(["verify", "--config", config_path("rotation.cfg"), "--tol", "1.5"]) == 2
    assert "disagreement in row2" in capsys.readouterr().err


def test_operational_errors(tmp_path, capsys):
    assert main(["verify", "--config", str(tmp_path / "missing.cfg")]) == 1
    assert main(["solve-phase", "--config", config_path("rotation.cfg")]) == 1
    assert main(["verify", "--config", config_path("line_locus.cfg"), "--grid", "1"]) == 1
    assert capsys.readouterr().err.count("error:") == 3


def test_csv_out_and_grid(tmp_path, capsys):
    out = tmp_path / "t.csv"
    code = main(["verify", "--config", config_path("line_locus.cfg"), "--format", "csv", "--grid", "9", "--out", str(out)])
    assert code == 0
    assert capsys.readouterr().out == ""
    lines = out.read_text().splitlines()
    assert lines[0] == "u1,phase,lag_res,f02_res,slag_res,dhym_res" and len(lines) == 10


def test_solve_phase_command(tmp_path):
    out = tmp_path / "s.json"
    assert main(["solve-phase", "--config", config_path("line_locus.cfg"), "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["solver"]["converged"] and rep["verdict"] == "PASS"


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "semiflat", "check-atlas", "--config", config_path("three_chart_shear.cfg")],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["atlas"]["ok"]
