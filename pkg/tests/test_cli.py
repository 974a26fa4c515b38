import csv
import io
import json
import subprocess
import sys

import pytest

from rkproj.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_list(capsys):
    code, out, _ = run(capsys, "list")
    assert code == 0
    for name in ("lindiss", "burgers", "bsrk85", "heun33", "quasi-orthogonal", "plain"):
        assert name in out


def test_evolve_example(capsys):
    code, out, _ = run(capsys, "evolve", "--problem", "oscillator", "--tableau", "rk44", "--method",
                       "quasi-orthogonal", "--dt", "0.1", "--tf", "10")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0][:5] == ["step", "t_nominal", "t_effective", "G_energy", "drift_energy"]
    assert len(rows) == 102
    assert max(abs(float(r[4])) for r in rows[1:]) <= 1e-12


def test_evolve_json_and_out_file(capsys, tmp_path):
    path = tmp_path / "run.json"
    code, out, _ = run(capsys, "evolve", "--problem", "burgers", "--cfl", "0.3", "--tf", "0.1", "--method",
                       "relaxation", "--channels", "dt_ratio,linear", "--format", "json", "--out", str(path))
    assert code == 0 and out == ""
    data = json.loads(path.read_text())
    assert data["failure"] is None
    assert data["columns"][-3:] == ["dt_ratio", "L0", "drift_L0"]
    assert data["rows"][0][-3] is None


def test_sweep_has_80_rows(capsys):
    code, out, _ = run(capsys, "sweep")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "dt,method,solvable,ratio,dG,reason"
    assert len(lines) == 81
    assert "false" in out


@pytest.mark.parametrize("argv, needle", [
    (["evolve", "--problem", "kepler", "--dt", "0.1", "--tf", "1"], "lindiss, oscillator, burgers, rigidbody"),
    (["evolve", "--tableau", "rk45", "--dt", "0.1", "--tf", "1"], "bsrk85"),
    (["evolve", "--dt", "0.1", "--cfl", "0.3", "--tf", "1"], "not allowed"),
    (["evolve", "--tf", "1"], "--dt or --cfl"),
    (["evolve", "--dt", "0.1", "--tf", "1", "--channels", "angle_deg"], "projection stepper"),
    (["evolve", "--dt", "0.1", "--tf", "1", "--method", "directional", "--embedded", "rk44"], "embedded"),
    (["compare", "--tf", "1", "--dt", "0.1", "--methods", "plain"], "quasi-orthogonal"),
    (["converge", "--tf", "1", "--levels", "3"], "at least 4"),
    (["frobnicate"], "invalid choice"),
    ([], "command is required"),
])
def test_usage_errors_exit_1(capsys, argv, needle):
    code, _, err = run(capsys, *argv)
    assert code == 1
    assert needle in err


def test_numerical_failure_exits_2(capsys):
    code, out, err = run(capsys, "evolve", "--problem", "lindiss", "--method", "relaxation", "--target",
                         "dissipative", "--dt", "1.0", "--tf", "3")
    assert code == 2
    assert out.splitlines()[-1].startswith("FAILED,0.0,0.0,")
    assert "step 0" in err


def test_compare_partial_failure_exits_2(capsys):
    code, out, err = run(capsys, "compare", "--problem", "lindiss", "--target", "dissipative", "--dt", "1.0",
                         "--tf", "2", "--methods", "relaxation,quasi-orthogonal")
    assert code == 2 and "relaxation failed" in err
    assert "quasi-orthogonal" in out


def test_converge_csv(capsys):
    code, out, _ = run(capsys, "converge", "--tableaux", "rk44", "--methods", "quasi-orthogonal", "--tf", "2",
                       "--levels", "4")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 4 and float(rows[0]["slope"]) == pytest.approx(4, abs=0.3)


def test_config_file(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# oscillator run\nproblem = oscillator\ntableau = ssprk22\ndt = 0.5\ntf = 1.0\n")
    code, out, _ = run(capsys, "evolve", "--config", str(cfg))
    assert code == 0 and len(out.splitlines()) == 4
    # the command line overrides the file
    code, out, _ = run(capsys, "evolve", "--config", str(cfg), "--dt", "0.25")
    assert code == 0 and len(out.splitlines()) == 6
    cfg.write_text("speed = 3\n")
    code, _, err = run(capsys, "evolve", "--config", str(cfg))
    assert code == 1 and "unknown key" in err


def test_help_documents_columns(capsys):
    code, out, _ = run(capsys, "evolve", "--help")
    assert code == 0
    assert "t_effective" in out and "FAILED" in out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "rkproj", "list"], capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "tableaux:" in proc.stdout
