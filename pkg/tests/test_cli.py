import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from nlscat import checks, experiment_cli
from nlscat.experiment_cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main

ROOT = Path(__file__).parents[1]
SMOKE = str(ROOT / "configs" / "smoke.toml")


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_run_writes_outputs(tmp_path, capsys):
    """[TRIVIAL] CSV columns, row counts and full-precision floats."""
    assert main(["run", "-c", SMOKE, "-o", str(tmp_path)]) == EXIT_OK
    fields = read_csv(tmp_path / "fields.csv")
    assert len(fields) == 17 * 2 * 2  # steps x stages x points
    assert list(fields[0]) == ["step", "stage", "t", "point", "x", "y", "z", "E_abs",
                               "E_x", "E_y", "E_z", "H_x", "H_y", "H_z"]
    E = np.array([[float(r[k]) for k in ("E_x", "E_y", "E_z")] for r in fields])
    np.testing.assert_allclose(np.linalg.norm(E, axis=1), [float(r["E_abs"]) for r in fields], rtol=1e-15)
    norms = read_csv(tmp_path / "density_norms.csv")
    assert len(norms) == 34 and float(norms[-1]["phi_lp"]) > 0
    doc = json.loads((tmp_path / "run.json").read_text())
    assert doc["config"]["time"]["N"] == 16 and doc["summary"]["n_dofs"] == 18
    assert json.loads(capsys.readouterr().out)["steps"] == 17


def test_run_is_reproducible(tmp_path):
    """[TRIVIAL] two runs write byte-identical field files."""
    for sub in ("a", "b"):
        assert main(["run", "-c", SMOKE, "-o", str(tmp_path / sub)]) == EXIT_OK
    assert (tmp_path / "a" / "fields.csv").read_bytes() == (tmp_path / "b" / "fields.csv").read_bytes()


def test_converge_time_axis(tmp_path, capsys):
    """[TRIVIAL] a tiny ladder runs end to end and reports orders."""
    args = ["converge", "--axis", "time", "-c", SMOKE, "-o", str(tmp_path),
            "--set", "convergence.time_N=[4,8,16]", "--set", "convergence.time_reference_N=32",
            "--set", "convergence.time_mesh_n=1"]
    assert main(args) == EXIT_OK
    rows = read_csv(tmp_path / "convergence_time.csv")
    assert [int(r["level"]) for r in rows] == [4, 8, 16, 32]
    assert rows[-1]["reference"] == "1" and float(rows[-1]["error"]) == 0
    errors = [float(r["error"]) for r in rows[:-1]]
    assert errors[0] > errors[1] > errors[2] > 0
    assert rows[0]["order"] == "" and float(rows[1]["order"]) > 0
    out = capsys.readouterr().out
    assert "order=" in out and "fitted order=" in out


def test_zero_amplitude_writes_zero_fields(tmp_path):
    """[TRIVIAL] a zero-amplitude wave gives all-zero field columns."""
    assert main(["run", "-c", SMOKE, "-o", str(tmp_path), "--set", "wave.amplitude=0.0"]) == EXIT_OK
    fields = read_csv(tmp_path / "fields.csv")
    cols = ["E_abs", "E_x", "E_y", "E_z", "H_x", "H_y", "H_z"]
    assert fields and all(float(r[k]) == 0.0 for r in fields for k in cols)


def test_verify_subset(tmp_path):
    """[TRIVIAL] the JSON report lists the selected checks."""
    report = tmp_path / "v.json"
    assert main(["verify", "--only", "antisymmetry", "inverse", "--report", str(report)]) == EXIT_OK
    doc = json.loads(report.read_text())
    assert doc["passed"] and [c["name"] for c in doc["checks"]] == ["pairing_antisymmetry", "inverse_roundtrip"]


def test_verify_failure_exit_code(tmp_path, monkeypatch):
    """[TRIVIAL] a failing check maps to the numerical-failure exit code."""
    tampered = np.array([[0.0, 1.0], [1.0, 0.0]])
    monkeypatch.setitem(checks.SUITE, "antisymmetry", lambda: checks.check_pairing_antisymmetry(P=tampered))
    assert main(["verify", "--only", "antisymmetry", "-o", str(tmp_path)]) == EXIT_NUMERICAL
    assert not json.loads((tmp_path / "verify.json").read_text())["passed"]


@pytest.mark.parametrize("extra", [
    ["--set", "alpha=1.5"],
    ["--set", "time.bogus=3"],
    ["--set", "scene.mesh_file=\"/no/such/file.off\""],
    ["-c", "/no/such/config.toml"],
])
def test_invalid_input_exit_code(tmp_path, extra, capsys):
    """[TRIVIAL] configuration errors exit with 1 and a one-line message."""
    args = ["run", "-o", str(tmp_path)] + (extra if extra[0] == "-c" else ["-c", SMOKE] + extra)
    assert main(args) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert err.startswith("error:") and "Traceback" not in err


def test_corrupt_mesh_file_exit_code(tmp_path):
    """[TRIVIAL] an unparsable mesh is an input error."""
    bad = tmp_path / "bad.off"
    bad.write_text("OFF\n3 1 0\n0 0 0\n1 0 0\n")
    assert main(["run", "-c", SMOKE, "-o", str(tmp_path), "--set", f"scene.mesh_file=\"{bad}\""]) == EXIT_CONFIG


def test_numerical_failure_exit_code(tmp_path, capsys):
    """[TRIVIAL] Newton breakdown and near-surface evaluation exit with 2."""
    assert main(["run", "-c", SMOKE, "-o", str(tmp_path), "--set", "newton.max_iter=1"]) == EXIT_NUMERICAL
    assert "numerical failure" in capsys.readouterr().err
    near = ["run", "-c", SMOKE, "-o", str(tmp_path), "--set", "points=[[0.245,0,0]]"]
    assert main(near) == EXIT_NUMERICAL


def test_console_script_alpha_injection(tmp_path):
    """[TRIVIAL] the installed entry point rejects alpha = 1.5 with exit code 1."""
    proc = subprocess.run([sys.executable, "-m", "nlscat.experiment_cli", "run", "-c", SMOKE,
                           "-o", str(tmp_path), "--set", "alpha=1.5"], capture_output=True, text=True)
    assert proc.returncode == EXIT_CONFIG
    assert "alpha" in proc.stderr


def test_help_lists_subcommands(capsys):
    """[TRIVIAL]"""
    with pytest.raises(SystemExit):
        main(["--help"])
    out = capsys.readouterr().out
    assert all(cmd in out for cmd in ("run", "converge", "verify"))
    assert experiment_cli.fmt(0.1) == "0.10000000000000001"
