import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from polarmetric import cli
from polarmetric.errors import FoldedChart, SpecError
from polarmetric.io import read_csv

MODELS = Path(__file__).resolve().parents[1] / "models"


def _json(path):
    return json.loads(Path(path).read_text())


def test_validate_ok(tmp_path, capsys):
    assert cli.main(["validate", "m0", "--out", str(tmp_path)]) == 0
    rep = _json(tmp_path / "validate.m0.json")
    assert rep["D1"] and rep["D2"]
    assert str(tmp_path / "validate.m0.json") in capsys.readouterr().out


def test_validate_failure_exits_2(tmp_path):
    assert cli.main(["validate", str(MODELS / "m3.json"), "--out", str(tmp_path)]) == 2
    rep = _json(tmp_path / "validate.m3.json")
    assert rep["D1"] and not rep["D2"]


def test_curvature_decay_exponent(tmp_path):
    assert cli.main(["curvature", str(MODELS / "m1.json"), "--out", str(tmp_path)]) == 0
    header, table = read_csv(tmp_path / "decay.m1.csv")
    assert header == ["tau", "R_mm", "tau_R_mm"]
    slope = np.polyfit(np.log(table[:, 0]), np.log(np.abs(table[:, 1])), 1)[0]
    assert slope == pytest.approx(-1.0, abs=0.05)
    assert (tmp_path / "decay.m1.svg").exists()
    rep = _json(tmp_path / "curvature.m1.json")
    assert "error" not in rep


def test_geodesic_csv(tmp_path):
    assert cli.main(["geodesic", "m1", "--from", "0.3,0.1,0", "--out", str(tmp_path)]) == 0
    header, table = read_csv(tmp_path / "geodesic.m1.csv")
    assert header == ["t", "x", "y", "t", "dx", "dy", "dt", "tau"]
    assert np.allclose(table[:, 1:3], [0.3, 0.1], atol=1e-9)
    assert table[0, 0] < 0 < table[-1, 0]
    assert (tmp_path / "trajectory.m1.svg").exists()


def test_chart_csv(tmp_path):
    assert cli.main(["chart", "m0", "--grid", "2", "--out", str(tmp_path)]) == 0
    header, table = read_csv(tmp_path / "chart.m0.csv")
    assert header[:4] == ["z1", "s", "x", "t"]
    assert len(header) == 4 + 3
    meta = _json(tmp_path / "chart.m0.json")
    assert meta["columns"] == header


def test_bad_start_point_exits_2(tmp_path, capsys):
    assert cli.main(["geodesic", "m1", "--from", "0.3,0.1", "--out", str(tmp_path)]) == 2
    err = _json(tmp_path / "geodesic.m1.json")["error"]
    assert "." in err["code"] and err["message"]
    assert "polarmetric: error" in capsys.readouterr().err


def test_numeric_failure_exits_3(tmp_path):
    code = cli.main(["chart", "m0", "--grid", "2", "--s-range=-5,5", "--out", str(tmp_path)])
    assert code == 3
    assert _json(tmp_path / "chart.m0.json")["error"]["code"] == "natcoords.QuadratureFailure"


def test_conformal_needs_sigma(tmp_path):
    assert cli.main(["conformal", "m0", "--out", str(tmp_path)]) == 2
    assert cli.main(["conformal", "m0", "--sigma", "x", "--out", str(tmp_path)]) == 0
    rep = _json(tmp_path / "conformal.m0.json")
    assert rep["pregeodesics"]["verdict"] == "different"
    assert rep["polar_normal"]["max_angle"] > 1e-3


def test_rw_probe_dimension(tmp_path):
    assert cli.main(["rw-probe", "m1", "--out", str(tmp_path)]) == 2
    assert cli.main(["rw-probe", "m7", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "leaf.m7.csv").exists()


def test_unknown_spec_exits_2(tmp_path):
    assert cli.main(["validate", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2


def test_exit_code_mapping():
    assert cli.exit_code_for(SpecError("x")) == 2
    assert cli.exit_code_for(FoldedChart("x")) == 3
    assert cli.error_code(FoldedChart("x")) == "natcoords.FoldedChart"
    with pytest.raises(KeyError):
        cli.exit_code_for(KeyError("not ours"))


def test_argument_errors(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["validate", "m0", "--tol", "novalue"])
    assert info.value.code == 2
    with pytest.raises(SystemExit):
        cli.main(["chart", "m0", "--s-range=0.1,0.2"])


def test_console_script_version():
    out = subprocess.run([sys.executable, "-m", "polarmetric.cli", "--version"],
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip().startswith("polarmetric ")
