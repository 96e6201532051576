import json
import math
from dataclasses import dataclass

import numpy as np
import pytest

from polarmetric.errors import UnknownKind
from polarmetric.io import csv_text, dumps, read_csv, to_jsonable, write_csv, write_json
from polarmetric.plotting import DECAY_HEADER, LEAF_HEADER, emit_plot_data


@dataclass
class _Pair:
    a: float
    b: np.ndarray


def test_to_jsonable_types(tmp_path):
    obj = {"x": np.float64(0.1), "n": np.int32(3), "ok": np.bool_(True), "arr": np.arange(3.0),
           "pair": _Pair(1.5, np.array([1, 2])), "z": 1 + 2j, "p": tmp_path, 2: (1, 2)}
    out = to_jsonable(obj)
    assert out["x"] == 0.1 and type(out["n"]) is int and out["ok"] is True
    assert out["arr"] == [0.0, 1.0, 2.0]
    assert out["pair"] == {"a": 1.5, "b": [1, 2]}
    assert out["z"] == {"re": 1.0, "im": 2.0}
    assert out["2"] == [1, 2] and out["p"] == str(tmp_path)
    with pytest.raises(TypeError):
        to_jsonable(object())


def test_non_finite_values_are_strings():
    text = dumps({"a": float("nan"), "b": [np.inf, -np.inf]})
    assert json.loads(text) == {"a": "NaN", "b": ["Infinity", "-Infinity"]}


def test_json_is_deterministic(tmp_path):
    a = {"b": 0.1 + 0.2, "a": [1e-300, 2.5]}
    b = {"a": [1e-300, 2.5], "b": 0.1 + 0.2}
    p1, p2 = write_json(tmp_path / "1.json", a), write_json(tmp_path / "2.json", b)
    assert p1.read_bytes() == p2.read_bytes()
    assert json.loads(p1.read_text())["b"] == 0.1 + 0.2
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(".")]


def test_csv_round_trip(tmp_path):
    rows = [[0.1, 1 / 3], [np.float64(2e-17), -4.0]]
    p = write_csv(tmp_path / "t.csv", ["a", "b"], rows)
    header, table = read_csv(p)
    assert header == ["a", "b"]
    assert table.tolist() == [[0.1, 1 / 3], [2e-17, -4.0]]
    assert csv_text(["f"], [[True]]) == "f\ntrue\n"


def test_decay_plot_data(tmp_path):
    tau = np.logspace(-5, -3, 6)
    rows = [[t, 1 / t + 2, t * (1 / t + 2)] for t in tau]
    csv_path, svg_path = emit_plot_data(rows, "decay", tmp_path, "m1")
    assert csv_path.name == "decay.m1.csv" and svg_path.name == "decay.m1.svg"
    header, table = read_csv(csv_path)
    assert header == DECAY_HEADER == ["tau", "R_mm", "tau_R_mm"]
    assert np.allclose(table, rows)
    svg = svg_path.read_text()
    assert svg.lstrip().startswith("<?xml") and "<svg" in svg
    assert "slope -1.000" in svg


def test_leaf_plot_data_both_shapes(tmp_path):
    scan = [{"t": -0.1, "mean": 1.0, "samples": [0.9, 1.2]}]
    probe = [{"t": -0.1, "C": 2.0, "spread": 0.0}]
    _, t1 = read_csv(emit_plot_data(scan, "leaf", tmp_path, "a")[0])
    h, t2 = read_csv(emit_plot_data(probe, "leaf", tmp_path, "b")[0])
    assert h == LEAF_HEADER
    assert t1[0].tolist() == pytest.approx([-0.1, 1.0, 0.3])
    assert t2[0].tolist() == [-0.1, 2.0, 0.0]


def test_svg_is_reproducible(tmp_path):
    rows = [[0.1, 12.0, 1.2], [0.01, 102.0, 1.02]]
    a = emit_plot_data(rows, "decay", tmp_path / "a", "m")[1].read_bytes()
    b = emit_plot_data(rows, "decay", tmp_path / "b", "m")[1].read_bytes()
    assert a == b


def test_unknown_kind(tmp_path):
    with pytest.raises(UnknownKind):
        emit_plot_data([], "histogram", tmp_path, "x")


def test_repr_floats_survive():
    x = math.nextafter(0.1, 1.0)
    assert json.loads(dumps({"x": x}))["x"] == x
