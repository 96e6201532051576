import json
import math

import numpy as np
import pytest

from polarmetric.errors import DegeneratePoint, NotInDomain, SpecError
from polarmetric.metric import (check_annihilator_tangent, check_transverse, covariant_metric_at,
                                degeneracy_value, load_model, model_from_dict, signature_sides,
                                tau_metric_at, validate)


def _doc(cometric, coords=("x", "t"), tau=None):
    return {"dimension": len(coords), "coordinates": list(coords), "cometric": cometric,
            "domain": {c: [-1, 1] for c in coords}, **({"tau": tau} if tau else {})}


def test_m0_loads(models):
    M0 = models("m0")
    assert M0.m == 2 and M0.coords == ("x", "t")
    assert M0.tau([0.3, 0.25]) == 0.25


def test_shipped_m0_matches_repo_copy():
    from pathlib import Path
    import polarmetric
    shipped = Path(polarmetric.__file__).parent / "models" / "m0.json"
    repo = Path(__file__).resolve().parents[1] / "models" / "m0.json"
    assert json.loads(shipped.read_text()) == json.loads(repo.read_text())


def test_asymmetric_cometric_rejected():
    with pytest.raises(SpecError, match="asymmetric"):
        model_from_dict(_doc([["1", "t"], ["x", "t"]]))


@pytest.mark.parametrize("doc", [
    {"dimension": 2, "coordinates": ["x", "t"], "cometric": [["1", "0"], ["0", "t"]]},
    _doc([["1", "0"]]),
    _doc([["1", "0"], ["0", "t +"]]),
    _doc([["1", "0"], ["0", "z"]]),
])
def test_malformed_specs(doc):
    with pytest.raises(SpecError):
        model_from_dict(doc)


def test_unknown_model_name():
    with pytest.raises(SpecError):
        load_model("no_such_model")


def test_degeneracy_values(models):
    assert degeneracy_value(models("m0"), [0.2, 0.7]) == pytest.approx(0.7)
    assert degeneracy_value(models("m2"), [0.4, 0.0]) == 0.0
    assert degeneracy_value(models("m1"), [0.0, 0.0, 0.5]) == pytest.approx(0.5 * math.exp(-2.0), rel=1e-14)
    with pytest.raises(NotInDomain):
        degeneracy_value(models("m0"), [2.0, 0.0])


def test_transversality(models):
    assert check_transverse(models("m0"), [0.0, 0.0])
    v = check_transverse(models("m2"), [0.3, 0.0])
    assert v and np.allclose(v.detail["gradient"], [0.0, 1.0], atol=1e-14)
    quad = model_from_dict(_doc([["1", "0"], ["0", "t^2"]]))
    assert not check_transverse(quad, [0.0, 0.0])


def test_annihilator_condition(models):
    assert check_annihilator_tangent(models("m0"), [0.0, 0.0])
    assert check_annihilator_tangent(models("m2"), [0.3, 0.0])
    # M3 degenerates on {x = 0} but its radical is dt
    assert not check_annihilator_tangent(models("m3"), [0.0, 0.5])


def test_covariant_metric(models):
    assert np.allclose(covariant_metric_at(models("m0"), [0.0, 0.5]), np.diag([1.0, 2.0]))
    with pytest.raises(DegeneratePoint):
        covariant_metric_at(models("m0"), [0.0, 0.0])
    # inverse of [[1, 0.25], [0.25, 0.3125]]
    assert np.allclose(covariant_metric_at(models("m2"), [0.0, 0.25]), [[1.25, -1.0], [-1.0, 4.0]],
                       atol=1e-13)


def test_tau_metric(models):
    assert np.allclose(tau_metric_at(models("m0"), [0.1, 0.4]), np.diag([0.4, 1.0]))
    assert np.allclose(tau_metric_at(models("m0"), [0.1, 0.0]), np.diag([0.0, 1.0]), atol=1e-12)
    val = tau_metric_at(models("m1"), [0.0, 0.0, 0.0])
    assert np.allclose(val, np.diag([0.0, 0.0, 1.0]), atol=1e-9)


def test_regularized_tau_metric_matches_closed_form(models):
    M1 = models("m1")
    for t in [1e-9, 1e-6, 3e-4]:
        got = M1.tau_metric([0.2, -0.3, t])
        assert np.allclose(got, np.diag([t * math.exp(2 * t)] * 2 + [1.0]), atol=1e-10)


def test_validation_dichotomy(models):
    for name in ["m0", "m1", "m2", "m4", "m5", "m6", "m7"]:
        rep = validate(models(name))
        assert rep["D1"] and rep["D2"], name
    rep = validate(models("m3"))
    assert rep["D1"] and not rep["D2"]
    quad = model_from_dict(_doc([["1", "0"], ["0", "t^2"]]))
    assert not validate(quad)["D1"]


def test_signature_changes_across_boundary(models):
    sig = signature_sides(models("m1"), [0.0, 0.0, 0.0])
    assert sig["plus"] == {"positive": 3, "negative": 0}
    assert sig["minus"] == {"positive": 2, "negative": 1}


def test_christoffel_matches_finite_differences(models, rng):
    M = models("m4")
    for _ in range(5):
        x = np.array([rng.uniform(-0.5, 0.5), rng.uniform(0.2, 0.8)])
        h = 1e-4
        dg = np.stack([(M.metric(x + h * e) - M.metric(x - h * e)) / (2 * h) for e in np.eye(2)])
        # Gamma_cab = 1/2 (d_a g_cb + d_b g_ca - d_c g_ab) with dg[a, i, j] = d_a g_ij
        low = 0.5 * (np.einsum("acb->cab", dg) + np.einsum("bca->cab", dg) - dg)
        expect = np.einsum("dc,cab->dab", np.linalg.inv(M.metric(x)), low)
        assert np.allclose(M.christoffel(x), expect, atol=1e-7)
