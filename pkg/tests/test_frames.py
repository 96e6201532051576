import numpy as np
import pytest

from polarmetric.errors import NotRadical, NotTransversal
from polarmetric.frames import (POLAR, CoframeField, cor1_check, coordinate_frame, dual_frame,
                                induced_boundary_metric, normal_form_deviation,
                                polar_frame_from_transversal, radstar_coframe)


def test_m0_radstar_is_coordinate_coframe(models):
    M0 = models("m0")
    cof = radstar_coframe(M0, ["0", "1"])
    for p in M0.interior_samples(5, seed=2):
        assert np.allclose(cof(p), np.eye(2), atol=1e-14)
        assert np.allclose(cof.gram(p), np.diag([1.0, p[1]]), atol=1e-14)


def test_m2_radstar_normal_form(models):
    M2 = models("m2")
    cof = radstar_coframe(M2, ["0", "1"])
    pts = M2.interior_samples(50, seed=11, min_tau=0.02)
    assert normal_form_deviation(cof, pts) < 1e-9
    # the last Gram entry is an equation of {v = 0}: zero there, simple zero
    for u in (-0.4, 0.1, 0.6):
        assert abs(cof.tau([u, 0.0])) < 1e-14
        ratio = [cof.tau([u, v]) / v for v in (1e-3, 1e-4)]
        assert ratio[0] == pytest.approx(ratio[1], rel=2e-3) and abs(ratio[1]) > 0.1


def test_radstar_rejects_non_radical_mu(models):
    with pytest.raises(NotRadical):
        radstar_coframe(models("m0"), ["1", "0"])


def test_transversal_frame_m0(models):
    M0 = models("m0")
    fr = polar_frame_from_transversal(M0, ["0", "1"])
    assert np.allclose(fr([0.3, 0.4]), np.eye(2), atol=1e-14)
    with pytest.raises(NotTransversal):
        polar_frame_from_transversal(M0, ["1", "0"])


def test_transversal_frame_m2_normal_form(models):
    M2 = models("m2")
    fr = polar_frame_from_transversal(M2, ["0", "1"])
    pts = M2.interior_samples(50, seed=12, min_tau=0.02)
    assert normal_form_deviation(fr, pts) < 1e-8
    for p in pts[:5]:
        assert np.allclose(fr(p)[:, -1], [0.0, 1.0], atol=1e-14)


def test_dual_frame_pairing(models):
    M2 = models("m2")
    cof = radstar_coframe(M2, ["0", "1"])
    fr = dual_frame(cof)
    for p in M2.interior_samples(10, seed=3):
        assert np.max(np.abs(cof(p) @ fr(p) - np.eye(2))) < 1e-10
    A = np.array([[2.0, 1.0], [0.5, 3.0]])
    const = dual_frame(CoframeField.constant(M2, A))
    assert np.allclose(const([0.1, 0.2]), np.linalg.inv(A), atol=1e-15)


def test_coordinate_frame_is_polar_for_m0(models):
    fr = coordinate_frame(models("m0"))
    assert fr.kind == POLAR


def test_induced_boundary_metrics(models):
    M0, M1 = models("m0"), models("m1")
    h0 = induced_boundary_metric(M0, polar_frame_from_transversal(M0, ["0", "1"]))
    assert np.allclose(h0([0.2]), [[1.0]], atol=1e-12)
    a = induced_boundary_metric(M1, polar_frame_from_transversal(M1, ["0", "0", "1"]))
    b = induced_boundary_metric(M1, polar_frame_from_transversal(M1, ["0.3*y", "0.2 + x", "1"]))
    for y in ([0.1, -0.2], [0.4, 0.3]):
        assert np.allclose(a(y), np.eye(2), atol=1e-9)
        assert np.allclose(a(y), b(y), atol=1e-9)


def test_cor1_tangent_vector_extends(models):
    rep = cor1_check(models("m0"), ["0", "1"], ["1", "0"])
    assert rep["extends"]
    assert all(abs(r["limit"]) < 1e-14 for r in rep["points"])


def test_cor1_normal_vector_diverges(models):
    rep = cor1_check(models("m0"), ["0", "1"], ["0", "1"])
    assert not rep["extends"]
    assert all(r["exponent"] == pytest.approx(-1.0, abs=1e-6) for r in rep["points"])


def test_cor1_m2_limit(models):
    # g = inverse of [[1, v], [v, v + v^2]] has g_uv = -1 identically
    rep = cor1_check(models("m2"), ["0", "1"], ["1", "0"])
    assert rep["extends"]
    assert all(abs(r["limit"] + 1.0) < 1e-6 for r in rep["points"])
