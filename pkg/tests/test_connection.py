import numpy as np
import pytest

from polarmetric.connection import (angle_between, beta_form, beta_value, christoffel_table,
                                    dual_connection, polar_normal_field)
from polarmetric.frames import coordinate_frame, polar_frame_from_transversal


def test_dual_connection_hand_values(models):
    M0 = models("m0")
    assert dual_connection(M0, "x", "x", "x", [0.3, 0.5]) == 0.0
    # 1/2 d_t (1/t) at t = 0.5
    assert dual_connection(M0, "t", "t", "t", [0.0, 0.5]) == pytest.approx(-2.0, rel=1e-12)


def test_dual_connection_matches_fd_koszul(models, rng):
    M1 = models("m1")
    h = 1e-4
    for _ in range(20):
        q = np.array([*rng.uniform(-0.5, 0.5, 2), rng.uniform(0.2, 0.8)])
        A, B, C = rng.normal(size=(3, 3))
        dg = np.stack([(M1.metric(q + h * e) - M1.metric(q - h * e)) / (2 * h) for e in np.eye(3)])
        low = 0.5 * (np.einsum("acb->cab", dg) + np.einsum("bca->cab", dg) - dg)
        oracle = np.einsum("cab,a,b,c->", low, A, B, C)
        as_exprs = lambda w: [repr(float(v)) for v in w]
        got = dual_connection(M1, as_exprs(A), as_exprs(B), as_exprs(C), q)
        assert got == pytest.approx(oracle, rel=1e-6, abs=1e-6)


def test_m0_coordinate_frame_table(models):
    M0 = models("m0")
    tab = christoffel_table(M0, coordinate_frame(M0), [0.2, 0.0])
    assert tab.all_extend
    assert tab.limits["tau2Gamma_mmm"]["[1][1][1]"] == pytest.approx(-0.5, abs=1e-9)


@pytest.mark.parametrize("field", [["0", "0", "1"], ["0.3", "0", "1"], ["0.2*y", "0.1*x", "1"]])
def test_m1_table_extends(models, field):
    M1 = models("m1")
    tab = christoffel_table(M1, polar_frame_from_transversal(M1, field), [0.0, 0.0, 0.0])
    assert tab.all_extend, tab.verdicts
    (val,) = tab.limits["tau2Gamma_mmm"].values()
    assert val == pytest.approx(tab.tau2_gamma_mmm_expected, abs=1e-6)
    assert val == pytest.approx(-0.5, abs=1e-6)


def test_beta_vanishes_for_m0(models):
    M0 = models("m0")
    assert np.allclose(beta_form(M0, ["0", "1"], [0.3, 0.0]).gamma, 0.0, atol=1e-12)
    # Z = d_t + t x d_x agrees with d_t on the boundary up to the factor 1
    assert np.allclose(beta_form(M0, ["t*x", "1"], [0.3, 0.0]).gamma, 0.0, atol=1e-12)


@pytest.mark.parametrize("x", [0.4, -0.6])
def test_beta_m4_matches_koszul_limit(models, x):
    M4 = models("m4")
    p = np.array([x, 0.0])
    gamma = beta_form(M4, ["0", "1"], p).gamma[0]
    oracle = beta_value(M4, ["0", "1"], ["1", "0"], p)
    assert oracle["extends"]
    assert gamma == pytest.approx(oracle["value"], abs=1e-8)
    assert gamma == pytest.approx(-x / 2, abs=1e-8)


def test_beta_scaling_invariance(models):
    M4 = models("m4")
    p = np.array([0.4, 0.0])
    a = beta_form(M4, ["0", "1"], p).gamma
    b = beta_form(M4, ["0", "2"], p).gamma
    assert np.allclose(a, b, atol=1e-9)


def test_polar_normal_m0_is_dt(models):
    N = polar_normal_field(models("m0"))
    for x in (-0.5, 0.0, 0.7):
        assert np.allclose(N.direction([x, 0.0]), [0.0, 1.0], atol=1e-12)


def test_polar_normal_m4_unique(models):
    M4 = models("m4")
    N = polar_normal_field(M4)
    N2 = polar_normal_field(M4, seed=["0.3", "1"])
    for p in M4.boundary_samples(4, seed=9):
        assert angle_between(N.direction(p), N2.direction(p)) < 1e-6
        assert np.max(np.abs(beta_form(M4, N, p).gamma)) < 1e-6
        assert np.max(np.abs(beta_form(M4, 2 * N(p), p).gamma)) < 1e-6
