import dataclasses
import math

import numpy as np
import pytest
from scipy.integrate import quad

from polarmetric.errors import FoldedChart, QuadratureFailure
from polarmetric.geodesic import integrate_pregeodesic
from polarmetric.natcoords import (arc_length_to_boundary, build_natural_chart, crossing_law_residuals,
                                   gl_integral, natural_parameter, natural_parameter_fn, shear_chart,
                                   smooth_extension_check, validate_natural_chart)


def _oracle_F(psi, t):
    """sgn(t) (int_0^t psi(x) / sqrt|x| dx)^2 by adaptive quadrature in w = sqrt|x|."""
    sg = math.copysign(1.0, t)
    w_end = math.sqrt(abs(t))
    val, _ = quad(lambda w: 2.0 * psi(sg * w * w), 0.0, w_end, epsabs=1e-14, epsrel=1e-13)
    return sg * val ** 2


def test_gauss_legendre():
    assert gl_integral(np.cos, 0.0, math.pi / 2) == pytest.approx(1.0, abs=1e-13)


@pytest.mark.parametrize("t", [-0.4, -0.05, 0.02, 0.3])
def test_closed_forms(t):
    assert natural_parameter_fn(lambda x: 1.0, t) == pytest.approx(4 * t, abs=1e-10)
    assert natural_parameter_fn(lambda x: x, t) == pytest.approx(4 / 9 * t ** 3, abs=1e-10)


def test_random_polynomials_against_adaptive_quadrature():
    rng = np.random.default_rng(7)
    for _ in range(3):
        c = rng.uniform(-1.0, 1.0, 5)
        c[0] = 1.0 + abs(c[0])
        psi = lambda x, c=c: float(np.polyval(c[::-1], x))
        for t in (-0.3, 0.1, 0.45):
            assert natural_parameter_fn(psi, t) == pytest.approx(_oracle_F(psi, t), rel=1e-11, abs=1e-12)


def test_m0_natural_parameter_is_tau(models):
    tr = integrate_pregeodesic(models("m0"), [0.1, 0.0], tau_max=0.9)
    nat = natural_parameter(tr)
    for t in (-0.5, -0.1, 0.2, 0.6):
        assert nat.Psi(t) == pytest.approx(1.0, abs=1e-10)
        assert nat.s(t) == pytest.approx(t, abs=1e-10)
        assert nat.t_of_s(t) == pytest.approx(t, abs=1e-10)


@pytest.mark.parametrize("name", ["m0", "m1", "m4"])
def test_crossing_law(models, name):
    M = models(name)
    tr = integrate_pregeodesic(M, M.boundary_samples(1, seed=4)[0], tau_max=0.9)
    nat = natural_parameter(tr)
    s_vals = np.concatenate([-np.geomspace(0.01, 0.3, 5), np.geomspace(0.01, 0.3, 5)])
    assert np.max(np.abs(crossing_law_residuals(nat, s_vals))) < 1e-6


def test_arc_length_relation(models):
    tr = integrate_pregeodesic(models("m1"), [0.2, -0.1, 0.0], tau_max=0.9)
    nat = natural_parameter(tr)
    for s in (0.3, -0.3):
        L = arc_length_to_boundary(nat, nat.t_of_s(s))
        assert math.copysign(L * L, s) == pytest.approx(4 * s, rel=1e-9)


def test_t_of_s_out_of_range(models):
    tr = integrate_pregeodesic(models("m0"), [0.0, 0.0], tau_max=0.5)
    nat = natural_parameter(tr)
    with pytest.raises(QuadratureFailure):
        nat.t_of_s(5.0)


def test_smoothness_constant_and_linear():
    for psi in (lambda t: 1.0, lambda t: t, "1 + 0.3*t - 2*t^2 + 0.5*t^3 - t^4"):
        rep = smooth_extension_check(psi)
        assert rep.verdict, rep.gaps_by_window


def test_smoothness_detects_nonsmooth_psi():
    # psi = 1 + |t| gives F = 4t + 8/3 t|t| + 4/9 t^3: F'' jumps by 32/3
    rep = smooth_extension_check(lambda t: 1.0 + abs(t))
    assert not rep.verdict
    assert rep.gaps[2] == pytest.approx(32 / 3, rel=1e-6)


@pytest.fixture(scope="module")
def m0_chart():
    from polarmetric.metric import load_model
    return build_natural_chart(load_model("m0"), s_range=(-0.3, 0.3), grid=2, n_s=7)


def test_m0_chart_is_identity(m0_chart):
    ch = m0_chart
    for idx in ch.node_iter():
        for j, s in enumerate(ch.s_nodes):
            assert np.allclose(ch.zeta[idx + (j,)], [ch.y_nodes[0][idx[0]], s], atol=1e-10)
            if s != 0.0:
                assert np.allclose(ch.g[idx + (j,)], np.diag([1.0, 1.0 / s]), rtol=1e-8, atol=1e-8)
    rep = validate_natural_chart(ch)
    assert rep["ok"], rep


def test_sheared_chart_fails_block_form(m0_chart):
    rep = validate_natural_chart(shear_chart(m0_chart, 0.3))
    assert not rep["block_form"]["ok"]


def test_chart_inverse_and_folding(m0_chart):
    ch = m0_chart
    z = np.array([ch.y_nodes[0][1] * 0.5, 0.15])
    assert np.allclose(ch.inverse(ch.forward(z)), z, atol=1e-10)
    ch.check_folding()
    folded = dataclasses.replace(ch, zeta=ch.zeta.copy())
    folded.zeta[..., -1] = np.abs(folded.zeta[..., -1])
    folded._interp = None
    with pytest.raises(FoldedChart):
        folded.check_folding()


def test_chart_csv_layout(m0_chart):
    assert m0_chart.header() == ["z1", "s", "x", "t", "g_00", "g_01", "g_11"]
    rows = m0_chart.rows()
    assert len(rows) == 2 * 7 and all(len(r) == 7 for r in rows)
