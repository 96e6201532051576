import numpy as np
import pytest

from polarmetric.limits import (fd_derivative, fd_jacobian, fit_exponent, lagrange_weights, regularize,
                                richardson, richardson_along)


def test_richardson_polynomial_limit():
    taus = 0.1 * 2.0 ** -np.arange(10)
    vals = 3.0 + 2.0 * taus - 5.0 * taus ** 2 + taus ** 3
    res = richardson(vals, taus)
    assert res.extends
    assert res.limit == pytest.approx(3.0, abs=1e-12)


def test_richardson_analytic_limit():
    taus = 0.2 * 2.0 ** -np.arange(11)
    res = richardson(np.sin(taus) / taus, taus)
    assert res.extends and res.limit == pytest.approx(1.0, abs=1e-12)


def test_richardson_detects_divergence():
    taus = 0.1 * 2.0 ** -np.arange(11)
    assert not richardson(1.0 / taus, taus).extends
    assert not richardson(np.log(taus), taus).extends


def test_richardson_along_arrays():
    res = richardson_along(lambda y: np.array([np.exp(y[0]), y[0] * np.cos(y[0])]),
                           np.zeros(1), np.ones(1), 0.1)
    assert res.extends
    assert np.allclose(res.limit, [1.0, 0.0], atol=1e-12)


def test_fit_exponent():
    assert fit_exponent(lambda t: 2.0 / t).exponent == pytest.approx(-1.0, abs=1e-12)
    assert fit_exponent(lambda t: 2.0 / t).verdict() == "diverges"
    assert fit_exponent(lambda t: 1.0 + t).verdict() == "extends"
    assert fit_exponent(lambda t: t ** -0.5).verdict() == "inconclusive"


def test_lagrange_weights_reproduce_polynomials():
    nodes = np.array([-2.0, -1.0, 1.0, 2.0])
    w = lagrange_weights(nodes, 0.0)
    for k in range(4):
        assert w @ nodes ** k == pytest.approx(1.0 if k == 0 else 0.0, abs=1e-14)


def test_regularize_bridges_removable_singularity():
    raw = lambda x: np.sin(x[0]) / x[0]
    reg = regularize(raw, lambda x: float(x[0]), 0, 1e-3, 2.5e-4)
    assert reg(np.array([0.0])) == pytest.approx(1.0, abs=1e-12)
    assert reg(np.array([1e-5])) == pytest.approx(np.sin(1e-5) / 1e-5, abs=1e-12)
    assert reg(np.array([0.3])) == raw(np.array([0.3]))


def test_finite_differences():
    assert fd_derivative(np.exp, 0.0, 1e-2) == pytest.approx(1.0, abs=1e-8)
    J = fd_jacobian(lambda x: np.array([x[0] * x[1], x[1] ** 2]), np.array([2.0, 3.0]))
    assert np.allclose(J, [[3.0, 2.0], [0.0, 6.0]], atol=1e-10)
