import numpy as np
import pytest
from scipy.interpolate import RegularGridInterpolator

from polarmetric.conformal import (constant_curvature_leaf_scan, metric_for_distribution,
                                   polar_normal_shift, pregeodesic_family_compare, rescale,
                                   robertson_walker_probe, simultaneity_from_field,
                                   simultaneity_from_form)
from polarmetric.errors import (FrobeniusFailure, HypothesisFailed, MeaninglessDimension,
                                NotTransversal)
from polarmetric.metric import validate
from polarmetric.natcoords import build_natural_chart

SHIPPED = ["m0", "m1", "m2", "m3", "m4", "m5", "m6", "m7", "quadratic", "nonhomothety"]


def test_zero_rescale_is_identity(models, rng):
    M0 = models("m0")
    R = rescale(M0, "0")
    for x in M0.interior_samples(5, seed=3):
        assert np.allclose(R.cometric(x), M0.cometric(x), rtol=0, atol=1e-15)


def test_rescale_scales_cometric(models):
    M1 = models("m1")
    R = rescale(M1, "x*y + t")
    x = np.array([0.2, -0.3, 0.4])
    f = np.exp(-2 * (0.2 * -0.3 + 0.4))
    assert np.allclose(R.cometric(x), f * M1.cometric(x), rtol=1e-14)
    assert np.allclose(R.metric(x), M1.metric(x) / f, rtol=1e-12)


@pytest.mark.parametrize("name", SHIPPED)
def test_rescale_preserves_validity(models, name):
    M = models(name)
    before = validate(M, n_samples=6, seed=0)
    after = validate(rescale(M, f"0.3*{M.coords[0]}^2 - 0.2*{M.coords[-1]}", check=False),
                     n_samples=6, seed=0)
    assert (before["D1"], before["D2"]) == (after["D1"], after["D2"])


def test_rescale_of_m0(models):
    M0 = models("m0")
    assert rescale(M0, "t^2").validation["D1"]
    assert rescale(M0, "x").validation["D2"]


def test_rescale_forwards_failures(models):
    with pytest.raises(HypothesisFailed):
        rescale(models("quadratic"), "x")


def test_pregeodesic_families(models):
    M0 = models("m0")
    assert pregeodesic_family_compare(M0, M0)["max_distance"] < 1e-12
    same = pregeodesic_family_compare(M0, rescale(M0, "t"))
    assert same["verdict"] == "same" and same["max_distance"] < 1e-5
    diff = pregeodesic_family_compare(M0, rescale(M0, "x"))
    assert diff["verdict"] == "different" and diff["max_distance"] > 1e-2


def test_polar_normal_shift(models):
    M0 = models("m0")
    assert polar_normal_shift(M0, rescale(M0, "x"))["max_angle"] > 1e-3
    assert polar_normal_shift(M0, rescale(M0, "t^2"))["max_angle"] < 1e-8


@pytest.mark.parametrize("name", ["m0", "m1"])
def test_coordinate_normal_gives_level_sets(models, name):
    M = models(name)
    comps = ["0"] * M.m
    comps[-1] = "1"
    d = simultaneity_from_field(M, comps)
    assert d.checks["inv_gNN_is_boundary_equation"]
    x0 = np.array(M.center, dtype=float)
    x0[-1] = 0.25
    for y in ([-0.4] * (M.m - 1), [0.3] * (M.m - 1)):
        assert d.leaf_point(x0, y)[-1] == pytest.approx(0.25, abs=1e-12)


def test_m0_inverse_gnn_is_t(models):
    M0 = models("m0")
    d = simultaneity_from_field(M0, ["0", "1"])
    for x in M0.interior_samples(4, seed=1):
        n = d.normal(x)
        assert M0.tau(x) / float(n @ M0.tau_metric(x) @ n) == pytest.approx(x[1], rel=1e-12)


def test_rejections(models):
    M0 = models("m0")
    with pytest.raises(NotTransversal):
        simultaneity_from_field(M0, ["1", "0"])
    with pytest.raises(HypothesisFailed):
        simultaneity_from_form(M0, ["1", "0"])
    # omega = dt + t x dy: the boundary is a leaf, but omega ^ d omega != 0 off it
    with pytest.raises(FrobeniusFailure):
        simultaneity_from_form(models("m5"), ["0", "t*x", "0", "1"])


def test_m4_leaves_match_natural_chart(models):
    M4 = models("m4")
    ch = build_natural_chart(M4, s_range=(-0.3, 0.3), grid=5, n_s=7)
    ip = RegularGridInterpolator((*ch.y_nodes, ch.s_nodes), ch.dzeta_ds, method="cubic")
    d = simultaneity_from_field(M4, lambda x: ip(ch.inverse(x)[None, :])[0], n_samples=2)
    err = 0.0
    for j in (1, 5):
        x0 = ch.zeta[2, j]
        for i in range(5):
            err = max(err, abs(d.leaf_point(x0, ch.zeta[i, j][:1])[1] - ch.zeta[i, j][1]))
    assert err < 1e-5


def test_representative_normal_form_on_m0(models):
    M0 = models("m0")
    rep = metric_for_distribution(M0, simultaneity_from_field(M0, ["0", "1"]))
    v = rep.validate(n_points=3)
    assert v["ok"], v
    # the natural representative of M0 is M0 itself
    for x in ([0.3, 0.4], [-0.2, -0.3]):
        assert rep.sigma(x) == pytest.approx(0.0, abs=1e-7)


def test_tilted_distribution_on_m0(models):
    M0 = models("m0")
    d = simultaneity_from_field(M0, ["t", "1"])
    rep = metric_for_distribution(M0, d)
    assert rep.validate(n_points=3)["ok"]
    for t in (0.3, -0.2):
        x0 = np.array([0.0, t])
        assert rep.leaf_label_spread(x0, [[-0.3], [0.1], [0.3]]) < 1e-5
    # reparametrizing the transversal curve keeps the normal form
    rep2 = metric_for_distribution(M0, d, reparam=lambda s: s + 0.5 * s * abs(s))
    assert rep2.validate(n_points=2)["ok"]


def test_rw_probe_flat_boundary(models):
    rep = robertson_walker_probe(models("m5"))
    assert rep["robertson_walker"] and rep["flat"]
    assert all(abs(leaf["C"]) < 1e-6 for leaf in rep["leaves"])


def test_rw_probe_round_boundary(models):
    rep = robertson_walker_probe(models("m7"))
    assert rep["robertson_walker"] and not rep["flat"]
    assert rep["fit_relative_error"] < 1e-3
    assert rep["boundary_curvature"] == pytest.approx(1.0, abs=1e-5)


def test_rw_probe_rejections(models):
    with pytest.raises(HypothesisFailed) as info:
        robertson_walker_probe(models("nonhomothety"))
    assert info.value.which == "homothety"
    with pytest.raises(MeaninglessDimension):
        robertson_walker_probe(models("m1"))


def test_leaf_scan(models):
    M5 = models("m5")
    natural = simultaneity_from_field(M5, ["0", "0", "0", "1"], n_samples=2)
    rows = constant_curvature_leaf_scan(M5, natural, [-0.2], points_per_leaf=1)
    assert rows[0]["variance"] < 1e-10
    tilted = simultaneity_from_field(M5, ["t", "0", "0", "1"], n_samples=2)
    rows = constant_curvature_leaf_scan(M5, tilted, [-0.2], points_per_leaf=2)
    assert rows[0]["variance"] > 1e-6
    with pytest.raises(MeaninglessDimension):
        constant_curvature_leaf_scan(models("m0"), simultaneity_from_field(models("m0"), ["0", "1"]), [0.1])
