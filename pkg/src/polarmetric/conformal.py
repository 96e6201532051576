"""Conformal rescaling, simultaneity distributions and the Robertson-Walker probe.

A conformal change multiplies the covariant metric by ``exp(2 sigma)``, so
the cometric is multiplied by ``exp(-2 sigma)``; the degenerate set and the
D1/D2 conditions are unchanged.  Rescalings by a function of the natural
parameter keep the family of crossing pregeodesics; others generally move the
polar-normal direction on the boundary.

A simultaneity distribution is an integrable hyperplane field with the
degenerate set as a leaf.  For a transversal, non-isotropic field ``N`` the
distribution ``N^perp`` is the kernel of the one-form ``omega = tau g(N, .)``,
which stays smooth (and nonzero) across the degenerate set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from . import expr as ex
from .curvature import SymbolicSource, _intrinsic_riemann
from .errors import (FrobeniusFailure, HypothesisFailed, IsotropicField, MeaninglessDimension,
                     NotTransversal, PolarMetricError)
from .fields import Field, as_field
from .geodesic import hausdorff, integrate_pregeodesic
from .limits import fd_jacobian, regularize, richardson
from .metric import MetricModel, validate

__all__ = [
    "rescale", "pregeodesic_family_compare", "polar_normal_shift",
    "SimultaneityDistribution", "simultaneity_from_field", "simultaneity_from_form",
    "ConformalRepresentative", "metric_for_distribution", "robertson_walker_probe",
    "constant_curvature_leaf_scan",
]

ODE_RTOL = 1e-11
ODE_ATOL = 1e-13


# -- rescaling -------------------------------------------------------------------

def rescale(model: MetricModel, sigma, name: str | None = None, check: bool = True) -> MetricModel:
    """Model with covariant metric ``exp(2 sigma) g``.

    ``sigma`` is an expression (string or :class:`Expr`) in the model
    coordinates.  With ``check`` the result is re-validated and a failure of
    D1 or D2 is raised as :class:`HypothesisFailed`.
    """
    s = ex.parse(sigma, model.coords) if isinstance(sigma, str) else sigma
    factor = ex.func("exp", ex.mul(ex.Const(-2.0), s))
    G = [[ex.mul(factor, model.cometric_exprs[i][j]) for j in range(model.m)] for i in range(model.m)]
    label = name or f"{model.name}*exp(2*({ex.to_string(s)}))"
    new = model.with_cometric(G, name=label)
    new.sigma_expr = s
    if check:
        rep = validate(new, n_samples=6, seed=0)
        new.validation = rep
        for key in ("D1", "D2"):
            if not rep[key]:
                raise HypothesisFailed(key, f"rescaled model {label!r} fails {key}")
    return new


def _resampled(traj, t_lo: float, t_hi: float, n: int) -> np.ndarray:
    ts = np.linspace(t_lo, t_hi, 4 * n)
    pts = np.array([traj.x_at(t) for t in ts])
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.linspace(0.0, arc[-1], n)
    return np.column_stack([np.interp(targets, arc, pts[:, a]) for a in range(pts.shape[1])])


def pregeodesic_family_compare(model_a: MetricModel, model_b: MetricModel, points=None,
                               n_points: int = 3, seed: int = 0, tau_max: float | None = None,
                               n_resample: int = 400, same_tol: float = 1e-5,
                               different_tol: float = 1e-2) -> dict:
    """Hausdorff distance between the crossing pregeodesics of two models
    through shared boundary points (arc-length resampled point sets)."""
    pts = model_a.boundary_samples(n_points, seed=seed) if points is None else np.atleast_2d(points)
    tmax = 0.5 * model_a.scale if tau_max is None else tau_max
    rows = []
    for p in pts:
        ta = integrate_pregeodesic(model_a, p, tau_max=tmax)
        tb = integrate_pregeodesic(model_b, p, tau_max=tmax)
        lo = max(ta.t_range[0], tb.t_range[0]) * (1 - 1e-9)
        hi = min(ta.t_range[1], tb.t_range[1]) * (1 - 1e-9)
        d = hausdorff(_resampled(ta, lo, hi, n_resample), _resampled(tb, lo, hi, n_resample))
        rows.append({"point": np.asarray(p).tolist(), "distance": d, "t_range": [lo, hi]})
    dmax = max(r["distance"] for r in rows)
    verdict = "same" if dmax < same_tol else ("different" if dmax > different_tol else "inconclusive")
    return {"models": [model_a.name, model_b.name], "points": rows, "max_distance": dmax,
            "verdict": verdict}


def polar_normal_shift(model_a: MetricModel, model_b: MetricModel, points=None,
                       n_points: int = 3, seed: int = 0) -> dict:
    """Angles between the polar-normal boundary directions of two models."""
    from .connection import angle_between, polar_normal_field
    pts = model_a.boundary_samples(n_points, seed=seed) if points is None else np.atleast_2d(points)
    na, nb = polar_normal_field(model_a), polar_normal_field(model_b)
    rows = []
    for p in pts:
        da, db = na.direction(p), nb.direction(p)
        rows.append({"point": np.asarray(p).tolist(), "direction_a": da.tolist(),
                     "direction_b": db.tolist(), "angle": angle_between(da, db)})
    return {"models": [model_a.name, model_b.name], "points": rows,
            "max_angle": max(r["angle"] for r in rows)}


# -- simultaneity distributions ---------------------------------------------------

@dataclass
class SimultaneityDistribution:
    """Hyperplane field ``ker omega`` with the degenerate set as a leaf.

    ``omega(x)`` is the smooth defining one-form and ``normal(x)`` a
    transversal field with ``N^perp = ker omega``.
    """

    model: MetricModel = field(repr=False)
    omega: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    normal: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    label: str = ""
    checks: dict = field(default_factory=dict)

    @property
    def axis(self) -> int:
        return self.model.normal_index

    def slope(self, x) -> np.ndarray:
        """``d x^k / d y^j`` of the leaf through ``x`` (graph over the
        remaining coordinates)."""
        w = self.omega(x)
        k = self.axis
        return -np.delete(w, k) / w[k]

    def leaf_point(self, x0, y) -> np.ndarray:
        """Point with boundary coordinates ``y`` on the leaf through ``x0``.

        Marches along the straight segment from the boundary coordinates of
        ``x0`` to ``y``; integrability makes the endpoint path independent.
        """
        k = self.axis
        x0 = np.asarray(x0, dtype=float)
        y0 = np.delete(x0, k)
        dy = np.atleast_1d(np.asarray(y, dtype=float)) - y0
        if np.max(np.abs(dy), initial=0.0) < 1e-15:
            return x0.copy()

        def at(u, h):
            return np.insert(y0 + u * dy, k, h)

        def rhs(u, h):
            return [float(self.slope(at(u, h[0])) @ dy)]

        sol = solve_ivp(rhs, (0.0, 1.0), [x0[k]], method="DOP853", rtol=ODE_RTOL, atol=ODE_ATOL)
        if not sol.success:
            raise PolarMetricError(f"leaf marching failed: {sol.message}")
        return at(1.0, sol.y[0, -1])

    def leaf_grid(self, x0, y_points) -> np.ndarray:
        return np.array([self.leaf_point(x0, y) for y in np.atleast_2d(y_points)])

    def frobenius_residual(self, points) -> float:
        """``max |d omega(X, Y)|`` over unit kernel vectors ``X, Y``
        (``omega`` normalized), which vanishes iff ``omega ^ d omega = 0``."""
        worst = 0.0
        h = 1e-3 * self.model.scale
        for x in np.atleast_2d(points):
            w = self.omega(x)
            nrm = np.linalg.norm(w)
            J = fd_jacobian(lambda y: self.omega(y) / nrm, x, h)  # J[i, b] = d_b omega_i
            dw = J.T - J  # dw[a, b] = d_a omega_b - d_b omega_a
            _, _, vt = np.linalg.svd((w / nrm)[None, :])
            K = vt[1:]
            worst = max(worst, float(np.max(np.abs(K @ dw @ K.T))) if len(K) > 1 else 0.0)
        return worst


def _omega_from_field(model: MetricModel, N: Field):
    def om(x):
        x = np.asarray(x, dtype=float)
        return model.tau_metric(x) @ N(x)
    return om


def _check_distribution(dist: SimultaneityDistribution, n_samples: int, seed: int) -> dict:
    model = dist.model
    bpts = model.boundary_samples(n_samples, seed=seed)
    ipts = model.interior_samples(n_samples, seed=seed)
    k = model.normal_index
    # transversality of N and the leaf condition on the boundary
    for p in bpts:
        n = dist.normal(p)
        dt = model.dtau(p)
        if abs(float(dt @ n)) < 1e-7 * np.linalg.norm(dt) * max(np.linalg.norm(n), 1e-300):
            raise NotTransversal(f"N is tangent to the degenerate set at {p.tolist()}")
    # 1/g(N, N) = tau / (tau g)(N, N): finite everywhere, zero exactly on the boundary
    inv_b, inv_i = [], []
    e = np.zeros(model.m)
    e[k] = 1.0
    for x in ipts:
        n = dist.normal(x)
        q = float(n @ model.tau_metric(x) @ n)
        if abs(q) < 1e-10:
            raise IsotropicField(f"g(N, N) vanishes at {x.tolist()}")
        inv_i.append(model.tau(x) / q)

    def inv_gnn(x):
        n = dist.normal(x)
        q = float(n @ model.tau_metric(x) @ n)
        if abs(q) < 1e-10:
            raise IsotropicField(f"g(N, N) vanishes at {np.asarray(x).tolist()}")
        return model.tau(x) / q

    for p in bpts:
        taus = 0.1 * model.scale * 2.0 ** -np.arange(11)
        vals = np.array([inv_gnn(p + t * e) for t in taus])
        inv_b.append(float(richardson(vals, taus).limit))
    frob = dist.frobenius_residual(ipts[: max(2, n_samples // 2)]) if model.m >= 3 else 0.0
    if frob > 1e-6:
        raise FrobeniusFailure(f"distribution is not integrable (residual {frob:.3g})")
    return {"inv_gNN_boundary_max": float(np.max(np.abs(inv_b))),
            "inv_gNN_interior_min": float(np.min(np.abs(inv_i))),
            "inv_gNN_is_boundary_equation": bool(np.max(np.abs(inv_b)) < 1e-8 and np.min(np.abs(inv_i)) > 1e-8),
            "frobenius_residual": frob}


def simultaneity_from_field(model: MetricModel, N, n_samples: int = 6, seed: int = 0,
                            label: str | None = None) -> SimultaneityDistribution:
    """The distribution ``N^perp`` (tangent space of the boundary on it)."""
    Nf = as_field(N, model.coords) if not callable(N) or isinstance(N, (str, list)) else N
    normal = (lambda x: np.asarray(Nf(np.asarray(x, dtype=float)), dtype=float))
    dist = SimultaneityDistribution(model, _omega_from_field(model, Nf), normal,
                                    label or getattr(Nf, "label", None) or "N")
    dist.checks = _check_distribution(dist, n_samples, seed)
    return dist


def simultaneity_from_form(model: MetricModel, omega, n_samples: int = 6, seed: int = 0,
                           angle_tol: float = 1e-6) -> SimultaneityDistribution:
    """Distribution given by a smooth one-form (expression strings).  The
    boundary must be a leaf, i.e. ``omega`` is a multiple of ``d tau`` there;
    the matching transversal is ``N = G* omega / tau``."""
    exprs = [ex.parse(c, model.coords) if isinstance(c, str) else c for c in omega]
    f = ex.compile_expr(exprs, model.coords)
    om = lambda x: np.asarray(f(np.asarray(x, dtype=float)), dtype=float)
    for p in model.boundary_samples(n_samples, seed=seed):
        w, dt = om(p), model.dtau(p)
        s = np.linalg.norm(w - (w @ dt) / (dt @ dt) * dt) / np.linalg.norm(w)
        if s > angle_tol:
            raise HypothesisFailed("boundary-leaf", f"the degenerate set is not a leaf at {p.tolist()}")
    raw = lambda x: model.cometric(x) @ om(x) / model.tau(x)
    normal = regularize(raw, model.tau, model.normal_index, model.reg_delta, model.reg_guard)
    dist = SimultaneityDistribution(model, om, normal, "omega")
    dist.checks = _check_distribution(dist, n_samples, seed)
    return dist


# -- representative metric for a distribution ----------------------------------------

@dataclass
class ConformalRepresentative:
    """``gbar = exp(2 sigma) g`` whose natural chart is the flow chart of the
    distribution: ``x_i`` is where the integral curve of ``N`` meets the
    boundary, ``x_m`` labels the leaf by ``f(tau)`` at its crossing of the
    coordinate line through the base point."""

    model: MetricModel = field(repr=False)
    dist: SimultaneityDistribution = field(repr=False)
    base: np.ndarray
    reparam: Callable[[float], float] = field(repr=False)

    def label(self, x) -> float:
        k = self.model.normal_index
        q = self.dist.leaf_point(x, np.delete(self.base, k))
        return float(self.reparam(self.model.tau(q)))

    def foot(self, x) -> np.ndarray:
        """Boundary point on the integral curve of ``N`` through ``x``."""
        model = self.model
        x = np.asarray(x, dtype=float)
        tau0 = model.tau(x)
        if tau0 == 0.0:
            return x.copy()
        n0 = self.dist.normal(x)
        direction = -np.sign(tau0 * float(model.dtau(x) @ n0))

        def rhs(_, y):
            return direction * self.dist.normal(y)

        def hit(_, y):
            return model.tau(y)
        hit.terminal = True
        sol = solve_ivp(rhs, (0.0, 10.0 * model.scale), x, method="DOP853", rtol=ODE_RTOL,
                        atol=ODE_ATOL, events=hit)
        if sol.status != 1:
            raise PolarMetricError("integral curve of N did not reach the degenerate set")
        return sol.y_events[0][0]

    def flow_coords(self, x) -> np.ndarray:
        k = self.model.normal_index
        return np.append(np.delete(self.foot(x), k), self.label(x))

    def sigma(self, x, h: float | None = None, xm: float | None = None) -> float:
        """``-1/2 log(x_m g(N, N) / dx_m(N)^2)``, evaluated in the smooth
        form ``x_m (tau g)(N, N) / (tau dx_m(N)^2)`` away from the boundary."""
        model = self.model
        x = np.asarray(x, dtype=float)
        n = self.dist.normal(x)
        hh = 1e-4 * model.scale if h is None else h
        xm = self.label(x) if xm is None else xm
        d = (self.label(x + hh * n) - self.label(x - hh * n)) / (2 * hh)
        q = float(n @ model.tau_metric(x) @ n)
        return -0.5 * math.log(xm * q / (model.tau(x) * d * d))

    def metric(self, x) -> np.ndarray:
        return math.exp(2.0 * self.sigma(x)) * self.model.metric(x)

    def metric_on_leaf(self, x, xm: float) -> np.ndarray:
        """``gbar`` at ``x`` when the leaf label ``xm`` is already known."""
        return math.exp(2.0 * self.sigma(x, xm=xm)) * self.model.metric(x)

    def validate(self, points=None, n_points: int = 4, seed: int = 0, h: float | None = None) -> dict:
        """Normal form of ``gbar`` in the flow chart at off-boundary samples."""
        model = self.model
        pts = model.interior_samples(n_points, seed=seed, min_tau=0.1) if points is None else np.atleast_2d(points)
        hh = 1e-3 * model.scale if h is None else h
        gim, gmm = 0.0, 0.0
        for x in pts:
            J = fd_jacobian(self.flow_coords, x, hh)  # J[a, b] = d x^a / d y^b
            Jinv = np.linalg.inv(J)
            gb = Jinv.T @ self.metric(x) @ Jinv
            xm = self.label(x)
            gim = max(gim, float(np.max(np.abs(gb[:-1, -1]))))
            gmm = max(gmm, abs(float(gb[-1, -1]) * xm - 1.0))
        return {"max_abs_g_im": gim, "max_abs_gmm_xm_minus_1": gmm,
                "ok": bool(gim < 1e-5 and gmm < 1e-5)}

    def leaf_label_spread(self, x0, y_points) -> float:
        """Spread of ``x_m`` along the input leaf through ``x0``."""
        vals = [self.label(p) for p in self.dist.leaf_grid(x0, y_points)]
        return float(np.max(vals) - np.min(vals))


def metric_for_distribution(model: MetricModel, dist: SimultaneityDistribution, base=None,
                            reparam: Callable[[float], float] | None = None) -> ConformalRepresentative:
    """Conformal representative whose simultaneity distribution is ``dist``.

    ``reparam`` (increasing, ``f(0) = 0``) reparametrizes the transversal
    curve through ``base``; different choices differ by a factor that is
    constant on leaves.
    """
    k = model.normal_index
    b = model.center if base is None else np.asarray(base, dtype=float)
    b = model.boundary_point(b, k)
    f = (lambda t: t) if reparam is None else reparam
    return ConformalRepresentative(model, dist, b, f)


# -- Robertson-Walker ----------------------------------------------------------------

def _sectional(h: np.ndarray, R: np.ndarray) -> list[float]:
    n = h.shape[0]
    out = []
    for i in range(n):
        for j in range(i + 1, n):
            num = float(np.einsum("d,d->", h[i], R[:, j, i, j]))
            out.append(num / float(h[i, i] * h[j, j] - h[i, j] ** 2))
    return out


def robertson_walker_probe(model: MetricModel, t_values: Sequence[float] | None = None,
                           n_samples: int = 30, seed: int = 0, curvature_points: int = 4,
                           step: float | None = None) -> dict:
    """Check the hypotheses (constant-curvature boundary, homothetic flow)
    and the Robertson-Walker form of ``g_c = -tau g`` on the Lorentz side.

    Works in the natural chart of a natural-form model, where the flow is
    ``(y, 0) -> (y, t)`` and ``g_c = -dt^2 + (-t) g_ij(y, t) dy^i dy^j``.
    """
    if model.m != 4:
        raise MeaninglessDimension("the Robertson-Walker probe needs m = 4")
    src = SymbolicSource(model)
    n = model.m - 1
    lo = model.domain[:n, 0]
    hi = model.domain[:n, 1]
    mid, half = 0.5 * (lo + hi), 0.25 * (hi - lo)
    rng = np.random.default_rng(seed)
    ys = mid + half * rng.uniform(-1.0, 1.0, size=(n_samples, n))
    tlo = model.domain[-1, 0]
    ts = np.array(t_values) if t_values is not None else -np.linspace(0.1, 0.5, 5) * min(1.0, abs(tlo))
    st = 2e-2 * model.scale if step is None else step

    def block(y, t):
        return src.block_metric(np.append(y, t))

    # (1) the boundary has constant curvature
    K0 = []
    for y in ys[:curvature_points]:
        h0 = block(y, 0.0)
        K0 += _sectional(h0, _intrinsic_riemann(lambda u: block(u, 0.0), y, st))
    K0 = np.array(K0)
    kscale = max(1.0, float(np.max(np.abs(K0))))
    if float(np.ptp(K0)) > 1e-5 * kscale:
        raise HypothesisFailed("curvature", f"boundary sectional curvatures spread {np.ptp(K0):.3g}")
    # (2) the flow maps are homotheties: g_ij(y, t) = c(t) g_ij(y, 0)
    c_of_t = []
    for t in ts:
        ratios = []
        for y in ys:
            g0, gt = block(y, 0.0), block(y, t)
            ev = np.linalg.eigvals(np.linalg.solve(g0, gt)).real
            ratios.extend(ev.tolist())
        ratios = np.array(ratios)
        spread = float(np.ptp(ratios) / abs(np.mean(ratios)))
        if spread > 1e-5:
            raise HypothesisFailed("homothety", f"pullback ratio spread {spread:.3g} at t={t}")
        c_of_t.append(float(np.mean(ratios)))
    c_of_t = np.array(c_of_t)
    f2 = -ts * c_of_t  # g_c restricted to the leaf is f(t)^2 g_S with g_S = g_ij(., 0)
    # (a) constant curvature of the leaves in g_c, (b) warped-product residual
    leaves = []
    warp_res = 0.0
    for t, c, ff in zip(ts, c_of_t, f2):
        hl = lambda u, t=t: -t * block(u, t)
        Ks = []
        for y in ys[:curvature_points]:
            Ks += _sectional(hl(y), _intrinsic_riemann(hl, y, st))
        Ks = np.array(Ks)
        leaves.append({"t": float(t), "C": float(np.mean(Ks)), "spread": float(np.ptp(Ks)),
                       "f2": float(ff)})
        for y in ys:
            gc = -t * block(y, t)
            warp_res = max(warp_res, float(np.max(np.abs(gc - ff * block(y, 0.0)))) / ff)
    Cs = np.array([l["C"] for l in leaves])
    cscale = max(float(np.max(np.abs(Cs))), 1e-300)
    const_ok = all(l["spread"] <= 1e-5 * max(1.0, abs(l["C"])) for l in leaves)
    if np.all(np.abs(Cs) < 1e-8):
        C0, fit_rel, flat = 0.0, 0.0, True
    else:
        C0 = float(np.mean(Cs * f2))
        fit_rel = float(np.max(np.abs(Cs - C0 / f2) / np.abs(C0 / f2)))
        flat = False
    return {"model": model.name, "boundary_curvature": float(np.mean(K0)),
            "homothety_ratio": c_of_t.tolist(), "t": ts.tolist(), "leaves": leaves,
            "C0": C0, "flat": flat, "fit_relative_error": fit_rel,
            "warped_product_residual": float(warp_res), "leaf_curvature_constant": const_ok,
            "robertson_walker": bool(const_ok and warp_res < 1e-4 and fit_rel < 1e-3),
            "curvature_scale": cscale}


def constant_curvature_leaf_scan(model: MetricModel, dist: SimultaneityDistribution,
                                 t_values: Sequence[float], points_per_leaf: int = 2,
                                 step: float | None = None, seed: int = 0) -> list[dict]:
    """Sectional-curvature spread on leaves of ``dist`` for the representative
    metric of :func:`metric_for_distribution` (evidence only)."""
    if model.m < 3:
        raise MeaninglessDimension("leaves are curves when m = 2")
    rep = metric_for_distribution(model, dist)
    k = model.normal_index
    n = model.m - 1
    st = 2e-2 * model.scale if step is None else step
    rng = np.random.default_rng(seed)
    yb = np.delete(rep.base, k)
    rows = []
    for t in t_values:
        def level(s):
            x = rep.base.copy()
            x[k] = s
            return model.tau(x) - t

        x0 = rep.base.copy()
        x0[k] = brentq(level, model.domain[k, 0], model.domain[k, 1], xtol=1e-15)

        xm = rep.label(x0)

        def leaf_metric(y, x0=x0, xm=xm):
            x = dist.leaf_point(x0, y)
            T = np.insert(np.eye(n), k, dist.slope(x), axis=0)  # columns: leaf tangents
            return T.T @ rep.metric_on_leaf(x, xm) @ T

        Ks = []
        for _ in range(points_per_leaf):
            y = yb + 0.1 * model.scale * rng.uniform(-1.0, 1.0, n)
            Ks += _sectional(leaf_metric(y), _intrinsic_riemann(leaf_metric, y, st))
        Ks = np.array(Ks)
        rows.append({"t": float(t), "mean": float(np.mean(Ks)), "variance": float(np.var(Ks)),
                     "samples": Ks.tolist()})
    return rows
