"""Natural parameter along crossing pregeodesics and the natural chart.

Along a crossing pregeodesic parametrized by ``t = tau`` let
``Phi = 1/g(c', c')``, ``Psi = Phi / t`` and ``psi = 1 / (2 sqrt(Psi))``.  The
natural parameter is

    s(t) = sgn(t) * (integral_0^|t| psi(sgn(t) x) / sqrt(x) dx)^2
         = sgn(t) * 4 * (integral_0^sqrt|t| psi(sgn(t) w^2) dw)^2,

the second form (substitution ``x = w^2``) having a smooth integrand.  It
satisfies ``g(dc/ds, dc/ds) = 1/s``.
"""
from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import chebyshev as C
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import RegularGridInterpolator
from scipy.optimize import brentq

from .errors import FoldedChart, QuadratureFailure, SignError
from .geodesic import Trajectory, integrate_pregeodesic
from .metric import MetricModel

__all__ = [
    "gl_integral", "natural_parameter_fn", "NaturalParameter", "natural_parameter",
    "crossing_law_residuals", "arc_length_to_boundary", "SmoothnessReport",
    "smooth_extension_check", "NaturalChart", "build_natural_chart",
    "validate_natural_chart", "shear_chart",
]

GL_START = 64
GL_TOL = 1e-11


def gl_integral(fn: Callable[[np.ndarray], np.ndarray], a: float, b: float,
                n0: int = GL_START, tol: float = GL_TOL, max_nodes: int = 4096) -> float:
    """Gauss-Legendre quadrature on ``[a, b]``, doubling the node count until
    successive results differ by less than ``tol``."""
    prev = None
    n = n0
    while n <= max_nodes:
        x, w = leggauss(n)
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        val = float(half * np.sum(w * fn(mid + half * x)))
        if prev is not None and abs(val - prev) < tol:
            return val
        prev = val
        n *= 2
    raise QuadratureFailure(f"Gauss-Legendre did not converge on [{a}, {b}]")


def natural_parameter_fn(psi: Callable[[float], float], t: float, **kw) -> float:
    """``s(t)`` for a scalar function ``psi`` of the signed parameter."""
    if t == 0.0:
        return 0.0
    sg = 1.0 if t > 0 else -1.0
    vpsi = np.vectorize(lambda w: psi(sg * w * w))
    integral = gl_integral(vpsi, 0.0, math.sqrt(abs(t)), **kw)
    return sg * 4.0 * integral ** 2


class _HalfParam:
    """Chebyshev representation of ``w -> psi(sg w^2)`` on ``[0, W]`` and
    its antiderivative, so ``s`` and ``ds/dt`` are cheap to evaluate."""

    def __init__(self, psi: Callable[[float], float], sg: float, W: float,
                 n0: int = 32, tol: float = GL_TOL, max_nodes: int = 1024):
        self.sg = sg
        self.W = W
        prev = None
        n = n0
        while n <= max_nodes:
            nodes = np.cos(np.pi * (np.arange(n) + 0.5) / n)  # first-kind points on [-1, 1]
            w = 0.5 * W * (nodes + 1.0)
            vals = np.array([psi(sg * wi * wi) for wi in w])
            coef = C.chebfit(nodes, vals, n - 1)
            anti = C.chebint(coef, lbnd=-1.0) * (0.5 * W)
            total = C.chebval(1.0, anti)
            if prev is not None and abs(total - prev) < tol:
                break
            prev = total
            n *= 2
        else:
            raise QuadratureFailure("psi representation did not converge")
        self.coef = coef
        self.anti = anti
        self.nodes_used = n

    def _u(self, w):
        return 2.0 * w / self.W - 1.0

    def psi(self, w):
        return C.chebval(self._u(w), self.coef)

    def integral(self, w):
        return C.chebval(self._u(w), self.anti)


@dataclass
class NaturalParameter:
    """Natural parameter of one crossing trajectory."""

    traj: Trajectory = field(repr=False)
    halves: dict = field(repr=False)
    t_min: float
    t_max: float

    def Psi(self, t: float) -> float:
        return _Psi(self.traj, t)

    def s(self, t: float) -> float:
        if t == 0.0:
            return 0.0
        hp = self.halves[1.0 if t > 0 else -1.0]
        return hp.sg * 4.0 * float(hp.integral(math.sqrt(abs(t)))) ** 2

    def ds_dt(self, t: float) -> float:
        """``ds/dt = 2 I psi(t) / sqrt|t|`` with ``I`` the inner integral."""
        if t == 0.0:
            hp = self.halves[1.0]
            return 4.0 * float(hp.psi(0.0)) ** 2
        hp = self.halves[1.0 if t > 0 else -1.0]
        w = math.sqrt(abs(t))
        return 4.0 * float(hp.integral(w)) * float(hp.psi(w)) / w

    def t_of_s(self, s: float) -> float:
        if s == 0.0:
            return 0.0
        lo, hi = (0.0, self.t_max) if s > 0 else (self.t_min, 0.0)
        if not (self.s(lo) <= s <= self.s(hi)):
            raise QuadratureFailure(f"s={s} outside the integrated range [{self.s(self.t_min)}, {self.s(self.t_max)}]")
        return brentq(lambda t: self.s(t) - s, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=200)

    @property
    def s_range(self) -> tuple[float, float]:
        return self.s(self.t_min), self.s(self.t_max)


def _Psi(traj: Trajectory, t: float) -> float:
    model = traj.model
    z = traj._state(t)
    x, v = z[: model.m], z[model.m:]
    dt = float(model.dtau(x) @ v)
    return dt * dt / float(v @ model.tau_metric(x) @ v)


def natural_parameter(traj: Trajectory) -> NaturalParameter:
    """Natural parameter ``s(t)`` for a crossing trajectory (``t = tau``)."""
    t_min, t_max = traj.t_range
    halves = {}
    for sg, tend in ((1.0, t_max), (-1.0, t_min)):
        W = math.sqrt(abs(tend)) * (1.0 - 1e-12)

        def psi(x, _sg=sg):
            P = _Psi(traj, x)
            if not P > 0.0:
                raise SignError(f"Psi <= 0 at t={x}: the standing positivity assumption fails")
            return 0.5 / math.sqrt(P)

        halves[sg] = _HalfParam(psi, sg, W)
    np_ = NaturalParameter(traj, halves, t_min * (1.0 - 1e-12), t_max * (1.0 - 1e-12))
    traj.s = np.array([np_.s(t) if t_min < t < t_max else np.nan for t in traj.t])
    return np_


def crossing_law_residuals(nat: NaturalParameter, s_values, fd_step: float = 1e-4) -> np.ndarray:
    """``g(dc/ds, dc/ds) * s - 1`` at the requested ``s``; ``ds/dt`` by a
    fourth-order difference of the quadrature and ``g`` from the cometric."""
    model = nat.traj.model
    out = []
    for s in s_values:
        t = nat.t_of_s(s)
        x = nat.traj.x_at(t)
        cp = nat.traj.velocity_at(t)
        h = fd_step * max(abs(t), 1e-3)
        sp = (-nat.s(t + 2 * h) + 8 * nat.s(t + h) - 8 * nat.s(t - h) + nat.s(t - 2 * h)) / (12 * h)
        gcc = float(cp @ model.metric(x) @ cp)
        out.append(gcc * s / sp ** 2 - 1.0)
    return np.array(out)


def arc_length_to_boundary(nat: NaturalParameter, t: float) -> float:
    """``g``-length (proper time on the Lorentz side) of the curve between
    parameter ``t`` and the degenerate set, by adaptive quadrature in
    ``w = sqrt|t|``."""
    from scipy.integrate import quad
    model = nat.traj.model
    sg = 1.0 if t > 0 else -1.0

    def integrand(w):
        tt = sg * w * w
        x = nat.traj.x_at(tt)
        cp = nat.traj.velocity_at(tt)
        return 2.0 * w * math.sqrt(abs(float(cp @ model.metric(x) @ cp)))

    val, _ = quad(integrand, 0.0, math.sqrt(abs(t)), epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


# -- smooth extension of psi across t = 0 ------------------------------------

@dataclass
class SmoothnessReport:
    samples: dict
    derivatives_plus: list
    derivatives_minus: list
    gaps: list
    tolerances: list
    gaps_by_window: dict
    verdict: bool

    def as_dict(self) -> dict:
        return {"derivatives_plus": self.derivatives_plus, "derivatives_minus": self.derivatives_minus,
                "gaps": self.gaps, "tolerances": self.tolerances,
                "gaps_by_window": self.gaps_by_window, "verdict": bool(self.verdict)}


def _one_sided_derivatives(F: Callable[[float], float], side: float, H: float,
                           degree: int, order: int) -> np.ndarray:
    n = 3 * degree
    nodes = 0.5 * H * (1.0 - np.cos(np.pi * (np.arange(n) + 0.5) / n))
    vals = np.array([F(side * x) for x in nodes])
    coef = np.polynomial.polynomial.polyfit(side * nodes, vals, degree)
    return np.array([math.factorial(k) * coef[k] for k in range(order + 1)])


def smooth_extension_check(psi, order: int = 4, h0: float = 0.2, windows: int = 3,
                           degree: int = 10) -> SmoothnessReport:
    """Numerical smoothness of ``F(t) = sgn(t) (int_0^t psi/sqrt(x))^2`` at 0.

    ``psi`` is a callable of the signed parameter (or an expression string in
    ``t``).  One-sided derivatives up to ``order`` are estimated from
    polynomial fits on ``[0, h]`` and ``[-h, 0]`` for
    ``h = h0 * 2**-j``, ``j < windows``; the verdict requires the gap at
    order ``k`` to be below ``1e-5 * 10**(k-1)`` on every window.
    """
    if order > 4 or order < 0:
        raise ValueError("order must be between 0 and 4")
    if isinstance(psi, str):
        from . import expr as ex
        e = ex.parse(psi, ["t"])
        f = ex.compile_expr([e], ["t"])
        psi_fn = lambda t: f([t])[0]
    else:
        psi_fn = psi
    F = lambda t: natural_parameter_fn(psi_fn, t, tol=1e-13)
    tols = [1e-5 * 10.0 ** (k - 1) for k in range(order + 1)]
    by_window = {}
    dp = dm = None
    ok = True
    for j in range(windows):
        H = h0 * 2.0 ** -j
        dplus = _one_sided_derivatives(F, 1.0, H, degree, order)
        dminus = _one_sided_derivatives(F, -1.0, H, degree, order)
        gaps = np.abs(dplus - dminus)
        by_window[f"{H:.6g}"] = gaps.tolist()
        ok &= bool(np.all(gaps <= np.array(tols)))
        if j == 0:
            dp, dm = dplus, dminus
    samples = {f"{t:.3g}": F(t) for t in (-0.1, -0.01, 0.0, 0.01, 0.1)}
    return SmoothnessReport(samples, dp.tolist(), dm.tolist(), np.abs(dp - dm).tolist(), tols,
                            by_window, ok)


# -- natural chart ------------------------------------------------------------

def worker_threads() -> int:
    """Thread count for grid construction, from ``POLARMETRIC_THREADS``."""
    try:
        return max(1, int(os.environ.get("POLARMETRIC_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class NaturalChart:
    """Sampled natural chart ``zeta(y, s)`` on a boundary grid times an
    ``s`` grid.  ``g[..., a, b]`` is the metric in the chart coordinates
    ``(y_1..y_{m-1}, s)``; it is ``nan`` at ``s = 0``."""

    model: MetricModel = field(repr=False)
    axis: int
    boundary_coords: list
    y_nodes: list
    s_nodes: np.ndarray
    zeta: np.ndarray
    g: np.ndarray
    dzeta_ds: np.ndarray = field(repr=False)
    d2zeta_ds2: np.ndarray = field(repr=False)
    meta: dict = field(default_factory=dict)
    _interp: object = field(default=None, repr=False)

    @property
    def m(self) -> int:
        return self.model.m

    def node_iter(self):
        return itertools.product(*[range(len(n)) for n in self.y_nodes])

    def forward(self, z) -> np.ndarray:
        """Interpolated ``zeta`` at chart coordinates ``z = (y, s)``."""
        if self._interp is None:
            pts = (*self.y_nodes, self.s_nodes)
            method = "cubic" if min(len(p) for p in pts) >= 4 else "linear"
            self._interp = RegularGridInterpolator(pts, self.zeta, method=method)
        return self._interp(np.asarray(z, dtype=float)[None, :])[0]

    def check_folding(self) -> None:
        """Raise :class:`FoldedChart` if the Jacobian of ``zeta`` changes sign."""
        if len(self.s_nodes) < 2 or any(len(n) < 2 for n in self.y_nodes):
            return
        grads = []
        for a, nodes in enumerate(self.y_nodes):
            grads.append(np.gradient(self.zeta, nodes, axis=a))
        grads.append(np.gradient(self.zeta, self.s_nodes, axis=self.m - 1))
        J = np.stack(grads, axis=-1)
        dets = np.linalg.det(J)
        if np.any(np.sign(dets) != np.sign(dets.flat[0])) or np.any(dets == 0):
            raise FoldedChart("the Jacobian of zeta changes sign inside the chart")

    def inverse(self, x, max_iter: int = 50, tol: float = 1e-12) -> np.ndarray:
        """Damped Newton inversion of the interpolated forward map, seeded at
        the nearest grid node."""
        x = np.asarray(x, dtype=float)
        flat = self.zeta.reshape(-1, self.m)
        j = int(np.argmin(np.linalg.norm(flat - x, axis=1)))
        idx = np.unravel_index(j, self.zeta.shape[:-1])
        z = np.array([self.y_nodes[a][idx[a]] for a in range(self.m - 1)] + [self.s_nodes[idx[-1]]])
        lo = np.array([n[0] for n in self.y_nodes] + [self.s_nodes[0]])
        hi = np.array([n[-1] for n in self.y_nodes] + [self.s_nodes[-1]])
        h = 1e-6 * self.model.scale
        for _ in range(max_iter):
            r = self.forward(z) - x
            if np.linalg.norm(r) < tol:
                return z
            J = np.empty((self.m, self.m))
            for b in range(self.m):
                e = np.zeros(self.m)
                e[b] = h
                J[:, b] = (self.forward(np.clip(z + e, lo, hi)) - self.forward(np.clip(z - e, lo, hi))) / (2 * h)
            if abs(np.linalg.det(J)) < 1e-14:
                raise FoldedChart("degenerate Jacobian during inversion")
            step = np.linalg.solve(J, r)
            lam = 1.0
            while lam > 1e-4:
                zn = np.clip(z - lam * step, lo, hi)
                if np.linalg.norm(self.forward(zn) - x) < np.linalg.norm(r):
                    break
                lam *= 0.5
            z = zn
        return z

    def header(self) -> list[str]:
        m = self.m
        gnames = [f"g_{a}{b}" for a in range(m) for b in range(a, m)]
        return [*[f"z{i + 1}" for i in range(m - 1)], "s", *self.model.coords, *gnames]

    def rows(self) -> list[list[float]]:
        m = self.m
        out = []
        for idx in self.node_iter():
            y = [self.y_nodes[a][idx[a]] for a in range(m - 1)]
            for j, s in enumerate(self.s_nodes):
                gv = self.g[idx + (j,)]
                out.append([*y, float(s), *self.zeta[idx + (j,)].tolist(),
                            *[float(gv[a, b]) for a in range(m) for b in range(a, m)]])
        return out


def _default_patch(model: MetricModel, fraction: float = 0.5) -> list[tuple[float, float]]:
    k = model.normal_index
    out = []
    for i in range(model.m):
        if i == k:
            continue
        lo, hi = model.domain[i]
        c, w = 0.5 * (lo + hi), 0.5 * (hi - lo) * fraction
        out.append((c - w, c + w))
    return out


def _trajectory_for(model: MetricModel, y, axis: int, tau_max: float):
    x = np.insert(np.asarray(y, dtype=float), axis, model.center[axis])
    pb = model.boundary_point(x, axis)
    traj = integrate_pregeodesic(model, pb, tau_max=tau_max)
    return traj, natural_parameter(traj)


def build_natural_chart(model: MetricModel, s_range: tuple[float, float] = (-0.5, 0.5),
                        grid: int = 3, n_s: int = 11, patch=None, fd_step: float | None = None,
                        tau_max: float | None = None) -> NaturalChart:
    """Tabulate the natural chart on a boundary grid.

    For every boundary node the crossing pregeodesic is integrated and
    reparametrized by ``s``.  ``d zeta / d s = c'(t) / s'(t)``; the boundary
    derivatives are central differences over extra trajectories started at
    ``y +- fd_step e_i``.  With the default step of ``1e-4 * scale`` the
    truncation and rounding errors are both near ``1e-9``.
    """
    m = model.m
    k = model.normal_index
    patch = _default_patch(model) if patch is None else patch
    y_nodes = [np.linspace(lo, hi, grid) if grid > 1 else np.array([0.5 * (lo + hi)]) for lo, hi in patch]
    s_nodes = np.linspace(s_range[0], s_range[1], n_s)
    fd = 1e-4 * model.scale if fd_step is None else fd_step
    tmax = 0.9 * model.scale if tau_max is None else tau_max
    bcoords = [c for i, c in enumerate(model.coords) if i != k]
    shape = tuple(len(n) for n in y_nodes) + (n_s,)
    zeta = np.empty(shape + (m,))
    dz = np.empty(shape + (m,))
    d2z = np.empty(shape + (m,))
    g = np.full(shape + (m, m), np.nan)

    def sample(nat: NaturalParameter, s: float):
        t = nat.t_of_s(s)
        return nat.traj.x_at(t), t

    def fill(idx):
        y = np.array([y_nodes[a][idx[a]] for a in range(m - 1)])
        traj, nat = _trajectory_for(model, y, k, tmax)
        s_lo, s_hi = nat.s_range
        if s_nodes[0] < s_lo or s_nodes[-1] > s_hi:
            raise QuadratureFailure(f"s range {s_range} exceeds the integrated span [{s_lo:.4g}, {s_hi:.4g}] at y={y.tolist()}")
        neigh = {}
        for i in range(m - 1):
            for off in (-1, 1):
                yy = y.copy()
                yy[i] += off * fd
                neigh[(i, off)] = _trajectory_for(model, yy, k, tmax)[1]
        for j, s in enumerate(s_nodes):
            x, t = sample(nat, s)
            zeta[idx + (j,)] = x
            if s == 0.0:
                dz[idx + (j,)] = nat.traj.velocity_at(0.0) / nat.ds_dt(0.0)
                d2z[idx + (j,)] = np.nan
                continue
            cp = nat.traj.velocity_at(t)
            sp = nat.ds_dt(t)
            ds = cp / sp
            dz[idx + (j,)] = ds
            # second s-derivative by a stencil of d zeta/ds
            hs = 1e-3 * max(abs(s), 1e-2)
            vals = []
            for off in (-2, -1, 1, 2):
                tt = nat.t_of_s(s + off * hs)
                vals.append(nat.traj.velocity_at(tt) / nat.ds_dt(tt))
            d2z[idx + (j,)] = (vals[0] - 8 * vals[1] + 8 * vals[2] - vals[3]) / (12 * hs)
            cols = []
            for i in range(m - 1):
                cols.append((sample(neigh[(i, 1)], s)[0] - sample(neigh[(i, -1)], s)[0]) / (2 * fd))
            cols.append(ds)
            Jz = np.stack(cols, axis=1)
            g[idx + (j,)] = Jz.T @ model.metric(x) @ Jz

    idxs = list(itertools.product(*[range(len(n)) for n in y_nodes]))
    threads = worker_threads()
    if threads > 1 and len(idxs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(fill, idxs))
    else:
        for idx in idxs:
            fill(idx)
    chart = NaturalChart(model, k, bcoords, [np.asarray(n) for n in y_nodes], s_nodes, zeta, g,
                         dz, d2z, {"grid": grid, "n_s": n_s, "s_range": list(s_range),
                                   "fd_step": fd, "patch": [list(p) for p in patch]})
    chart.check_folding()
    return chart


def shear_chart(chart: NaturalChart, alpha: float) -> NaturalChart:
    """Re-express a chart in ``w^m = z^m + alpha z^1`` (other coordinates
    unchanged).  Used as a constructed failure for validation."""
    m = chart.m
    A = np.eye(m)
    A[-1, 0] = -alpha  # d/dw^1 = d/dz^1 - alpha d/dz^m
    g = np.einsum("ai,...ab,bj->...ij", A, chart.g, A)
    s_new = chart.s_nodes
    new = NaturalChart(chart.model, chart.axis, chart.boundary_coords, chart.y_nodes, s_new,
                       chart.zeta, g, chart.dzeta_ds, chart.d2zeta_ds2, dict(chart.meta, shear=alpha))
    new.w_shift = alpha
    return new


def validate_natural_chart(chart: NaturalChart) -> dict:
    """Block form, ``g_mm z^m = 1``, the acceleration law of ``d/dz^m`` and
    the fit ``g_im = C/sqrt|s|``."""
    model = chart.model
    off = ~np.isclose(chart.s_nodes, 0.0)
    g = chart.g[..., off, :, :]
    s = chart.s_nodes[off]
    shift = getattr(chart, "w_shift", 0.0)
    # chart coordinate value of the last coordinate at each node
    zm = np.broadcast_to(s, g.shape[:-2]).copy()
    if shift:
        y1 = np.asarray(chart.y_nodes[0])
        zm = zm + shift * y1.reshape((-1,) + (1,) * (zm.ndim - 1))
    gim = float(np.max(np.abs(g[..., :-1, -1])))
    gmm = float(np.max(np.abs(g[..., -1, -1] * zm - 1.0)))
    # acceleration law: D_s d_s zeta + Gamma(d_s zeta, d_s zeta) = -(1/2s) d_s zeta
    accel = 0.0
    for idx in chart.node_iter():
        for j, sv in enumerate(chart.s_nodes):
            if sv == 0.0:
                continue
            x = chart.zeta[idx + (j,)]
            v = chart.dzeta_ds[idx + (j,)]
            a = chart.d2zeta_ds2[idx + (j,)]
            lhs = a + np.einsum("cab,a,b->c", model.christoffel(x), v, v)
            rhs = -v / (2.0 * sv)
            accel = max(accel, float(np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs)))
    # least-squares C in g_im = C / sqrt|s| on each side
    Cmax = 0.0
    for side in (1.0, -1.0):
        sel = np.sign(s) == side
        if not np.any(sel):
            continue
        basis = 1.0 / np.sqrt(np.abs(s[sel]))
        vals = g[..., sel, :-1, -1]
        vals = np.moveaxis(vals, -2, 0).reshape(sel.sum(), -1)
        coef = basis @ vals / (basis @ basis)
        Cmax = max(Cmax, float(np.max(np.abs(coef))))
    report = {
        "block_form": {"max_abs_g_im": gim, "ok": gim < 1e-6},
        "gmm_law": {"max_abs_gmm_z_minus_1": gmm, "ok": gmm < 1e-8},
        "acceleration_law": {"max_rel_residual": accel, "ok": accel < 1e-5},
        "sqrt_fit": {"max_abs_C": Cmax, "ok": Cmax < 1e-6},
    }
    report["ok"] = all(v["ok"] for v in report.values() if isinstance(v, dict))
    return report
