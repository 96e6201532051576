"""Cometric models, the degenerate hypersurface and the covariant metric.

A model is a smooth symmetric cometric ``G*`` (components on coordinate
covectors) given by expressions in a single chart.  Where ``det G*`` has a
simple zero the covariant metric ``g = inv(G*)`` blows up like ``1/tau``;
``tau * g`` and ``tau * Gamma`` stay smooth and are exposed through
regularized evaluators.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from . import expr as ex
from .errors import (DegeneratePoint, ExprError, NotInDomain, NotOnBoundary, RankError,
                     SpecError)
from .limits import RichardsonResult, regularize, richardson_along

__all__ = [
    "MetricModel", "PolarPoint", "Verdict", "load_model", "model_from_dict",
    "degeneracy_value", "check_transverse", "check_annihilator_tangent",
    "covariant_metric_at", "tau_metric_at", "validate", "symbolic_det",
]

DEFAULT_TOLERANCES = {
    "transverse": 1e-7,
    "rank": 1e-8,
    "angle": 1e-6,
    "degeneracy_rel": 1e-9,
}


def symbolic_det(mat: Sequence[Sequence[ex.Expr]]) -> ex.Expr:
    """Determinant by cofactor expansion along the first row."""
    n = len(mat)
    memo: dict[tuple[int, tuple[int, ...]], ex.Expr] = {}

    def minor(row: int, cols: tuple[int, ...]) -> ex.Expr:
        key = (row, cols)
        if key in memo:
            return memo[key]
        if len(cols) == 1:
            return mat[row][cols[0]]
        acc: ex.Expr = ex.ZERO
        for j, c in enumerate(cols):
            entry = mat[row][c]
            if isinstance(entry, ex.Const) and entry.value == 0.0:
                continue
            term = ex.mul(entry, minor(row + 1, cols[:j] + cols[j + 1:]))
            acc = ex.add(acc, term) if j % 2 == 0 else ex.sub(acc, term)
        memo[key] = acc
        return acc

    return minor(0, tuple(range(n)))


@dataclass
class Verdict:
    ok: bool
    detail: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return bool(self.ok)


@dataclass
class PolarPoint:
    x: np.ndarray
    mu: np.ndarray


class MetricModel:
    """A cometric field on a coordinate box.

    Attributes of note: ``coords`` (names), ``m``, ``cometric_exprs`` (m x m
    nested list of :class:`Expr`), ``tau_expr`` (declared equation of the
    degenerate set, or ``det G*``), ``domain`` (array of ``[lo, hi]``).
    """

    def __init__(self, name: str, coords: Sequence[str], cometric: Sequence[Sequence[ex.Expr]],
                 domain: Sequence[Sequence[float]], tau: ex.Expr | None = None,
                 tolerances: Mapping[str, float] | None = None, source: Mapping | None = None):
        self.name = name
        self.coords = tuple(coords)
        self.m = len(self.coords)
        self.cometric_exprs = [[cometric[min(i, j)][max(i, j)] for j in range(self.m)]
                               for i in range(self.m)]
        self.domain = np.asarray(domain, dtype=float)
        self.det_expr = symbolic_det(self.cometric_exprs)
        self.tau_declared = tau is not None
        self.tau_expr = tau if tau is not None else self.det_expr
        self.tolerances = dict(DEFAULT_TOLERANCES)
        self.tolerances.update(tolerances or {})
        self.source = dict(source) if source is not None else None
        self._compile()

    # -- construction helpers ------------------------------------------------
    def _compile(self):
        m, c = self.m, self.coords
        upper = [(i, j) for i in range(m) for j in range(i, m)]
        self._upper = upper
        sym = np.empty((m, m), dtype=int)
        for k, (i, j) in enumerate(upper):
            sym[i, j] = sym[j, i] = k
        self._symidx = sym
        self._jetidx = sym[None, :, :] + len(upper) * np.arange(m + 1)[:, None, None]
        entries = [self.cometric_exprs[i][j] for i, j in upper]
        d1 = [ex.derive(e, c[a]) for a in range(m) for e in entries]
        self._d1_exprs = d1
        self._f0 = ex.compile_expr(entries + d1, c)
        tau = self.tau_expr
        dtau = [ex.derive(tau, v) for v in c]
        ddtau = [ex.derive(d, v) for d in dtau for v in c]
        self._ftau = ex.compile_expr([tau] + dtau + ddtau, c)
        ddet = [ex.derive(self.det_expr, v) for v in c]
        self._fdet = ex.compile_expr([self.det_expr] + ddet, c)

    @cached_property
    def _f2(self):
        m, c = self.m, self.coords
        n_up = len(self._upper)
        d2 = []
        for a in range(m):
            for b in range(m):
                for k in range(n_up):
                    d2.append(ex.derive(self._d1_exprs[a * n_up + k], c[b]))
        return ex.compile_expr(d2, c)

    def _sym(self, flat: Sequence[float]) -> np.ndarray:
        return np.asarray(flat, dtype=float)[self._symidx]

    # -- pointwise evaluators ------------------------------------------------
    def _jet1(self, x) -> tuple[np.ndarray, np.ndarray]:
        jet = np.asarray(self._f0(x), dtype=float)[self._jetidx]
        return jet[0], jet[1:]

    def cometric(self, x) -> np.ndarray:
        return self._jet1(x)[0]

    def dcometric(self, x) -> np.ndarray:
        """``out[a, i, j] = d_a G*_ij``."""
        return self._jet1(x)[1]

    def ddcometric(self, x) -> np.ndarray:
        """``out[a, b, i, j] = d_a d_b G*_ij``."""
        vals = self._f2(x)
        n_up = len(self._upper)
        m = self.m
        out = np.empty((m, m, m, m))
        for a in range(m):
            for b in range(m):
                base = (a * m + b) * n_up
                out[a, b] = self._sym(vals[base: base + n_up])
        return out

    def tau(self, x) -> float:
        return self._ftau(x)[0]

    def dtau(self, x) -> np.ndarray:
        return np.asarray(self._ftau(x)[1: 1 + self.m])

    def ddtau(self, x) -> np.ndarray:
        return np.asarray(self._ftau(x)[1 + self.m:]).reshape(self.m, self.m)

    def det(self, x) -> float:
        return self._fdet(x)[0]

    def ddet(self, x) -> np.ndarray:
        return np.asarray(self._fdet(x)[1:])

    # -- scales and tolerances -----------------------------------------------
    @cached_property
    def scale(self) -> float:
        if "scale" in self.tolerances:
            return float(self.tolerances["scale"])
        return float(np.min(self.domain[:, 1] - self.domain[:, 0]) / 2.0)

    @cached_property
    def center(self) -> np.ndarray:
        return self.domain.mean(axis=1)

    @cached_property
    def normal_index(self) -> int:
        """Coordinate used as the transversal direction for D-infinity."""
        if "normal_index" in self.tolerances:
            return int(self.tolerances["normal_index"])
        g = np.abs(self.dtau(self.center))
        if not np.any(g > 0):
            g = np.abs(self.ddet(self.center))
        if not np.any(g > 0):
            # even-order zero at the center: the second derivative picks the axis
            g = np.abs(np.diag(self.ddtau(self.center)))
        return int(np.argmax(g))

    def tol_degeneracy(self, x) -> float:
        return self.tolerances["degeneracy_rel"] * (1.0 + float(np.max(np.abs(self.cometric(x)))))

    @cached_property
    def reg_delta(self) -> float:
        return 0.01 * self.scale

    @cached_property
    def reg_guard(self) -> float:
        k = self.normal_index
        # Direct formulas lose about eps/|tau| relative accuracy, i.e. 1e-12
        # at the guard; below it the stencil takes over.
        return 0.01 * self.reg_delta * abs(self.dtau(self.center)[k])

    def in_domain(self, x, pad: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.domain[:, 0] - pad) and np.all(x <= self.domain[:, 1] + pad))

    # -- raw covariant quantities --------------------------------------------
    def metric(self, x) -> np.ndarray:
        """Covariant metric ``inv(G*)`` with no degeneracy check."""
        return np.linalg.inv(self.cometric(x))

    def christoffel(self, x) -> np.ndarray:
        """Coordinate Christoffel symbols ``Gamma[c, a, b]`` (second kind)."""
        G, dG = self._jet1(x)
        g = np.linalg.inv(G)
        return _christoffel_from(G, dG, g)

    # -- regularized (smooth across D-infinity) quantities -------------------
    @cached_property
    def tau_metric(self):
        """``x -> tau(x) * g(x)``, well conditioned near ``tau = 0``."""
        def raw(x):
            return self.tau(x) * np.linalg.inv(self.cometric(x))
        return regularize(raw, self.tau, self.normal_index, self.reg_delta, self.reg_guard)

    @cached_property
    def tau_christoffel(self):
        """``x -> tau(x) * Gamma[c, a, b](x)``, well conditioned near ``tau = 0``."""
        def raw(x):
            G, dG = self._jet1(x)
            return self.tau(x) * _christoffel_from(G, dG, np.linalg.inv(G))

        def batch(X):
            jet = np.array([self._f0(x) for x in X])[:, self._jetidx]
            G, dG = jet[:, 0], jet[:, 1:]
            taus = np.array([self.tau(x) for x in X])
            return taus[:, None, None, None] * _christoffel_from(G, dG, np.linalg.inv(G))
        return regularize(raw, self.tau, self.normal_index, self.reg_delta, self.reg_guard,
                          batch=batch)

    @cached_property
    def radical_field(self):
        """``x -> G* dtau / tau``; smooth when the radical is spanned by ``dtau``."""
        def raw(x):
            return self.cometric(x) @ self.dtau(x) / self.tau(x)
        return regularize(raw, self.tau, self.normal_index, self.reg_delta, self.reg_guard)

    # -- locating D-infinity -------------------------------------------------
    def boundary_point(self, x, axis: int | None = None) -> np.ndarray:
        """Project ``x`` onto ``tau = 0`` along coordinate ``axis``."""
        k = self.normal_index if axis is None else axis
        x = np.array(x, dtype=float)
        lo, hi = self.domain[k]

        def f(s):
            y = x.copy()
            y[k] = s
            return self.tau(y)

        s_grid = np.linspace(lo, hi, 201)
        vals = np.array([f(s) for s in s_grid])
        if abs(f(x[k])) == 0.0:
            return x
        sign_change = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0)[0]
        if sign_change.size:
            j = sign_change[np.argmin(np.abs(s_grid[sign_change] - x[k]))]
            if vals[j] == 0.0:
                x[k] = s_grid[j]
            elif vals[j + 1] == 0.0:
                x[k] = s_grid[j + 1]
            else:
                x[k] = brentq(f, s_grid[j], s_grid[j + 1], xtol=1e-15, rtol=1e-15)
            return x
        # even-order zero: no sign change, minimize |tau| instead
        j = int(np.argmin(np.abs(vals)))
        a, b = s_grid[max(j - 1, 0)], s_grid[min(j + 1, len(s_grid) - 1)]
        res = minimize_scalar(lambda s: abs(f(s)), bounds=(a, b), method="bounded",
                              options={"xatol": 1e-14})
        x[k] = res.x
        if abs(f(res.x)) > self.tol_degeneracy(x):
            raise NotOnBoundary(f"no zero of tau on the line through {x.tolist()}")
        return x

    def boundary_samples(self, n: int, seed: int = 0, margin: float = 0.1) -> np.ndarray:
        """``n`` seeded points on D-infinity, boundary coordinates drawn inside
        the box shrunk by ``margin`` of its width."""
        rng = np.random.default_rng(seed)
        k = self.normal_index
        lo = self.domain[:, 0] + margin * (self.domain[:, 1] - self.domain[:, 0])
        hi = self.domain[:, 1] - margin * (self.domain[:, 1] - self.domain[:, 0])
        out = []
        for _ in range(n):
            x = rng.uniform(lo, hi)
            x[k] = self.center[k]
            out.append(self.boundary_point(x))
        return np.array(out)

    def interior_samples(self, n: int, seed: int = 0, min_tau: float = 0.05,
                         margin: float = 0.1) -> np.ndarray:
        """``n`` seeded points with ``|tau| >= min_tau * scale``."""
        rng = np.random.default_rng(seed)
        lo = self.domain[:, 0] + margin * (self.domain[:, 1] - self.domain[:, 0])
        hi = self.domain[:, 1] - margin * (self.domain[:, 1] - self.domain[:, 0])
        out = []
        while len(out) < n:
            x = rng.uniform(lo, hi)
            if abs(self.tau(x)) >= min_tau * self.scale:
                out.append(x)
        return np.array(out)

    def point(self, mapping: Mapping[str, float]) -> np.ndarray:
        return np.array([float(mapping.get(c, 0.0)) for c in self.coords])

    def with_cometric(self, cometric, name: str | None = None, tau: ex.Expr | None = None,
                      keep_tau: bool = True) -> "MetricModel":
        new_tau = tau if tau is not None else (self.tau_expr if keep_tau and self.tau_declared else None)
        return MetricModel(name or self.name, self.coords, cometric, self.domain, new_tau,
                           self.tolerances, None)

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "dimension": self.m,
            "coordinates": list(self.coords),
            "cometric": [[ex.to_string(e) for e in row] for row in self.cometric_exprs],
            "domain": {c: [float(a), float(b)] for c, (a, b) in zip(self.coords, self.domain)},
        }
        if self.tau_declared:
            d["tau"] = ex.to_string(self.tau_expr)
        return d

    def __repr__(self):
        return f"MetricModel({self.name!r}, m={self.m})"


def _christoffel_from(G: np.ndarray, dG: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Second-kind symbols from the cometric jet; leading axes are batch axes."""
    m = G.shape[-1]
    gg = g[..., None, :, :]
    # d_a g = -g (d_a G*) g
    dg = -(gg @ dG @ gg)
    # lower[d, a, b] = 1/2 (d_a g_bd + d_b g_ad - d_d g_ab)
    first = np.moveaxis(dg, -1, -3)
    lower = 0.5 * (first + np.swapaxes(first, -1, -2) - dg)
    flat = lower.reshape(lower.shape[:-3] + (m, m * m))
    return (G @ flat).reshape(lower.shape)


# -- loading ------------------------------------------------------------------

def model_from_dict(doc: Mapping[str, Any], name: str | None = None) -> MetricModel:
    for key in ("dimension", "coordinates", "cometric", "domain"):
        if key not in doc:
            raise SpecError(f"missing field {key!r}")
    m = doc["dimension"]
    coords = list(doc["coordinates"])
    if not isinstance(m, int) or m < 2:
        raise SpecError("dimension must be an integer >= 2")
    if len(coords) != m or len(set(coords)) != m:
        raise SpecError("coordinates must be m distinct names")
    rows = doc["cometric"]
    if len(rows) != m or any(len(r) != m for r in rows):
        raise SpecError("cometric must be an m x m array")
    parsed = [[None] * m for _ in range(m)]
    for i in range(m):
        for j in range(m):
            src = rows[i][j]
            src = str(src) if isinstance(src, (int, float)) else src
            try:
                parsed[i][j] = ex.parse(src, coords)
            except ExprError as err:
                raise SpecError(f"cometric[{i}][{j}]: {err}") from err
    for i in range(m):
        for j in range(i + 1, m):
            if parsed[i][j] != parsed[j][i]:
                raise SpecError(f"cometric is asymmetric at [{i}][{j}]")
    dom = doc["domain"]
    try:
        domain = [[float(dom[c][0]), float(dom[c][1])] for c in coords]
    except (KeyError, TypeError, IndexError) as err:
        raise SpecError(f"domain must give [lo, hi] for every coordinate: {err}") from err
    if any(lo >= hi for lo, hi in domain):
        raise SpecError("domain intervals must have lo < hi")
    tau = None
    if doc.get("tau") is not None:
        try:
            tau = ex.parse(str(doc["tau"]), coords)
        except ExprError as err:
            raise SpecError(f"tau: {err}") from err
    tol = doc.get("tolerances") or {}
    return MetricModel(name or doc.get("name") or "model", coords, parsed, domain, tau,
                       {k: float(v) for k, v in tol.items()}, doc)


def _builtin_dir() -> Path:
    return Path(__file__).resolve().parent / "models"


def load_model(spec) -> MetricModel:
    """Load a model from a path, a bare shipped name (``"m1"``), or a dict."""
    if isinstance(spec, MetricModel):
        return spec
    if isinstance(spec, Mapping):
        return model_from_dict(spec)
    path = Path(spec)
    if not path.exists():
        cand = _builtin_dir() / f"{spec}.json"
        if not cand.exists():
            raise SpecError(f"no such model file or shipped model: {spec}")
        path = cand
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise SpecError(f"{path}: invalid JSON: {err}") from err
    return model_from_dict(doc, name=doc.get("name") or path.stem)


# -- model-level operations ----------------------------------------------------

def degeneracy_value(model: MetricModel, p) -> float:
    p = np.asarray(p, dtype=float)
    if not model.in_domain(p):
        raise NotInDomain(f"{p.tolist()} outside the domain")
    return float(np.linalg.det(model.cometric(p)))


def _as_polar_point(model: MetricModel, p) -> PolarPoint:
    if isinstance(p, PolarPoint):
        return p
    x = np.asarray(p, dtype=float)
    G = model.cometric(x)
    _, sv, vt = np.linalg.svd(G)
    mu = vt[-1]
    mu = mu / np.linalg.norm(mu)
    j = int(np.argmax(np.abs(mu)))
    if mu[j] < 0:
        mu = -mu
    return PolarPoint(x, mu)


def check_transverse(model: MetricModel, p) -> Verdict:
    pp = _as_polar_point(model, p)
    grad = model.ddet(pp.x)
    norm = float(np.linalg.norm(grad))
    return Verdict(norm > model.tolerances["transverse"], {"gradient": grad.tolist(), "norm": norm})


def check_annihilator_tangent(model: MetricModel, p) -> Verdict:
    pp = _as_polar_point(model, p)
    sv = np.linalg.svd(model.cometric(pp.x), compute_uv=False)
    if sv[-2] <= model.tolerances["rank"] or sv[-1] > model.tol_degeneracy(pp.x):
        raise RankError(f"radical is not one-dimensional at {pp.x.tolist()} (singular values {sv.tolist()})")
    grad = model.ddet(pp.x)
    if np.linalg.norm(grad) == 0.0:
        grad = model.dtau(pp.x)
    cosang = abs(float(pp.mu @ grad)) / (np.linalg.norm(pp.mu) * np.linalg.norm(grad))
    angle = math.acos(min(1.0, cosang))
    return Verdict(angle <= model.tolerances["angle"],
                   {"radical": pp.mu.tolist(), "ddet": grad.tolist(), "angle": angle})


def covariant_metric_at(model: MetricModel, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    G = model.cometric(q)
    if abs(np.linalg.det(G)) <= model.tol_degeneracy(q):
        raise DegeneratePoint(f"cometric is degenerate at {q.tolist()}")
    return np.linalg.inv(G)


def tau_metric_at(model: MetricModel, p, return_estimate: bool = False):
    """``tau * g`` at ``p``; on D-infinity the value is a Richardson limit."""
    p = np.asarray(p, dtype=float)
    G = model.cometric(p)
    if abs(np.linalg.det(G)) > model.tol_degeneracy(p):
        val = model.tau(p) * np.linalg.inv(G)
        return (val, None) if return_estimate else val
    k = model.normal_index
    e = np.zeros(model.m)
    e[k] = 1.0
    side = 1.0 if p[k] + 0.1 * model.scale <= model.domain[k, 1] else -1.0
    est: RichardsonResult = richardson_along(
        lambda y: model.tau(y) * np.linalg.inv(model.cometric(y)), p, side * e, 0.1 * model.scale)
    if not est.extends:
        from .errors import ExtrapolationDiverged
        raise ExtrapolationDiverged("tau*g did not stabilize", entry="tau_g")
    return (est.limit, est) if return_estimate else est.limit


def signature_sides(model: MetricModel, p, offset: float | None = None) -> dict:
    """Eigenvalue signs of ``g`` at ``p +- offset e_k``."""
    k = model.normal_index
    off = 0.05 * model.scale if offset is None else offset
    out = {}
    for label, sgn in (("plus", 1.0), ("minus", -1.0)):
        y = np.array(p, dtype=float)
        y[k] += sgn * off
        ev = np.linalg.eigvalsh(model.metric(y))
        out[label] = {"positive": int(np.sum(ev > 0)), "negative": int(np.sum(ev < 0))}
    return out


def validate(model: MetricModel, n_samples: int = 12, seed: int = 0) -> dict:
    """Check D1 (transversality) and D2 (radical annihilator tangent) on
    seeded boundary samples; returns a JSON-ready report."""
    try:
        pts = model.boundary_samples(n_samples, seed=seed)
    except NotOnBoundary as err:
        return {"model": model.name, "D1": False, "D2": False, "points": [],
                "reason": str(err)}
    d1_all = True
    d2_all = True
    rows = []
    for x in pts:
        v1 = check_transverse(model, x)
        row = {"point": x.tolist(), "D1": bool(v1), "ddet_norm": v1.detail["norm"]}
        d1_all &= bool(v1)
        if v1:
            try:
                v2 = check_annihilator_tangent(model, x)
                row["D2"] = bool(v2)
                row["angle"] = v2.detail["angle"]
            except RankError as err:
                row["D2"] = False
                row["reason"] = str(err)
        else:
            row["D2"] = False
        d2_all &= row["D2"]
        rows.append(row)
    report = {"model": model.name, "D1": bool(d1_all), "D2": bool(d2_all), "points": rows}
    if d1_all and d2_all:
        sig = signature_sides(model, pts[0])
        report["signature"] = sig
        tau_ok = True
        for x in pts:
            if abs(model.tau(x)) > 1e-9 * model.scale:
                tau_ok = False
        report["tau_consistent"] = tau_ok
    return report
