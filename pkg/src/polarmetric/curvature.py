"""Curvature in natural coordinates and its behaviour at the degenerate set.

Index conventions (all arrays indexed in chart order, normal coordinate
last):

* ``Gamma_lower[c, a, b] = 1/2 (d_b g_ac + d_a g_bc - d_c g_ab)``
* ``Gamma[c, a, b] = g^{cd} Gamma_lower[d, a, b]``
* ``R[d, c, a, b]``: ``R(d_a, d_b) d_c = R^d_cab d_d`` with
  ``R^d_cab = d_a Gamma^d_bc - d_b Gamma^d_ac + Gamma^e_bc Gamma^d_ae - Gamma^e_ac Gamma^d_be``
* ``Ric[c, a] = sum_d R^d_cad`` (contraction on the last slot, so this is
  minus the more common convention), ``RIC[d, c] = Ric[c, a] g^{ad}``,
  ``S = trace(RIC)``
* ``W[d, c, a, b]`` is built with the sign-matched trace correction, which
  makes it trace free.

Two sources feed the same formulas.  :class:`SymbolicSource` uses exact
cometric jets of a model whose chart is already natural
(``g = diag(g_ij, 1/z^m)``); :class:`GridSource` differentiates sampled
metric tables with fourth-order stencils.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import expr as ex
from .errors import (ExtrapolationDiverged, HypothesisFailed, MeaninglessDimension,
                     StencilOutOfRange)
from .limits import fit_exponent, richardson
from .metric import MetricModel

__all__ = [
    "SymbolicSource", "GridSource", "natural_source", "curvature_from_jets",
    "christoffels_natural", "riemann", "ricci", "scalar", "weyl",
    "symmetry_residuals", "CurvatureReport", "extendibility_report",
    "flatness_criterion", "boundary_curvature_compare", "ricci_tangent_limit",
    "decay_table", "is_natural_form",
]


# -- metric sources ------------------------------------------------------------

def is_natural_form(model: MetricModel) -> bool:
    """True when the last coordinate is the natural parameter of the chart:
    ``G*_mm`` is that coordinate, ``G*_im = 0`` and ``tau`` is that coordinate."""
    m = model.m
    name = model.coords[-1]
    G = model.cometric_exprs
    if ex.to_string(G[m - 1][m - 1]) != name:
        return False
    if any(not (isinstance(G[i][m - 1], ex.Const) and G[i][m - 1].value == 0.0) for i in range(m - 1)):
        return False
    return ex.to_string(model.tau_expr) == name


class SymbolicSource:
    """Metric jets from the cometric of a natural-form model.

    ``d g = -g (d G*) g`` and
    ``d_a d_b g = g d_a G* g d_b G* g + g d_b G* g d_a G* g - g d_a d_b G* g``.
    """

    kind = "symbolic"
    # exact jets stay accurate close to the boundary, so the log-log fit can
    # use the asymptotic window where the bounded part of R_mm is negligible
    fit_window = (1e-5, 1e-3)

    def __init__(self, model: MetricModel):
        if not is_natural_form(model):
            raise HypothesisFailed("natural-form",
                                   f"model {model.name!r} is not written in natural coordinates")
        self.model = model
        self.m = model.m

    @property
    def scale(self) -> float:
        return self.model.scale

    def jets(self, z) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(g^{-1}, d_a g_ij, d_a d_b g_ij)`` at ``z``."""
        z = np.asarray(z, dtype=float)
        G, dG = self.model._jet1(z)
        ddG = self.model.ddcometric(z)
        g = np.linalg.inv(G)
        P = g @ dG  # P[a] = g d_a G*
        dg = -(P @ g)
        ddg = (P[:, None] @ P[None, :] @ g) + (P[None, :] @ P[:, None] @ g) - (g @ ddG @ g)
        return G, dg, ddg

    def block_metric(self, z) -> np.ndarray:
        """``g_ij`` block, smooth across ``z^m = 0``."""
        G = self.model.cometric(np.asarray(z, dtype=float))
        return np.linalg.inv(G[:-1, :-1])


class GridSource:
    """Metric samples on a regular grid, differentiated with fourth-order
    central stencils (two nodes on each side along every axis)."""

    kind = "grid"
    fit_window = (1e-3, 1e-1)

    def __init__(self, nodes: Sequence[np.ndarray], g: np.ndarray, scale: float = 1.0):
        self.nodes = [np.asarray(n, dtype=float) for n in nodes]
        self.g = np.asarray(g, dtype=float)
        self.m = len(self.nodes)
        self.h = []
        for n in self.nodes:
            d = np.diff(n)
            if len(n) < 5 or not np.allclose(d, d[0], rtol=1e-9, atol=0.0):
                raise StencilOutOfRange("grid axes need at least 5 uniformly spaced nodes")
            self.h.append(float(d[0]))
        self._scale = scale

    @property
    def scale(self) -> float:
        return self._scale

    @classmethod
    def from_chart(cls, chart) -> "GridSource":
        return cls([*chart.y_nodes, chart.s_nodes], chart.g, chart.model.scale)

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray], center, spacing: float,
                      half: int = 4, scale: float = 1.0) -> "GridSource":
        """Sample ``fn`` on ``center + spacing * j``, ``|j| <= half`` per axis."""
        center = np.asarray(center, dtype=float)
        m = center.size
        offs = spacing * np.arange(-half, half + 1)
        nodes = [c + offs for c in center]
        g = np.empty(tuple(len(n) for n in nodes) + (m, m))
        for idx in itertools.product(*[range(len(n)) for n in nodes]):
            g[idx] = fn(np.array([nodes[a][idx[a]] for a in range(m)]))
        return cls(nodes, g, scale)

    def _index(self, z) -> tuple[int, ...]:
        idx = []
        for a, n in enumerate(self.nodes):
            j = int(np.argmin(np.abs(n - z[a])))
            if abs(n[j] - z[a]) > 1e-9 * max(1.0, abs(z[a])):
                raise StencilOutOfRange(f"point {list(z)} is not a grid node along axis {a}")
            idx.append(j)
        return tuple(idx)

    _D1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
    _D2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0

    def _take(self, idx, shifts) -> np.ndarray:
        j = list(idx)
        for a, s in shifts:
            j[a] += s
            if j[a] < 0 or j[a] >= len(self.nodes[a]):
                raise StencilOutOfRange(f"stencil leaves the grid along axis {a}")
        val = self.g[tuple(j)]
        if not np.all(np.isfinite(val)):
            raise StencilOutOfRange("stencil touches an undefined sample (the degenerate set)")
        return val

    def jets(self, z) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        z = np.asarray(z, dtype=float)
        idx = self._index(z)
        m = self.m
        g = self._take(idx, [])
        offs = range(-2, 3)
        dg = np.empty((m, m, m))
        ddg = np.empty((m, m, m, m))
        for a in range(m):
            dg[a] = sum(w * self._take(idx, [(a, o)]) for w, o in zip(self._D1, offs) if w) / self.h[a]
            ddg[a, a] = sum(w * self._take(idx, [(a, o)]) for w, o in zip(self._D2, offs)) / self.h[a] ** 2
            for b in range(a):
                acc = 0.0
                for wa, oa in zip(self._D1, offs):
                    if not wa:
                        continue
                    for wb, ob in zip(self._D1, offs):
                        if wb:
                            acc = acc + wa * wb * self._take(idx, [(a, oa), (b, ob)])
                ddg[a, b] = ddg[b, a] = acc / (self.h[a] * self.h[b])
        return np.linalg.inv(g), dg, ddg

    def block_metric(self, z) -> np.ndarray:
        raise StencilOutOfRange("the grid source has no samples on the degenerate set")


def natural_source(obj) -> SymbolicSource | GridSource:
    """Pick a source: exact jets for natural-form models, stencils for charts."""
    if isinstance(obj, (SymbolicSource, GridSource)):
        return obj
    if isinstance(obj, MetricModel):
        return SymbolicSource(obj)
    if hasattr(obj, "s_nodes") and hasattr(obj, "g"):
        return GridSource.from_chart(obj)
    raise TypeError(f"cannot build a curvature source from {type(obj).__name__}")


# -- pointwise curvature -----------------------------------------------------------

def curvature_from_jets(ginv: np.ndarray, dg: np.ndarray, ddg: np.ndarray,
                        with_weyl: bool = True) -> dict:
    """All curvature quantities from ``g^{-1}``, ``d_a g_ij`` and ``d_a d_b g_ij``."""
    m = ginv.shape[0]
    g = np.linalg.inv(ginv)
    low = 0.5 * (dg.transpose(2, 1, 0) + dg.transpose(2, 0, 1) - dg)  # low[c,a,b]
    gam = np.einsum("cd,dab->cab", ginv, low)
    dginv = -(ginv @ dg @ ginv)  # dginv[a, i, j] = d_a g^{ij}
    # dlow[a, e, b, c] = d_a Gamma_ebc
    dlow = 0.5 * (ddg.transpose(0, 3, 2, 1) + ddg.transpose(0, 3, 1, 2) - ddg)
    dgam = np.einsum("ade,ebc->adbc", dginv, low) + np.einsum("de,aebc->adbc", ginv, dlow)
    R = (np.einsum("adbc->dcab", dgam) - np.einsum("bdac->dcab", dgam)
         + np.einsum("ebc,dae->dcab", gam, gam) - np.einsum("eac,dbe->dcab", gam, gam))
    Ric = np.einsum("dcad->ca", R)
    RIC = np.einsum("ca,ad->dc", Ric, ginv)
    S = float(np.trace(RIC))
    out = {"g": g, "ginv": ginv, "Gamma_lower": low, "Gamma": gam, "R": R, "Ric": Ric,
           "RIC": RIC, "S": S}
    if with_weyl and m >= 4:
        d = np.eye(m)
        W = (R
             + (np.einsum("da,cb->dcab", d, Ric) - np.einsum("db,ca->dcab", d, Ric)
                + np.einsum("cb,da->dcab", g, RIC) - np.einsum("ca,db->dcab", g, RIC)) / (m - 2)
             + S / ((m - 1) * (m - 2)) * (np.einsum("db,ca->dcab", d, g) - np.einsum("da,cb->dcab", d, g)))
        out["W"] = W
    return out


def _at(source, z, with_weyl=True) -> dict:
    ginv, dg, ddg = source.jets(z)
    return curvature_from_jets(ginv, dg, ddg, with_weyl)


def christoffels_natural(source, z) -> dict:
    """Lower and raised symbols at ``z`` (off the degenerate set) with the
    residuals of the closed forms ``Gamma_mmm = -1/(2 tau^2)`` and
    ``Gamma^m_mm = -1/(2 tau)`` that hold when ``g_mm = 1/z^m``."""
    src = natural_source(source)
    z = np.asarray(z, dtype=float)
    tau = z[-1]
    c = _at(src, z, with_weyl=False)
    m = src.m - 1
    return {
        "point": z.tolist(),
        "Gamma_lower": c["Gamma_lower"],
        "Gamma": c["Gamma"],
        "Gamma_mmm": float(c["Gamma_lower"][m, m, m]),
        "Gamma_mmm_expected": -1.0 / (2.0 * tau * tau),
        "Gamma^m_mm": float(c["Gamma"][m, m, m]),
        "Gamma^m_mm_expected": -1.0 / (2.0 * tau),
    }


def riemann(source, z) -> np.ndarray:
    return _at(natural_source(source), z, with_weyl=False)["R"]


def ricci(source, z) -> np.ndarray:
    return _at(natural_source(source), z, with_weyl=False)["Ric"]


def scalar(source, z) -> float:
    return _at(natural_source(source), z, with_weyl=False)["S"]


def weyl(source, z) -> np.ndarray:
    src = natural_source(source)
    if src.m < 4:
        raise MeaninglessDimension(f"the Weyl tensor vanishes identically for m={src.m}")
    return _at(src, z)["W"]


def symmetry_residuals(comp: dict) -> dict:
    """Algebraic identities that must hold at any off-boundary point."""
    R = comp["R"]
    scale = 1.0 + float(np.max(np.abs(R)))
    out = {
        "antisymmetry": float(np.max(np.abs(R + R.transpose(0, 1, 3, 2)))) / scale,
        "bianchi": float(np.max(np.abs(R + R.transpose(0, 2, 3, 1) + R.transpose(0, 3, 1, 2)))) / scale,
        "ricci_symmetry": float(np.max(np.abs(comp["Ric"] - comp["Ric"].T))) / scale,
    }
    if "W" in comp:
        W = comp["W"]
        out["weyl_traces"] = max(float(np.max(np.abs(np.einsum("dcad->ca", W)))),
                                 float(np.max(np.abs(np.einsum("dcdb->cb", W))))) / scale
    return out


# -- extendibility -------------------------------------------------------------

@dataclass
class CurvatureReport:
    point: list
    components: dict = field(repr=False)
    verdicts: dict
    limits: dict = field(repr=False)
    exponents: dict

    def as_dict(self) -> dict:
        def conv(v):
            if isinstance(v, np.ndarray):
                return v.tolist()
            if isinstance(v, dict):
                return {k: conv(x) for k, x in v.items()}
            if isinstance(v, (np.floating, np.bool_)):
                return v.item()
            return v
        return {"point": self.point, "components": conv(self.components),
                "verdicts": conv(self.verdicts), "limits": conv(self.limits),
                "exponents": conv(self.exponents)}


def _two_sided(fn: Callable[[float], np.ndarray], tau0: float, floor: float, levels: int = 11):
    taus = tau0 * 2.0 ** -np.arange(levels)
    plus = richardson(np.array([fn(t) for t in taus]), taus, floor=floor)
    minus = richardson(np.array([fn(-t) for t in taus]), taus, floor=floor)
    agree = False
    if plus.extends and minus.extends:
        scale = 1.0 + float(np.max(np.abs(plus.limit)))
        agree = float(np.max(np.abs(plus.limit - minus.limit))) <= 1e3 * floor * scale
    return {"extends": bool(plus.extends and minus.extends and agree),
            "limit": plus.limit, "limit_minus": minus.limit,
            "error": max(plus.error, minus.error)}


def extendibility_report(source, p, tau0: float | None = None, floor: float = 1e-8,
                         raise_on_diverge: bool = False) -> CurvatureReport:
    """Richardson limits across ``z^m = 0`` at the boundary point ``p`` for
    every quantity claimed extendible, plus divergence-exponent fits for
    ``R_mm`` and the ``W^d_mjm`` entries."""
    src = natural_source(source)
    m = src.m
    p = np.asarray(p, dtype=float).copy()
    p[-1] = 0.0
    k = m - 1
    t0 = 0.1 * src.scale if tau0 is None else tau0
    has_w = m >= 4
    cache: dict[float, dict] = {}

    def comp(t):
        if t not in cache:
            z = p.copy()
            z[-1] = t
            cache[t] = _at(src, z, with_weyl=has_w)
        return cache[t]

    def masked(arr, entry):
        a = np.array(arr, dtype=float)
        a[entry] = 0.0
        return a

    claims = {
        "Gamma_lower_except_mmm": lambda t: masked(comp(t)["Gamma_lower"], (k, k, k)),
        "Gamma_raised_except_m_mm": lambda t: masked(comp(t)["Gamma"], (k, k, k)),
        "tau2_Gamma_mmm": lambda t: np.array(t * t * comp(t)["Gamma_lower"][k, k, k]),
        "tau_Gamma^m_mm": lambda t: np.array(t * comp(t)["Gamma"][k, k, k]),
        "tauR": lambda t: t * comp(t)["R"],
        "tauRic": lambda t: t * comp(t)["Ric"],
        "RIC": lambda t: comp(t)["RIC"],
        "S": lambda t: np.array(comp(t)["S"]),
    }
    if has_w:
        claims["tauW"] = lambda t: t * comp(t)["W"]
    verdicts, limits = {}, {}
    for name, fn in claims.items():
        res = _two_sided(fn, t0, floor)
        verdicts[f"{name}_extends"] = res["extends"]
        limits[name] = {"limit": res["limit"], "limit_minus": res["limit_minus"], "error": res["error"]}
        if raise_on_diverge and not res["extends"]:
            raise ExtrapolationDiverged(f"{name} has no limit at the degenerate set", name)
    verdicts["tau2_Gamma_mmm_is_minus_half"] = bool(abs(float(limits["tau2_Gamma_mmm"]["limit"]) + 0.5) < 1e-6)
    verdicts["tau_Gamma^m_mm_is_minus_half"] = bool(abs(float(limits["tau_Gamma^m_mm"]["limit"]) + 0.5) < 1e-6)
    # raw tensors: R extends entirely only in the flat-boundary case
    rres = _two_sided(lambda t: comp(t)["R"], t0, floor)
    verdicts["R_extends"] = rres["extends"]
    limits["R"] = {"limit": rres["limit"], "error": rres["error"]}
    ricres = _two_sided(lambda t: comp(t)["Ric"], t0, floor)
    verdicts["Ric_extends"] = ricres["extends"]

    lo, hi = (w * src.scale for w in src.fit_window)
    exps = {}
    fit = fit_exponent(lambda t: comp(t)["Ric"][k, k], lo, hi)
    exps["R_mm"] = {"exponent": fit.exponent, "coefficient": fit.coefficient,
                    "verdict": fit.verdict()}
    if has_w:
        probe = comp(1e-2 * src.scale)["W"]
        ref = 1e-8 * (1.0 + float(np.max(np.abs(probe))))
        for d in range(m):
            for j in range(m - 1):
                if abs(probe[d, k, j, k]) > ref:
                    f = fit_exponent(lambda t, d=d, j=j: comp(t)["W"][d, k, j, k], lo, hi)
                    exps[f"W^{d}_m{j}m"] = {"exponent": f.exponent, "coefficient": f.coefficient,
                                           "verdict": f.verdict()}
    sample = comp(t0)
    components = {key: sample[key] for key in ("R", "Ric", "RIC", "S") if key in sample}
    if has_w:
        components["W"] = sample["W"]
    components["tau"] = t0
    return CurvatureReport(p.tolist(), components, verdicts, limits, exps)


def flatness_criterion(source, p, h: float | None = None, report: CurvatureReport | None = None) -> dict:
    """Is ``d g_ij / d z^m`` zero on the degenerate set at ``p``?

    The derivative is a fourth-order central stencil of the ``g_ij`` block
    at ``z^m = +-h, +-2h``.  The verdict is cross-checked against the
    ``R_extends`` verdict of :func:`extendibility_report`.
    """
    src = natural_source(source)
    p = np.asarray(p, dtype=float).copy()
    p[-1] = 0.0
    hh = 1e-2 * src.scale if h is None else h

    def block(t):
        z = p.copy()
        z[-1] = t
        if isinstance(src, SymbolicSource):
            return src.block_metric(z)
        return np.linalg.inv(src.jets(z)[0])[:-1, :-1]

    deriv = (block(-2 * hh) - 8 * block(-hh) + 8 * block(hh) - block(2 * hh)) / (12 * hh)
    val = float(np.max(np.abs(deriv)))
    flat = val < 1e-6
    rep = extendibility_report(src, p) if report is None else report
    return {"flat": flat, "max_abs_dg_ij_dzm": val, "dg_ij_dzm": deriv.tolist(),
            "R_extends": bool(rep.verdicts["R_extends"]),
            "consistent": bool(flat == rep.verdicts["R_extends"])}


def _intrinsic_riemann(hfn: Callable[[np.ndarray], np.ndarray], y, step: float) -> np.ndarray:
    """Riemann tensor of a metric given as a function, by nested fourth-order
    differences (Christoffels from ``d h``, curvature from ``d Gamma``)."""
    y = np.asarray(y, dtype=float)
    n = y.size

    def d1(fn, x, a):
        e = np.zeros(n)
        e[a] = step
        return (fn(x - 2 * e) - 8 * fn(x - e) + 8 * fn(x + e) - fn(x + 2 * e)) / (12 * step)

    def gamma(x):
        dh = np.array([d1(hfn, x, a) for a in range(n)])
        low = 0.5 * (dh.transpose(2, 1, 0) + dh.transpose(2, 0, 1) - dh)
        return np.einsum("cd,dab->cab", np.linalg.inv(hfn(x)), low)

    gam = gamma(y)
    dgam = np.array([d1(gamma, y, a) for a in range(n)])  # dgam[a, d, b, c]
    return (np.einsum("adbc->dcab", dgam) - np.einsum("bdac->dcab", dgam)
            + np.einsum("ebc,dae->dcab", gam, gam) - np.einsum("eac,dbe->dcab", gam, gam))


def boundary_curvature_compare(source, p, tau0: float | None = None, step: float | None = None,
                               tol: float = 1e-5) -> dict:
    """Limit of the ambient ``R(X, Y) Z`` for tangent lifts versus the
    curvature of the induced metric on the degenerate set.

    The intrinsic side uses the frame-based induced metric (Gram-Schmidt on
    the cometric, no inversion of ``g``) differentiated by nested stencils,
    so it shares no code path with the ambient side.
    """
    src = natural_source(source)
    m = src.m
    p = np.asarray(p, dtype=float).copy()
    p[-1] = 0.0
    n = m - 1
    if n < 2:
        return {"ambient": [], "intrinsic": [], "max_abs_diff": 0.0, "ok": True,
                "note": "one-dimensional boundary; both curvatures vanish"}
    if not isinstance(src, SymbolicSource):
        raise HypothesisFailed("natural-form", "boundary comparison needs the model cometric")
    from .fields import coordinate_field
    from .frames import induced_boundary_metric, polar_frame_from_transversal

    model = src.model
    frame = polar_frame_from_transversal(model, coordinate_field(m - 1, model.coords),
                                         check=False)
    bm = induced_boundary_metric(model, frame)
    t0 = 0.1 * src.scale if tau0 is None else tau0

    def ambient(t):
        z = p.copy()
        z[-1] = t
        R = _at(src, z, with_weyl=False)["R"]
        return R[:, :n, :n, :n]

    res = _two_sided(ambient, t0, 1e-8)
    amb = np.asarray(res["limit"])
    st = 1e-2 * src.scale if step is None else step
    intr = _intrinsic_riemann(bm, p[:n], st)
    diff_tangent = float(np.max(np.abs(amb[:n] - intr)))
    normal_part = float(np.max(np.abs(amb[n])))
    diff = max(diff_tangent, normal_part)
    sectional = {}
    h = bm(p[:n])
    for i in range(n):
        for j in range(i + 1, n):
            num = np.einsum("d,d->", h[i], intr[:, j, i, j])
            sectional[f"{i}{j}"] = float(num / (h[i, i] * h[j, j] - h[i, j] ** 2))
    return {"ambient": amb.tolist(), "intrinsic": intr.tolist(), "ambient_extends": res["extends"],
            "max_abs_diff": diff, "normal_component": normal_part,
            "intrinsic_sectional": sectional, "ok": bool(res["extends"] and diff < tol)}


def ricci_tangent_limit(source, p, X: Callable, Y: Callable, tau0: float | None = None) -> dict:
    """Richardson limit of ``Ric(X, Y)`` across the boundary at ``p``;
    ``X`` and ``Y`` are callables of the chart point."""
    src = natural_source(source)
    p = np.asarray(p, dtype=float).copy()
    p[-1] = 0.0
    t0 = 0.1 * src.scale if tau0 is None else tau0

    def val(t):
        z = p.copy()
        z[-1] = t
        Ric = _at(src, z, with_weyl=False)["Ric"]
        return np.array(np.asarray(X(z)) @ Ric @ np.asarray(Y(z)))

    res = _two_sided(val, t0, 1e-8)
    return {"extends": res["extends"], "limit": float(res["limit"]), "error": res["error"]}


def decay_table(source, p, taus=None) -> list[list[float]]:
    """Rows ``(tau, R_mm, tau * R_mm)`` along the normal line through ``p``."""
    src = natural_source(source)
    p = np.asarray(p, dtype=float).copy()
    lo, hi = np.log10(src.fit_window)
    taus = np.logspace(lo, hi, 12) * src.scale if taus is None else np.asarray(taus)
    k = src.m - 1
    rows = []
    for t in taus:
        z = p.copy()
        z[-1] = t
        Rmm = float(_at(src, z, with_weyl=False)["Ric"][k, k])
        rows.append([float(t), Rmm, float(t * Rmm)])
    return rows
