"""Dual connection, Christoffel tables in adapted frames, the beta one-form
and the canonical polar-normal field.

Conventions: ``Gamma_cab = box_{E_a} E_b (E_c) = g(nabla_{E_a} E_b, E_c)`` and
``Gamma^c_ab = g^{cd} Gamma_dab``.  In a polar-adapted frame
``g = diag(1, ..., 1, 1/tau)`` with ``tau`` the frame's own equation.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import ExtrapolationDiverged, NonExtendible, NotTransversal
from .fields import FuncField, as_field
from .frames import POLAR, FrameField, polar_frame_from_transversal
from .limits import regularize, richardson, richardson_along
from .metric import MetricModel

__all__ = [
    "dual_connection", "frame_christoffel", "ChristoffelTable", "christoffel_table",
    "BetaForm", "beta_form", "beta_value", "PolarNormalField", "polar_normal_field",
    "angle_between",
]


def dual_connection(model: MetricModel, A, B, C, q, check: bool = True) -> float:
    """``box_A B (C)`` at ``q`` from the Koszul formula in coordinates.

    ``2 box_A B(C) = A g(B,C) + B g(C,A) - C g(A,B)
    - g(A,[B,C]) + g(B,[C,A]) + g(C,[A,B])``.
    """
    q = np.asarray(q, dtype=float)
    if check and abs(model.det(q)) <= model.tol_degeneracy(q):
        raise NonExtendible("the Koszul formula is singular on the degenerate set; "
                            "use a tau-weighted limit instead")
    A, B, C = (as_field(f, model.coords) for f in (A, B, C))
    G, dG = model._jet1(q)
    g = np.linalg.inv(G)
    dg = -np.einsum("ij,ajk,kl->ail", g, dG, g)  # dg[a] = d_a g
    a, b, c = A(q), B(q), C(q)
    Ja, Jb, Jc = A.jacobian(q), B.jacobian(q), C.jacobian(q)

    def deriv_g(X, Y, Jx, Jy, along):
        # d/d(along) of g(X, Y)
        return (np.einsum("a,aij,i,j->", along, dg, X, Y)
                + (Jx @ along) @ g @ Y + X @ g @ (Jy @ along))

    def br(X, Y, Jx, Jy):
        return Jy @ X - Jx @ Y

    total = (deriv_g(b, c, Jb, Jc, a) + deriv_g(c, a, Jc, Ja, b) - deriv_g(a, b, Ja, Jb, c)
             - a @ g @ br(b, c, Jb, Jc) + b @ g @ br(c, a, Jc, Ja) + c @ g @ br(a, b, Ja, Jb))
    return 0.5 * float(total)


def frame_christoffel(frame: FrameField, x) -> tuple[np.ndarray, float]:
    """Lower symbols ``Gamma[c, a, b]`` of a polar-adapted frame at ``x``,
    and the frame's ``tau`` there."""
    if frame.kind != POLAR:
        raise ValueError("frame_christoffel expects a polar-adapted frame")
    x = np.asarray(x, dtype=float)
    m = frame.m
    E = frame(x)
    th = np.linalg.inv(E)
    J = frame.jacobians(x)  # J[i, a, b] = d_b E_a^i
    # [E_a, E_b] = (D E_b) E_a - (D E_a) E_b
    DE_times = np.einsum("iab,bc->iac", J, E)  # (D E_a) E_c  -> [i, a, c]
    br = np.einsum("ibc->ibc", DE_times).transpose(0, 2, 1) - DE_times  # [i, a, b]
    C = np.einsum("ci,iab->cab", th, br)
    t = frame.tau(x)
    dt = frame.dtau(x)
    Et = dt @ E  # E_a(tau)
    gd = np.ones(m)
    gd[-1] = 1.0 / t
    Eg = np.zeros((m, m, m))  # Eg[a, b, c] = E_a(g_bc)
    Eg[:, -1, -1] = -Et / t ** 2
    lower = np.empty((m, m, m))
    for c, a, b in itertools.product(range(m), repeat=3):
        lower[c, a, b] = 0.5 * (Eg[a, b, c] + Eg[b, c, a] - Eg[c, a, b]
                                - gd[a] * C[a, b, c] + gd[b] * C[b, c, a] + gd[c] * C[c, a, b])
    return lower, t


def _raise(lower: np.ndarray, t: float) -> np.ndarray:
    ginv = np.ones(lower.shape[0])
    ginv[-1] = t
    return ginv[:, None, None] * lower


# families of frame symbols certified to extend; values are (weight power, index list)
def _families(m: int) -> dict[str, list[tuple[int, int, int]]]:
    r = range(m - 1)
    M = m - 1
    return {
        "Gamma_kij": [(k, i, j) for k in r for i in r for j in r],
        "Gamma_mij": [(M, i, j) for i in r for j in r],
        "Gamma_kmj": [(k, M, j) for k in r for j in r],
        "Gamma_kim": [(k, i, M) for k in r for i in r],
        "tauGamma_kmm": [(k, M, M) for k in r],
        "tauGamma_mim": [(M, i, M) for i in r],
        "tauGamma_mmj": [(M, M, j) for j in r],
        "tau2Gamma_mmm": [(M, M, M)],
    }


def _weight(name: str) -> int:
    return 2 if name.startswith("tau2") else (1 if name.startswith("tau") else 0)


@dataclass
class ChristoffelTable:
    point: np.ndarray
    frame_label: str
    lower: np.ndarray | None
    raised: np.ndarray | None
    tau: float | None
    limits: dict
    verdicts: dict
    tau2_gamma_mmm_expected: float

    @property
    def all_extend(self) -> bool:
        return all(self.verdicts.values())

    def as_dict(self) -> dict:
        out = {"point": self.point.tolist(), "frame": self.frame_label,
               "verdicts": {k: bool(v) for k, v in self.verdicts.items()},
               "limits": self.limits,
               "tau2Gamma_mmm_expected": self.tau2_gamma_mmm_expected}
        if self.lower is not None:
            m = self.lower.shape[0]
            for c, a, b in itertools.product(range(m), repeat=3):
                out[f"Gamma_cab[{c}][{a}][{b}]"] = float(self.lower[c, a, b])
                out[f"Gamma^c_ab[{c}][{a}][{b}]"] = float(self.raised[c, a, b])
        return out


def christoffel_table(model: MetricModel, frame: FrameField, p, floor: float = 1e-7,
                      raise_on_diverge: bool = False) -> ChristoffelTable:
    """Frame Christoffels at ``p`` plus Richardson verdicts for every family
    claimed to extend across the degenerate set (at the projection of ``p``)."""
    p = np.asarray(p, dtype=float)
    k = model.normal_index
    pb = model.boundary_point(p)
    lower = raised = tval = None
    if abs(model.tau(p)) > model.tol_degeneracy(p):
        lower, tval = frame_christoffel(frame, p)
        raised = _raise(lower, tval)
    e = np.zeros(model.m)
    e[k] = 1.0
    t0 = 0.1 * model.scale
    side = 1.0 if pb[k] + t0 <= model.domain[k, 1] else -1.0
    fams = _families(model.m)

    def sample(y):
        low, t = frame_christoffel(frame, y)
        row = []
        for name, idx in fams.items():
            w = t ** _weight(name)
            row.extend(w * low[c, a, b] for c, a, b in idx)
        return np.array(row)

    taus = t0 * 2.0 ** -np.arange(11)
    vals = np.array([sample(pb + side * s * e) for s in taus])
    limits, verdicts = {}, {}
    col = 0
    for name, idx in fams.items():
        n = len(idx)
        if n == 0:
            continue
        est = richardson(vals[:, col:col + n], taus, floor=floor)
        col += n
        limits[name] = {f"[{c}][{a}][{b}]": float(v) for (c, a, b), v in zip(idx, np.atleast_1d(est.limit))}
        verdicts[name] = bool(est.extends)
        if raise_on_diverge and not est.extends:
            raise ExtrapolationDiverged(f"{name} did not stabilize", entry=name)
    Em_tau = float(frame.dtau(pb) @ frame(pb)[:, -1])
    expected = -0.5 * Em_tau
    got = limits["tau2Gamma_mmm"][f"[{model.m - 1}][{model.m - 1}][{model.m - 1}]"]
    verdicts["tau2Gamma_mmm_matches"] = abs(got - expected) < 1e-6
    return ChristoffelTable(p, frame.label, lower, raised, tval, limits, verdicts, expected)


# -- beta --------------------------------------------------------------------

@dataclass
class BetaForm:
    point: np.ndarray
    gamma: np.ndarray
    frame: FrameField = field(repr=False)

    def as_dict(self) -> dict:
        return {"point": self.point.tolist(), "gamma": self.gamma.tolist()}


def _tau_gamma_kmm(frame: FrameField):
    def fn(y):
        low, t = frame_christoffel(frame, y)
        return t * low[:-1, -1, -1]
    return fn


def beta_form(model: MetricModel, Z, p, frame: FrameField | None = None) -> BetaForm:
    """Components ``gamma_k = tau Gamma_kmm`` on the degenerate set in a
    polar-adapted frame whose last member is ``Z``."""
    p = np.asarray(p, dtype=float)
    Zf = as_field(Z, model.coords)
    if abs(float(model.dtau(p) @ Zf(p))) <= 1e-8 * np.linalg.norm(model.dtau(p)) * np.linalg.norm(Zf(p)):
        raise NotTransversal("Z is tangent to the degenerate set at the base point")
    fr = frame if frame is not None else polar_frame_from_transversal(model, Zf, samples=[p])
    fn = regularize(_tau_gamma_kmm(fr), model.tau, model.normal_index, model.reg_delta, model.reg_guard)
    return BetaForm(p, np.asarray(fn(p)), fr)


def beta_value(model: MetricModel, Z, V, p, tau0: float | None = None) -> dict:
    """``beta_Z(V)`` as the limit of ``box_Z Z (X) / g(Z, Z)`` where ``X`` is
    ``V`` made ``g``-orthogonal to ``Z``; coordinate Koszul formula with a
    Richardson limit along the normal axis."""
    Zf = as_field(Z, model.coords)
    Vf = as_field(V, model.coords)
    m = model.m

    def xfield(y):
        g = model.metric(y)
        z, v = Zf(y), Vf(y)
        return v - (v @ g @ z) / (z @ g @ z) * z

    X = FuncField(xfield, m, h=1e-4 * model.scale, label="orthogonal extension")

    def ratio(y):
        g = model.metric(y)
        z = Zf(y)
        return dual_connection(model, Zf, Zf, X, y) / (z @ g @ z)

    k = model.normal_index
    e = np.zeros(m)
    e[k] = 1.0
    t0 = 0.1 * model.scale if tau0 is None else tau0
    p = np.asarray(p, dtype=float)
    side = 1.0 if p[k] + t0 <= model.domain[k, 1] else -1.0
    est = richardson_along(ratio, p, side * e, t0, levels=9, floor=1e-6)
    return {"value": float(est.limit), "extends": bool(est.extends), "error": est.error}


# -- polar-normal field -------------------------------------------------------

def angle_between(u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    c = abs(float(u @ v)) / (np.linalg.norm(u) * np.linalg.norm(v))
    s = np.linalg.norm(np.cross(u, v)) if u.size == 3 else None
    if u.size == 2:
        s = abs(u[0] * v[1] - u[1] * v[0]) / (np.linalg.norm(u) * np.linalg.norm(v))
        return float(np.arctan2(s, c))
    return float(np.arccos(min(1.0, c)))


class PolarNormalField(FuncField):
    """``N = sum_k lambda^k(pi(x)) E_k(x) + E_m(x)`` with ``lambda`` chosen on the
    degenerate set so that ``beta_N = 0``; ``pi`` projects along the normal axis."""

    def __init__(self, model: MetricModel, base: FrameField):
        self.model = model
        self.base = base
        self._tgk = regularize(_tau_gamma_kmm(base), model.tau, model.normal_index,
                               model.reg_delta, model.reg_guard)
        self._cache: dict[tuple, np.ndarray] = {}
        super().__init__(self._eval, model.m, h=1e-3 * model.scale, label="polar-normal")

    def lam(self, pb) -> np.ndarray:
        key = tuple(np.round(np.asarray(pb, dtype=float), 15))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        gam = np.asarray(self._tgk(pb))
        em_tau = float(self.base.dtau(pb) @ self.base(pb)[:, -1])
        lam = -2.0 * gam / em_tau
        if len(self._cache) < 4096:
            self._cache[key] = lam
        return lam

    def _eval(self, x):
        pb = self.model.boundary_point(x)
        E = self.base(x)
        return E[:, :-1] @ self.lam(pb) + E[:, -1]

    def direction(self, pb) -> np.ndarray:
        v = self(pb)
        return v / np.linalg.norm(v)


def polar_normal_field(model: MetricModel, seed=None, samples=None) -> PolarNormalField:
    """Canonical polar-normal field built from the transversal ``seed``
    (default: the normal coordinate vector field)."""
    if seed is None:
        comps = ["0"] * model.m
        comps[model.normal_index] = "1"
        seed = comps
    base = polar_frame_from_transversal(model, seed, samples=samples, label="seed")
    return PolarNormalField(model, base)
