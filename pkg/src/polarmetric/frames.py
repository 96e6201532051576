"""Adapted frames and coframes.

A *polar-adapted* frame ``(E_1..E_m)`` has Gram matrix
``g(E_a, E_b) = diag(1, ..., 1, 1/tau_f)`` where ``tau_f`` is an equation of
the degenerate set; dually a *Rad*-adapted* coframe has
``g*(theta^a, theta^b) = diag(1, ..., 1, tau_f)``.  Both are built pointwise
from the cometric, which is smooth, so they are well conditioned on and near
the degenerate set.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (GramSchmidtBreakdown, NotRadical, NotTransversal, SingularCoframe)
from .fields import Field, FuncField, as_field
from .limits import fd_gradient, fd_jacobian, fit_exponent, regularize, richardson_along
from .metric import MetricModel

__all__ = [
    "FrameField", "CoframeField", "BoundaryMetric", "coordinate_frame",
    "polar_frame_from_transversal", "radstar_coframe", "dual_frame",
    "induced_boundary_metric", "cor1_check", "normal_form_deviation",
]

POLAR = "polar-adapted"
RADSTAR = "Rad*-adapted"
GENERIC = "generic"
GS_TOL = 1e-12


class FrameField:
    """Pointwise frame ``x -> E`` with ``E[:, a]`` the components of ``E_a``."""

    def __init__(self, model: MetricModel, fn: Callable[[np.ndarray], np.ndarray],
                 kind: str = GENERIC, tau_fn: Callable[[np.ndarray], float] | None = None,
                 jac_fn: Callable[[np.ndarray], np.ndarray] | None = None, label: str = "",
                 factor: float = 1.0):
        self.model = model
        self.m = model.m
        self._fn = fn
        self.kind = kind
        self._tau = tau_fn
        self._jac = jac_fn
        self.label = label
        self.factor = factor
        self.h = 1e-3 * model.scale

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self._fn(np.asarray(x, dtype=float)), dtype=float)

    def coframe(self, x) -> np.ndarray:
        return np.linalg.inv(self(x))

    def tau(self, x) -> float:
        """The frame's own equation ``1/g(E_m, E_m)``."""
        if self._tau is not None:
            return float(self._tau(np.asarray(x, dtype=float)))
        th = self.coframe(x)[-1]
        return float(th @ self.model.cometric(x) @ th)

    def dtau(self, x) -> np.ndarray:
        return fd_gradient(self.tau, np.asarray(x, dtype=float), self.h)

    def jacobians(self, x) -> np.ndarray:
        """``J[i, a, b] = d_b (E_a)^i``."""
        if self._jac is not None:
            return self._jac(np.asarray(x, dtype=float))
        return fd_jacobian(self, np.asarray(x, dtype=float), self.h)

    def vector(self, a: int) -> FuncField:
        return FuncField(lambda x: self(x)[:, a], self.m,
                         jac=lambda x: self.jacobians(x)[:, a, :], label=f"E_{a + 1}")

    def gram(self, x) -> np.ndarray:
        """``g(E_a, E_b)`` computed from the coframe: ``inv(theta G* theta^T)``."""
        th = self.coframe(x)
        return np.linalg.inv(th @ self.model.cometric(x) @ th.T)

    def normal_form(self, x) -> np.ndarray:
        """Expected Gram matrix in normal form, ``diag(1, ..., 1/tau_f)``."""
        d = np.ones(self.m)
        d[-1] = 1.0 / self.tau(x)
        return np.diag(d)

    def sample_table(self, points) -> list[dict]:
        return [{"point": np.asarray(p).tolist(), "components": self(p).T.tolist(),
                 "tau": self.tau(p)} for p in points]


class CoframeField:
    """Pointwise coframe ``x -> Theta`` with row ``a`` the one-form ``theta^a``."""

    def __init__(self, model: MetricModel, fn: Callable[[np.ndarray], np.ndarray],
                 kind: str = GENERIC, label: str = ""):
        self.model = model
        self.m = model.m
        self._fn = fn
        self.kind = kind
        self.label = label

    @classmethod
    def constant(cls, model: MetricModel, matrix) -> "CoframeField":
        mat = np.array(matrix, dtype=float)
        return cls(model, lambda x: mat, GENERIC, "constant")

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self._fn(np.asarray(x, dtype=float)), dtype=float)

    def tau(self, x) -> float:
        th = self(x)[-1]
        return float(th @ self.model.cometric(x) @ th)

    def gram(self, x) -> np.ndarray:
        th = self(x)
        return th @ self.model.cometric(x) @ th.T

    def normal_form(self, x) -> np.ndarray:
        d = np.ones(self.m)
        d[-1] = self.tau(x)
        return np.diag(d)


def normal_form_deviation(obj, points) -> float:
    """Max-norm deviation of the Gram matrix from its normal form.

    For frames the blowing-up entry is measured as ``g(E_m, E_m) * tau_f - 1``.
    """
    worst = 0.0
    for p in points:
        if isinstance(obj, FrameField):
            gr = obj.gram(p)
            dev = max(float(np.max(np.abs(gr[:-1, :-1] - np.eye(obj.m - 1)))),
                      float(np.max(np.abs(gr[:-1, -1]))),
                      abs(gr[-1, -1] * obj.tau(p) - 1.0))
            worst = max(worst, dev)
        else:
            worst = max(worst, float(np.max(np.abs(obj.gram(p) - obj.normal_form(p)))))
    return worst


def coordinate_frame(model: MetricModel) -> FrameField:
    """The coordinate frame, tagged polar-adapted when the cometric already
    has the block form ``diag(G_ij, tau)`` with ``G_ij`` the identity."""
    eye = np.eye(model.m)
    zeros = np.zeros((model.m, model.m, model.m))
    kind = GENERIC
    pts = model.interior_samples(5, seed=1)
    if all(np.allclose(model.cometric(p)[:-1, :], np.eye(model.m)[:-1, :], atol=1e-14) for p in pts):
        kind = POLAR
    return FrameField(model, lambda x: eye, kind, tau_fn=lambda x: model.cometric(x)[-1, -1],
                      jac_fn=lambda x: zeros, label="coordinate")


def _gram_schmidt(rows: np.ndarray, G: np.ndarray) -> np.ndarray:
    out = []
    for r in rows:
        v = r.copy()
        for q in out:
            v = v - (q @ G @ v) * q
        nrm2 = float(v @ G @ v)
        if not nrm2 > GS_TOL:
            raise GramSchmidtBreakdown(f"near-null covector in orthonormalization (norm^2={nrm2:.3e})")
        out.append(v / np.sqrt(nrm2))
    return np.array(out).reshape(len(rows), G.shape[0])


def _annihilator_basis(n: np.ndarray) -> np.ndarray:
    """Rows ``dz^a - (n^a / n^k) dz^k`` for ``a != k`` with ``k = argmax |n|``."""
    m = n.size
    k = int(np.argmax(np.abs(n)))
    rows = []
    for a in range(m):
        if a == k:
            continue
        r = np.zeros(m)
        r[a] = 1.0
        r[k] = -n[a] / n[k]
        rows.append(r)
    return np.array(rows).reshape(m - 1, m)


def _check_transversal(model: MetricModel, N: Field, samples) -> None:
    for p in samples:
        dt = model.dtau(p)
        n = N(p)
        val = abs(float(dt @ n))
        if val <= 1e-8 * (np.linalg.norm(dt) * np.linalg.norm(n) + 1e-300):
            raise NotTransversal(f"field is tangent to the degenerate set at {np.asarray(p).tolist()}")


def polar_frame_from_transversal(model: MetricModel, N, samples=None, check: bool = True,
                                 label: str = "") -> FrameField:
    """Polar-adapted frame whose last member is exactly ``N``.

    The covectors annihilating ``N`` are orthonormalized in ``g*`` (declared
    coordinate order, no pivoting); ``theta^m`` then solves
    ``g*(theta^i, theta^m) = 0, theta^m(N) = 1`` and the frame is the dual
    basis, so ``E_m = N`` and ``tau_f = 1/g(N, N)``.
    """
    N = as_field(N, model.coords)
    if check:
        _check_transversal(model, N, model.boundary_samples(8, seed=3) if samples is None else samples)
    m = model.m

    def coframe(x):
        G = model.cometric(x)
        n = N(x)
        th = _gram_schmidt(_annihilator_basis(n), G)
        A = np.vstack([th @ G, n[None, :]])
        rhs = np.zeros(m)
        rhs[-1] = 1.0
        thm = np.linalg.solve(A, rhs)
        return np.vstack([th, thm[None, :]])

    def frame(x):
        return np.linalg.inv(coframe(x))

    def tau_f(x):
        thm = coframe(x)[-1]
        return float(thm @ model.cometric(x) @ thm)

    fr = FrameField(model, frame, POLAR, tau_fn=tau_f, label=label or "from transversal")
    fr.source_field = N
    return fr


def radstar_coframe(model: MetricModel, mu, samples=None) -> CoframeField:
    """Rad*-adapted coframe with last member ``mu``.

    ``mu`` must span the radical on the degenerate set.  The vector field
    ``N_mu = G* mu / tau`` is smooth there; the remaining covectors are the
    ``g*``-orthonormalized annihilators of ``N_mu``, which makes them
    ``g*``-orthogonal to ``mu``.
    """
    mu = as_field(mu, model.coords)
    pts = model.boundary_samples(8, seed=5) if samples is None else samples
    for p in pts:
        G = model.cometric(p)
        w = mu(p)
        if np.linalg.norm(w) == 0.0:
            raise NotRadical("mu vanishes on the degenerate set")
        if np.linalg.norm(G @ w) > 1e-7 * (1.0 + np.max(np.abs(G))) * np.linalg.norm(w):
            raise NotRadical(f"mu does not span the radical at {np.asarray(p).tolist()}")
    nmu = regularize(lambda x: model.cometric(x) @ mu(x) / model.tau(x), model.tau,
                     model.normal_index, model.reg_delta, model.reg_guard)

    def coframe(x):
        G = model.cometric(x)
        th = _gram_schmidt(_annihilator_basis(nmu(x)), G)
        return np.vstack([th, mu(x)[None, :]])

    cf = CoframeField(model, coframe, RADSTAR, label="radstar")
    cf.mu = mu
    cf.normal_field = nmu
    return cf


def dual_frame(coframe: CoframeField) -> FrameField:
    model = coframe.model

    def frame(x):
        th = coframe(x)
        if np.linalg.cond(th) > 1e12:
            raise SingularCoframe(f"coframe is singular at {np.asarray(x).tolist()}")
        return np.linalg.inv(th)

    kind = POLAR if coframe.kind == RADSTAR else GENERIC
    tau_fn = coframe.tau if coframe.kind == RADSTAR else None
    return FrameField(model, frame, kind, tau_fn=tau_fn, label="dual of " + coframe.label)


@dataclass
class BoundaryMetric:
    """Riemannian metric on the degenerate set in the induced chart.

    The induced chart uses the coordinates other than ``axis``; the set is a
    graph over them.
    """

    model: MetricModel
    frame: FrameField
    axis: int

    @property
    def coords(self) -> list[str]:
        return [c for i, c in enumerate(self.model.coords) if i != self.axis]

    def lift(self, y) -> np.ndarray:
        """Boundary point with induced coordinates ``y``."""
        x = np.insert(np.asarray(y, dtype=float), self.axis, self.model.center[self.axis])
        return self.model.boundary_point(x, self.axis)

    def tangents(self, x) -> np.ndarray:
        """Columns are the coordinate tangent vectors of the graph at ``x``."""
        m, k = self.model.m, self.axis
        dt = self.model.dtau(x)
        cols = []
        for i in range(m):
            if i == k:
                continue
            v = np.zeros(m)
            v[i] = 1.0
            v[k] = -dt[i] / dt[k]
            cols.append(v)
        return np.array(cols).T

    def at_point(self, x) -> np.ndarray:
        T = self.tangents(x)
        th = self.frame.coframe(x)[:-1]
        A = th @ T
        return A.T @ A

    def __call__(self, y) -> np.ndarray:
        return self.at_point(self.lift(y))


def induced_boundary_metric(model: MetricModel, frame: FrameField) -> BoundaryMetric:
    if frame.kind != POLAR:
        raise ValueError("induced_boundary_metric needs a polar-adapted frame")
    return BoundaryMetric(model, frame, model.normal_index)


def cor1_check(model: MetricModel, N, X, points=None, tau0: float | None = None) -> dict:
    """Does ``g(X, N)`` have a finite limit on the degenerate set?"""
    N = as_field(N, model.coords)
    X = as_field(X, model.coords)
    pts = model.boundary_samples(5, seed=7) if points is None else np.atleast_2d(points)
    k = model.normal_index
    e = np.zeros(model.m)
    e[k] = 1.0
    t0 = 0.1 * model.scale if tau0 is None else tau0

    def gxn(y):
        return X(y) @ model.metric(y) @ N(y)

    rows = []
    extends = True
    for p in pts:
        side = 1.0 if p[k] + t0 <= model.domain[k, 1] else -1.0
        est = richardson_along(gxn, p, side * e, t0, floor=1e-8)
        row = {"point": np.asarray(p).tolist(), "extends": bool(est.extends),
               "limit": float(est.limit), "error": est.error}
        if not est.extends:
            fit = fit_exponent(lambda s: gxn(p + side * s * e))
            row["exponent"] = fit.exponent
        extends &= est.extends
        rows.append(row)
    return {"extends": bool(extends), "points": rows}
