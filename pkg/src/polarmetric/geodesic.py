"""Geodesic spray, its desingularization and pregeodesics crossing the
degenerate set.

Integration uses coordinate velocities.  The desingularized field

    x' = tau(x) v,        v' = -(tau Gamma)(x)[v, v] - h v

is smooth across ``tau = 0`` (``tau Gamma`` is evaluated through the
regularized evaluator of the model) and its projected curves are
pregeodesics: multiplying the spray by ``tau`` only reparametrizes, and the
``-h v`` term only rescales the velocity.  At a boundary point ``p`` the
stationary velocity ``xi`` solves ``(tau Gamma)_p(xi, xi) = -h xi`` with
``h = d tau(xi) / 2`` and ``tau g(xi, xi) = +-1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import least_squares

from .errors import ApproachedBoundary, DegeneratePoint, IntegrationFailure, LeftDomain
from .frames import FrameField
from .limits import fd_jacobian, regularize
from .metric import MetricModel

__all__ = [
    "spray", "desingularized_spray", "stationary_velocity", "Linearization",
    "linearize_at_boundary", "Trajectory", "integrate_pregeodesic", "integrate_geodesic",
    "geodesic_residual", "pregeodesic_residual", "hausdorff",
]

RTOL = 1e-12
ATOL = 1e-14


def _christoffel_v(model: MetricModel, x, v) -> np.ndarray:
    return np.einsum("cab,a,b->c", model.christoffel(x), v, v)


def spray(model: MetricModel, state, frame: FrameField | None = None) -> np.ndarray:
    """Geodesic spray at ``state = (x, u)``.

    Without a frame ``u`` is the coordinate velocity and the result is
    ``(u, -Gamma(u, u))``.  With a frame ``u`` holds frame components and the
    fiber part is ``du^c/dl = -Gamma^c_ab u^a u^b`` in that frame.
    """
    state = np.asarray(state, dtype=float)
    m = model.m
    x, u = state[:m], state[m:]
    if abs(model.det(x)) <= model.tol_degeneracy(x):
        raise DegeneratePoint("the spray is singular on the degenerate set")
    if frame is None:
        return np.concatenate([u, -_christoffel_v(model, x, u)])
    E = frame(x)
    v = E @ u
    acc = -_christoffel_v(model, x, v)
    J = frame.jacobians(x)
    # d(E u)/dl = (DE . v) u + E du  =>  du = theta (acc - (DE . v) u)
    DEv = np.einsum("iab,b->ia", J, v)
    du = np.linalg.solve(E, acc - DEv @ u)
    return np.concatenate([v, du])


def desingularized_spray(model: MetricModel, state, h: float | None = None,
                         frame: FrameField | None = None) -> np.ndarray:
    """``S~ = tau A + B - H`` at ``state``.

    In coordinate velocities (``frame=None``) the value is
    ``(tau v, -(tau Gamma)(v, v) - h v)``; ``h`` defaults to the constant
    ``d tau(xi) / 2`` of the stationary velocity over the projection of
    ``x`` onto the degenerate set.  With a polar-adapted frame the fiber
    holds frame components and ``h = E_m(tau_f) / 2`` pointwise.
    """
    state = np.asarray(state, dtype=float)
    m = model.m
    x, u = state[:m], state[m:]
    if frame is not None:
        E = frame(x)
        if h is None:
            h = 0.5 * float(frame.dtau(x) @ E[:, -1])
        raw = lambda y: _frame_tau_gamma(frame, y)
        if abs(model.tau(x)) < model.reg_guard:
            raw = regularize(raw, model.tau, model.normal_index, model.reg_delta, model.reg_guard)
        du = -np.einsum("cab,a,b->c", raw(x), u, u) - h * u
        return np.concatenate([frame.tau(x) * (E @ u), du])
    if h is None:
        xi, h = stationary_velocity(model, model.boundary_point(x))
    tg = model.tau_christoffel(x)
    return np.concatenate([model.tau(x) * u, -np.einsum("cab,a,b->c", tg, u, u) - h * u])


def _frame_tau_gamma(frame: FrameField, y) -> np.ndarray:
    """``tau_f * Gamma^c_ab`` of a polar-adapted frame."""
    from .connection import frame_christoffel
    low, tf = frame_christoffel(frame, y)
    ginv = np.ones(frame.m)
    ginv[-1] = tf
    return tf * ginv[:, None, None] * low


def stationary_velocity(model: MetricModel, p, guess=None, orientation: int = 1) -> tuple[np.ndarray, float]:
    """Solve for the stationary velocity of ``S~`` over the boundary point ``p``.

    The direction ``d`` (normalized by ``d tau(d) = 1``) solves
    ``(tau Gamma)_p(d, d) + d tau(d) d / 2 = 0``; it is then scaled so that
    ``|tau g(xi, xi)| = 1``.  Returns ``(xi, h)`` with ``h = d tau(xi) / 2``.
    """
    p = np.asarray(p, dtype=float)
    m = model.m
    tg = model.tau_christoffel(p)
    dt = model.dtau(p)
    d0 = dt / (dt @ dt)
    # tangent basis of ker dtau
    _, _, vt = np.linalg.svd(dt[None, :])
    T = vt[1:].T
    if guess is None:
        guess = np.zeros(m)
        guess[model.normal_index] = 1.0
    guess = np.asarray(guess, dtype=float)
    guess = guess / (dt @ guess)
    c0 = T.T @ (guess - d0)

    def resid(c):
        d = d0 + T @ c
        return np.einsum("cab,a,b->c", tg, d, d) + 0.5 * d

    sol = least_squares(resid, c0, xtol=1e-15, ftol=1e-15, gtol=1e-15)
    d = d0 + T @ sol.x
    tgm = model.tau_metric(p)
    nrm = abs(float(d @ tgm @ d))
    if nrm == 0.0:
        raise IntegrationFailure("stationary direction is null for tau*g")
    xi = orientation * d / np.sqrt(nrm)
    return xi, 0.5 * float(dt @ xi)


@dataclass
class Linearization:
    point: np.ndarray
    xi: np.ndarray
    h: float
    jacobian: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    template: np.ndarray
    matches: bool
    eta: np.ndarray
    stationarity: float

    def as_dict(self) -> dict:
        return {"point": self.point.tolist(), "xi": self.xi.tolist(), "h": self.h,
                "eigenvalues": [float(v) for v in self.eigenvalues.real],
                "template": self.template.tolist(), "matches": bool(self.matches),
                "stationarity": self.stationarity}


def spectrum_template(m: int, h: float) -> np.ndarray:
    return np.sort(np.array([0.0] * (m - 1) + [-h] * (m - 1) + [h, 2 * h]))


def linearize_at_boundary(model: MetricModel, p, xi=None, fd_step: float = 1e-4,
                          tol: float = 1e-6) -> Linearization:
    """Jacobian of ``S~`` at its stationary point over ``p`` and its spectrum."""
    p = np.asarray(p, dtype=float)
    m = model.m
    if xi is None:
        xi, h = stationary_velocity(model, p)
    else:
        xi = np.asarray(xi, dtype=float)
        h = 0.5 * float(model.dtau(p) @ xi)
    z0 = np.concatenate([p, xi])
    F = lambda z: desingularized_spray(model, z, h)
    stat = float(np.max(np.abs(F(z0))))
    J = fd_jacobian(F, z0, fd_step * model.scale)
    ev, vecs = np.linalg.eig(J)
    order = np.argsort(ev.real)
    ev, vecs = ev[order], vecs[:, order]
    tmpl = spectrum_template(m, h)
    matches = bool(np.max(np.abs(np.sort(ev.real) - tmpl)) < tol and np.max(np.abs(ev.imag)) < tol)
    j = int(np.argmin(np.abs(ev - 2 * h)))
    eta = np.real(vecs[:, j])
    eta = eta / np.linalg.norm(eta)
    return Linearization(p, xi, h, J, ev, vecs, tmpl, matches, eta, stat)


@dataclass
class _Half:
    sign: float          # sign of tau on this half
    sol: object
    lam_end: float
    tau_start: float
    tau_end: float
    direction: float = 1.0
    _nodes: tuple | None = field(default=None, repr=False)

    def nodes(self, model: MetricModel) -> tuple[np.ndarray, np.ndarray]:
        """Solver step parameters and ``log|tau|`` there (cached)."""
        if self._nodes is None:
            lam = np.asarray(self.sol.ts, dtype=float)
            X = self.sol(lam)[: model.m]
            with np.errstate(divide="ignore"):
                logt = np.log(np.abs([model.tau(x) for x in X.T]))
            order = np.argsort(lam)
            self._nodes = (lam[order], logt[order])
        return self._nodes

    def lam_at(self, model: MetricModel, t: float) -> float:
        """Parameter where ``tau = t``.

        ``log|tau|`` is monotone along the half with derivative
        ``direction * d tau(u)`` (the position moves by ``tau u``), so a
        bracketed Newton iteration in log space, started from the solver's
        own steps, converges in a few evaluations.
        """
        m = model.m
        lam, logt = self.nodes(model)
        target = math.log(abs(t))
        if target >= logt[-1]:
            return float(lam[-1])
        lo, hi = float(lam[0]), float(lam[-1])
        x = float(np.interp(target, np.maximum.accumulate(logt), lam))
        for _ in range(40):
            z = self.sol(x)
            tau = model.tau(z[:m])
            f = math.log(abs(tau)) - target if tau != 0.0 else -math.inf
            if f == 0.0:
                return x
            if f < 0.0:
                lo = x
            else:
                hi = x
            d = self.direction * float(model.dtau(z[:m]) @ z[m:])
            step = -f / d if d > 0.0 and math.isfinite(f) else math.inf
            nxt = x + step
            if not lo < nxt < hi:
                nxt = 0.5 * (lo + hi)
            if abs(nxt - x) <= 1e-15 * max(1.0, abs(x)) or hi - lo <= 1e-15 * max(1.0, abs(x)):
                return nxt
            x = nxt
        return x


@dataclass
class Trajectory:
    """Crossing curve sampled by ``t = tau`` (increasing)."""

    model: MetricModel = field(repr=False)
    point: np.ndarray
    xi: np.ndarray
    h: float
    t: np.ndarray
    points: np.ndarray
    velocities: np.ndarray
    crossing_index: int
    meta: dict
    halves: list = field(repr=False, default_factory=list)
    t_lin: float = 0.0
    s: np.ndarray | None = None

    @property
    def t_range(self) -> tuple[float, float]:
        return float(self.t[0]), float(self.t[-1])

    def _state(self, t: float) -> np.ndarray:
        t = float(t)
        m = self.model.m
        if abs(t) <= self.t_lin:
            dt = self.model.dtau(self.point)
            v = self.xi / float(dt @ self.xi)
            return np.concatenate([self.point + t * v, self.xi])
        for hf in self.halves:
            if np.sign(t) == hf.sign:
                if abs(t) > abs(hf.tau_end) * (1 + 1e-12):
                    raise LeftDomain(f"t={t} outside the integrated range")
                return hf.sol(hf.lam_at(self.model, t))
        raise LeftDomain(f"t={t} not covered")

    def x_at(self, t: float) -> np.ndarray:
        return self._state(t)[: self.model.m]

    def velocity_at(self, t: float) -> np.ndarray:
        """``d gamma / d t`` where ``t = tau``."""
        z = self._state(t)
        m = self.model.m
        v = z[m:]
        return v / float(self.model.dtau(z[:m]) @ v)

    def raw_velocity_at(self, t: float) -> np.ndarray:
        return self._state(t)[self.model.m:]

    def crossing_direction(self) -> np.ndarray:
        v = self.velocity_at(0.0)
        return v / np.linalg.norm(v)

    def rows(self) -> list[list[float]]:
        out = []
        for t, x, v in zip(self.t, self.points, self.velocities):
            out.append([float(t), *map(float, x), *map(float, v), float(t)])
        return out

    def header(self) -> list[str]:
        c = list(self.model.coords)
        return ["t", *c, *[f"d{n}" for n in c], "tau"]


def _integrate_half(model: MetricModel, z0, h, direction: float, tau_max: float,
                    lam_max: float, rtol: float, atol: float):
    m = model.m
    lo = model.domain[:, 0]
    hi = model.domain[:, 1]

    def rhs(_, z):
        return direction * desingularized_spray(model, z, h)

    def ev_tau(_, z):
        return abs(model.tau(z[:m])) - tau_max
    ev_tau.terminal = True

    def ev_dom(_, z):
        x = z[:m]
        return float(min(np.min(x - lo), np.min(hi - x)))
    ev_dom.terminal = True

    sol = solve_ivp(rhs, (0.0, lam_max), z0, method="DOP853", rtol=rtol, atol=atol,
                    dense_output=True, events=(ev_tau, ev_dom))
    if sol.status == -1:
        raise IntegrationFailure(sol.message)
    return sol


def integrate_pregeodesic(model: MetricModel, p, tau_max: float | None = None,
                          nudge: float = 1e-7, rtol: float = RTOL, atol: float = ATOL,
                          xi=None, orientation: int = 1) -> Trajectory:
    """Crossing pregeodesic through the boundary point ``p``.

    The stationary phase point is nudged by ``+-nudge*scale`` along the
    ``2h`` eigenvector of the linearization and ``S~`` is integrated away
    from it (forward in its parameter when ``h > 0``, backward otherwise),
    giving one half of the curve on each side.
    """
    p = np.asarray(p, dtype=float)
    m = model.m
    if tau_max is None:
        tau_max = 0.6 * model.scale
    lin = linearize_at_boundary(model, p, xi=xi if xi is not None else
                                stationary_velocity(model, p, orientation=orientation)[0])
    h = lin.h
    direction = 1.0 if h > 0 else -1.0
    eps = nudge * model.scale
    lam_max = (np.log(tau_max / eps) + 40.0) / (2.0 * abs(h))
    halves = []
    t_lin = 0.0
    steps = 0
    for sgn in (1.0, -1.0):
        z0 = np.concatenate([p, lin.xi]) + sgn * eps * lin.eta
        tau0 = model.tau(z0[:m])
        sol = _integrate_half(model, z0, h, direction, tau_max, lam_max, rtol, atol)
        steps += sol.t.size
        zend = sol.y[:, -1]
        hf = _Half(np.sign(model.tau(zend[:m])), sol.sol, float(sol.t[-1]), tau0, model.tau(zend[:m]),
                   direction)
        if hf.sign == 0:
            raise IntegrationFailure("half trajectory did not leave the degenerate set")
        t_lin = max(t_lin, abs(tau0))
        halves.append(hf)
    if halves[0].sign == halves[1].sign:
        raise IntegrationFailure("both halves ended on the same side; the nudge did not split the crossing")
    traj = Trajectory(model, p, lin.xi, h, np.empty(0), np.empty((0, m)), np.empty((0, m)), 0,
                      {"method": "DOP853", "rtol": rtol, "atol": atol, "nudge": eps,
                       "steps": int(steps), "h": h, "spectrum_matches": lin.matches,
                       "stationarity": lin.stationarity},
                      halves, t_lin)
    lo_t = min(hf.tau_end for hf in halves)
    hi_t = max(hf.tau_end for hf in halves)
    ts = np.concatenate([-np.geomspace(abs(lo_t), 1e-6 * model.scale, 60), [0.0],
                         np.geomspace(1e-6 * model.scale, hi_t, 60)])
    pts = np.array([traj.x_at(t) for t in ts])
    vel = np.array([traj.velocity_at(t) for t in ts])
    traj.t, traj.points, traj.velocities = ts, pts, vel
    traj.crossing_index = 60
    return traj


@dataclass
class GeodesicSolution:
    lam: np.ndarray
    points: np.ndarray
    velocities: np.ndarray
    status: str
    sol: object = field(repr=False)


def integrate_geodesic(model: MetricModel, q, v, lam_span=(0.0, 1.0), stop_tol: float | None = None,
                       rtol: float = RTOL, atol: float = ATOL, raise_on_stop: bool = False) -> GeodesicSolution:
    """Levi-Civita geodesic from a nondegenerate point."""
    q = np.asarray(q, dtype=float)
    m = model.m
    if abs(model.det(q)) <= model.tol_degeneracy(q):
        raise DegeneratePoint("geodesic start is on the degenerate set")
    stop = 1e-3 * model.scale if stop_tol is None else stop_tol
    lo, hi = model.domain[:, 0], model.domain[:, 1]

    def rhs(_, z):
        return np.concatenate([z[m:], -_christoffel_v(model, z[:m], z[m:])])

    def ev_tau(_, z):
        return abs(model.tau(z[:m])) - stop
    ev_tau.terminal = True

    pad = 1e-9 * model.scale  # starting on the edge of the box is allowed

    def ev_dom(_, z):
        x = z[:m]
        return float(min(np.min(x - lo), np.min(hi - x))) + pad
    ev_dom.terminal = True

    sol = solve_ivp(rhs, lam_span, np.concatenate([q, v]), method="DOP853", rtol=rtol, atol=atol,
                    dense_output=True, events=(ev_tau, ev_dom))
    status = "completed"
    if sol.status == 1:
        status = "approached_boundary" if sol.t_events[0].size else "left_domain"
        if raise_on_stop:
            raise (ApproachedBoundary if status == "approached_boundary" else LeftDomain)(status)
    elif sol.status == -1:
        raise IntegrationFailure(sol.message)
    return GeodesicSolution(sol.t, sol.y[:m].T, sol.y[m:].T, status, sol.sol)


def geodesic_residual(model: MetricModel, x, v, a) -> np.ndarray:
    """``a + Gamma(v, v)`` for a curve with velocity ``v`` and acceleration ``a``."""
    return np.asarray(a) + _christoffel_v(model, x, v)


def pregeodesic_residual(model: MetricModel, traj: Trajectory, t: float, h: float = 1e-4) -> float:
    """Relative size of the part of ``nabla_{g'} g'`` not parallel to ``g'``
    at parameter ``t`` (``t = tau``), from a fourth-order stencil of the
    dense trajectory."""
    x = traj.x_at(t)
    v = traj.velocity_at(t)
    vp = [traj.velocity_at(t + k * h) for k in (-2, -1, 1, 2)]
    a = (vp[0] - 8 * vp[1] + 8 * vp[2] - vp[3]) / (12 * h)
    acc = a + _christoffel_v(model, x, v)
    lam = float(acc @ v) / float(v @ v)
    perp = acc - lam * v
    return float(np.linalg.norm(perp) / max(np.linalg.norm(acc), np.linalg.norm(_christoffel_v(model, x, v)), 1e-300))


def hausdorff(A: np.ndarray, B: np.ndarray) -> float:
    from scipy.spatial.distance import cdist
    D = cdist(np.asarray(A), np.asarray(B))
    return float(max(D.min(axis=1).max(), D.min(axis=0).max()))
