"""Limit estimation and finite-difference helpers.

Quantities that are smooth across the degenerate hypersurface but are
assembled from singular pieces (``tau * g``, ``tau * Gamma``...) lose
precision close to it.  :func:`regularize` evaluates such a quantity from
nodes on both sides, far enough away to be well conditioned, and
interpolates back.  :func:`richardson` certifies one-sided limits.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "RichardsonResult", "richardson", "richardson_along", "ExponentFit",
    "fit_exponent", "lagrange_weights", "regularize", "fd_gradient",
    "fd_jacobian", "fd_derivative",
]

DEFAULT_LEVELS = 11
DECAY_FACTOR = 1.5


@dataclass
class RichardsonResult:
    """Outcome of a Richardson limit estimate on ``tau_n = tau0 * 2**-n``."""

    limit: np.ndarray
    extends: bool
    taus: np.ndarray
    values: np.ndarray
    extrapolants: np.ndarray
    deltas: np.ndarray
    error: float
    floor: float

    def as_dict(self) -> dict:
        lim = np.asarray(self.limit)
        return {
            "limit": lim.tolist() if lim.ndim else float(lim),
            "extends": bool(self.extends),
            "error": float(self.error),
            "last_deltas": [float(d) for d in self.deltas[-4:]],
        }


def richardson(values, taus=None, order: int = 4, floor: float = 1e-8,
               window: int = 4) -> RichardsonResult:
    """Extrapolate a sequence sampled at geometrically halving ``tau``.

    ``values[n]`` is the quantity at ``tau0 * 2**-n`` (arrays allowed; the
    verdict uses the max norm).  The extrapolant at level ``n`` is the
    Richardson table entry of order ``min(n, order)`` assuming an expansion
    in integer powers of ``tau``.  The limit *extends* when each of the last
    ``window`` deltas either shrinks by at least 1.5 relative to its
    predecessor or sits below ``floor * (1 + |limit|)``.
    """
    vals = np.asarray(values, dtype=float)
    n_lev = vals.shape[0]
    if taus is None:
        taus = 2.0 ** -np.arange(n_lev)
    table = [vals[0]]
    extrap = [vals[0]]
    for n in range(1, n_lev):
        row = [vals[n]]
        for k in range(1, min(n, order) + 1):
            fac = 2.0 ** k
            row.append((fac * row[k - 1] - table[k - 1]) / (fac - 1.0))
        table = row
        extrap.append(row[-1])
    extrap = np.array(extrap)
    flat = extrap.reshape(n_lev, -1)
    deltas = np.max(np.abs(np.diff(flat, axis=0)), axis=1)
    limit = extrap[-1]
    scale = 1.0 + float(np.max(np.abs(limit))) if np.all(np.isfinite(limit)) else 1.0
    thresh = floor * scale
    ok = bool(np.all(np.isfinite(flat)))
    if ok:
        tail = deltas[-window:]
        prev = deltas[-window - 1:-1]
        for d, dp in zip(tail, prev):
            if d <= thresh:
                continue
            if dp <= thresh or dp / d < DECAY_FACTOR:
                ok = False
                break
    return RichardsonResult(limit=limit, extends=ok, taus=np.asarray(taus),
                            values=vals, extrapolants=extrap, deltas=deltas,
                            error=float(deltas[-1]) if len(deltas) else 0.0,
                            floor=thresh)


def richardson_along(fn: Callable[[np.ndarray], np.ndarray], base: np.ndarray,
                     direction: np.ndarray, tau0: float, levels: int = DEFAULT_LEVELS,
                     **kw) -> RichardsonResult:
    """Richardson limit of ``fn(base + tau_n * direction)`` as ``tau_n -> 0``."""
    base = np.asarray(base, dtype=float)
    direction = np.asarray(direction, dtype=float)
    taus = tau0 * 2.0 ** -np.arange(levels)
    vals = np.array([np.asarray(fn(base + t * direction), dtype=float) for t in taus])
    return richardson(vals, taus, **kw)


@dataclass
class ExponentFit:
    exponent: float
    coefficient: float
    residual: float
    taus: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    def verdict(self, band: float = 0.05) -> str:
        """``diverges`` (~tau^-1), ``extends`` (bounded) or ``inconclusive``."""
        if abs(self.exponent + 1.0) <= band:
            return "diverges"
        if self.exponent > -0.2 or not np.isfinite(self.exponent):
            return "extends"
        return "inconclusive"

    def as_dict(self) -> dict:
        return {"exponent": float(self.exponent), "coefficient": float(self.coefficient),
                "residual": float(self.residual), "verdict": self.verdict()}


def fit_exponent(fn: Callable[[float], float], lo: float = 1e-3, hi: float = 1e-1,
                 n: int = 12) -> ExponentFit:
    """Least-squares fit of ``log|fn(tau)| = log c + p log tau``."""
    taus = np.logspace(np.log10(lo), np.log10(hi), n)
    vals = np.array([float(fn(t)) for t in taus])
    mags = np.abs(vals)
    if np.all(mags < 1e-300):
        return ExponentFit(np.inf, 0.0, 0.0, taus, vals)
    mags = np.maximum(mags, 1e-300)
    A = np.vstack([np.ones(n), np.log(taus)]).T
    coef, res, *_ = np.linalg.lstsq(A, np.log(mags), rcond=None)
    resid = float(np.sqrt(res[0] / n)) if res.size else 0.0
    return ExponentFit(float(coef[1]), float(np.exp(coef[0])), resid, taus, vals)


def lagrange_weights(nodes, at: float = 0.0) -> np.ndarray:
    nodes = np.asarray(nodes, dtype=float)
    w = np.ones(len(nodes))
    for j, xj in enumerate(nodes):
        for i, xi in enumerate(nodes):
            if i != j:
                w[j] *= (at - xi) / (xj - xi)
    return w


_OFFSETS = np.array([-4, -3, -2, -1, 1, 2, 3, 4], dtype=float)
_WEIGHTS = lagrange_weights(_OFFSETS)


def regularize(fn: Callable[[np.ndarray], np.ndarray], tau: Callable[[np.ndarray], float],
               axis: int, delta: float, guard: float,
               batch: Callable[[np.ndarray], np.ndarray] | None = None) -> Callable[[np.ndarray], np.ndarray]:
    """Wrap ``fn`` so that it is well conditioned near ``tau = 0``.

    When ``|tau(x)| < guard`` the value is interpolated (degree 7) from
    ``x + j*delta*e_axis`` for ``j = +-1..+-4``.  ``guard`` must stay well
    below ``delta * |d tau / d x^axis|`` so every node is about ``delta``
    away from the zero set; a small guard saves interpolations but lets
    the direct formula run closer to the zero set.  ``batch``, if given, evaluates
    ``fn`` on a stack of points in one call.
    """
    def wrapped(x):
        x = np.asarray(x, dtype=float)
        if abs(tau(x)) >= guard:
            return fn(x)
        if batch is not None:
            Y = np.repeat(x[None, :], len(_OFFSETS), axis=0)
            Y[:, axis] += _OFFSETS * delta
            return np.tensordot(_WEIGHTS, batch(Y), axes=1)
        acc = None
        for off, w in zip(_OFFSETS, _WEIGHTS):
            y = x.copy()
            y[axis] += off * delta
            term = w * np.asarray(fn(y), dtype=float)
            acc = term if acc is None else acc + term
        return acc

    return wrapped


def fd_derivative(fn: Callable[[float], np.ndarray], t: float, h: float) -> np.ndarray:
    """Fourth-order central difference of a scalar-argument function."""
    return (-np.asarray(fn(t + 2 * h)) + 8 * np.asarray(fn(t + h))
            - 8 * np.asarray(fn(t - h)) + np.asarray(fn(t - 2 * h))) / (12.0 * h)


def fd_jacobian(fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: float = 1e-3) -> np.ndarray:
    """Fourth-order Jacobian; ``J[..., b] = d fn / d x^b``."""
    x = np.asarray(x, dtype=float)
    cols = []
    for b in range(x.size):
        e = np.zeros_like(x)
        e[b] = 1.0
        cols.append(fd_derivative(lambda s: fn(x + s * e), 0.0, h))
    return np.stack(cols, axis=-1)


def fd_gradient(fn: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-3) -> np.ndarray:
    return np.asarray(fd_jacobian(lambda y: np.asarray([fn(y)]), x, h))[0]
