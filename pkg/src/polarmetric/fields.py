"""Vector fields and one-forms on the chart.

A field is a callable ``x -> components`` with a ``jacobian(x)`` method
returning ``J[a, b] = d_b V^a``.  Expression-backed fields differentiate
exactly; function-backed fields fall back to fourth-order differences.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import expr as ex
from .limits import fd_jacobian

__all__ = ["Field", "ExprField", "FuncField", "coordinate_field", "as_field", "lie_bracket"]


class Field:
    m: int

    def __call__(self, x) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, x) -> np.ndarray:
        raise NotImplementedError

    def components_str(self) -> list[str] | None:
        return None


class ExprField(Field):
    """Components given as expressions in the chart coordinates."""

    def __init__(self, components: Sequence[ex.Expr | str | float], coords: Sequence[str]):
        self.coords = tuple(coords)
        self.m = len(self.coords)
        comps = []
        for c in components:
            if isinstance(c, ex.Expr):
                comps.append(c)
            elif isinstance(c, str):
                comps.append(ex.parse(c, self.coords))
            else:
                comps.append(ex.Const(float(c)))
        if len(comps) != self.m:
            raise ValueError("field needs one component per coordinate")
        self.exprs = comps
        self._f = ex.compile_expr(comps, self.coords)
        self._j = ex.compile_expr([ex.derive(c, v) for c in comps for v in self.coords], self.coords)

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self._f(x))

    def jacobian(self, x) -> np.ndarray:
        return np.asarray(self._j(x)).reshape(self.m, self.m)

    def components_str(self) -> list[str]:
        return [ex.to_string(c) for c in self.exprs]

    def __repr__(self):
        return f"ExprField({self.components_str()})"


class FuncField(Field):
    """Components computed by an arbitrary function."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], m: int, h: float = 1e-3,
                 jac: Callable[[np.ndarray], np.ndarray] | None = None, label: str = "numeric"):
        self.fn = fn
        self.m = m
        self.h = h
        self._jac = jac
        self.label = label

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float)

    def jacobian(self, x) -> np.ndarray:
        if self._jac is not None:
            return self._jac(x)
        return fd_jacobian(self, np.asarray(x, dtype=float), self.h)

    def __repr__(self):
        return f"FuncField({self.label})"


def coordinate_field(index: int, coords: Sequence[str]) -> ExprField:
    comps = [1.0 if a == index else 0.0 for a in range(len(coords))]
    return ExprField(comps, coords)


def as_field(obj, coords: Sequence[str]) -> Field:
    """Accept a Field, a list of expression strings, or a coordinate name."""
    if isinstance(obj, Field):
        return obj
    if isinstance(obj, str):
        if obj in coords:
            return coordinate_field(list(coords).index(obj), coords)
        return ExprField([s.strip() for s in obj.split(",")], coords)
    return ExprField(list(obj), coords)


def lie_bracket(A: Field, B: Field, x) -> np.ndarray:
    """``[A, B](x) = (DB) A - (DA) B``."""
    return B.jacobian(x) @ A(x) - A.jacobian(x) @ B(x)
