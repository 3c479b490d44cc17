"""Scalar data fields on surfaces.

A field is anything with ``__call__(points) -> values``.  Fields built from a
formula in ``x, y, z`` also carry an exact Euclidean gradient and a stable
text key, which is what the reference cache hashes.

The tangential gradient of a field at a surface point is the tangential part
of the Euclidean gradient of any extension of it.  Fields without an analytic
gradient are differentiated along the constant-normal extension
``f(closest_point(.))`` with a fourth-order central difference.
"""
from __future__ import annotations

import numpy as np
import sympy

_X, _Y, _Z = sympy.symbols("x y z", real=True)

_NAMESPACE = {
    "x": _X, "y": _Y, "z": _Z,
    "pi": sympy.pi, "e": sympy.E,
    "exp": sympy.exp, "log": sympy.log, "sqrt": sympy.sqrt,
    "sin": sympy.sin, "cos": sympy.cos, "tan": sympy.tan,
    "atan2": sympy.atan2, "acos": sympy.acos, "asin": sympy.asin,
    "abs": sympy.Abs, "Abs": sympy.Abs,
}
# geodesic distance from the north pole of the unit sphere
_NAMESPACE["polar_angle"] = sympy.atan2(sympy.sqrt(_X ** 2 + _Y ** 2), _Z)

FD_STEP = 1e-3


class Field:
    key = None

    def __call__(self, points):
        raise NotImplementedError

    def euclidean_gradient(self, points):
        return None

    def __add__(self, other):
        return SumField(self, as_field(other))


class ExpressionField(Field):
    """Field given by a formula in the Cartesian coordinates ``x, y, z``.

    >>> f = ExpressionField("z + 0.5")
    >>> float(f(np.array([[0.0, 0.0, 1.0]]))[0])
    1.5
    """

    def __init__(self, expr: str):
        self.expr = str(expr).strip()
        try:
            sym = sympy.sympify(self.expr, locals=_NAMESPACE)
        except (sympy.SympifyError, SyntaxError, TypeError) as exc:
            raise ValueError(f"cannot parse field expression {self.expr!r}: {exc}")
        extra = sym.free_symbols - {_X, _Y, _Z}
        if extra:
            raise ValueError(f"unknown symbols {sorted(map(str, extra))} in {self.expr!r}")
        self.sym = sym
        self._f = sympy.lambdify((_X, _Y, _Z), sym, modules="numpy")
        self._grad = [sympy.lambdify((_X, _Y, _Z), sympy.diff(sym, v), modules="numpy")
                      for v in (_X, _Y, _Z)]
        self.key = "expr:" + sympy.srepr(sym)

    def __repr__(self):
        return f"ExpressionField({self.expr!r})"

    def __call__(self, points):
        p = np.atleast_2d(points)
        out = self._f(p[:, 0], p[:, 1], p[:, 2])
        return np.broadcast_to(np.asarray(out, dtype=float), (p.shape[0],)).copy()

    def euclidean_gradient(self, points):
        p = np.atleast_2d(points)
        cols = [np.broadcast_to(np.asarray(g(p[:, 0], p[:, 1], p[:, 2]), dtype=float),
                                (p.shape[0],)) for g in self._grad]
        return np.stack(cols, axis=1)


class ConstantField(Field):
    def __init__(self, value: float):
        self.value = float(value)
        self.key = f"const:{self.value!r}"

    def __repr__(self):
        return f"ConstantField({self.value!r})"

    def __call__(self, points):
        return np.full(np.atleast_2d(points).shape[0], self.value)

    def euclidean_gradient(self, points):
        return np.zeros((np.atleast_2d(points).shape[0], 3))


class CallableField(Field):
    """Wraps a plain function; gradients fall back to finite differences."""

    def __init__(self, func, gradient=None, key=None):
        self.func = func
        self._gradient = gradient
        self.key = key

    def __call__(self, points):
        p = np.atleast_2d(points)
        return np.broadcast_to(np.asarray(self.func(p), dtype=float), (p.shape[0],)).copy()

    def euclidean_gradient(self, points):
        if self._gradient is None:
            return None
        return np.asarray(self._gradient(np.atleast_2d(points)), dtype=float)


class SumField(Field):
    def __init__(self, a: Field, b: Field):
        self.a, self.b = a, b
        self.key = None if a.key is None or b.key is None else f"sum({a.key},{b.key})"

    def __call__(self, points):
        return self.a(points) + self.b(points)

    def euclidean_gradient(self, points):
        ga, gb = self.a.euclidean_gradient(points), self.b.euclidean_gradient(points)
        if ga is None or gb is None:
            return None
        return ga + gb


def as_field(f) -> Field:
    if isinstance(f, Field):
        return f
    if isinstance(f, (int, float, np.floating, np.integer)):
        return ConstantField(float(f))
    if isinstance(f, str):
        return parse_field(f)
    if callable(f):
        return CallableField(f)
    raise TypeError(f"cannot interpret {f!r} as a scalar field")


def parse_field(text: str) -> Field:
    text = str(text).strip()
    try:
        return ConstantField(float(text))
    except ValueError:
        return ExpressionField(text)


def tangential_gradient(desc, f, points):
    """Surface gradient of ``f`` at points ``p`` lying on ``desc``.

    Returns an ``(n, 3)`` array of tangent vectors.
    """
    p = np.atleast_2d(np.asarray(points, dtype=float))
    f = as_field(f)
    g = f.euclidean_gradient(p)
    if g is not None:
        n = desc.normal(p)
        return g - np.sum(g * n, axis=1)[:, None] * n
    # constant-normal extension has no normal derivative
    basis = desc.tangent_basis(p)
    out = np.zeros_like(p)
    h = FD_STEP
    for k in range(2):
        t = basis[:, k, :]
        fp1 = f(desc.closest_point(p + h * t))
        fm1 = f(desc.closest_point(p - h * t))
        fp2 = f(desc.closest_point(p + 2 * h * t))
        fm2 = f(desc.closest_point(p - 2 * h * t))
        d = (8.0 * (fp1 - fm1) - (fp2 - fm2)) / (12.0 * h)
        out += d[:, None] * t
    return out
