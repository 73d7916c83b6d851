"""Truncated multivariate Taylor arithmetic (jets) up to third order.

A :class:`Jet` carries the value of a scalar quantity together with its
first, second and third partial derivatives with respect to a fixed set of
seed variables.  Arithmetic and the elementary functions below propagate
the derivatives exactly (Leibniz rule and Faa di Bruno's formula), so a
smooth map written with them can be differentiated without any
finite-difference error.

The elementary functions accept plain floats as well, which lets a single
evaluator serve both point evaluation and jet evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateImmersionError, DomainError

MAX_ORDER = 3

__all__ = [
    "Jet",
    "SmoothMap",
    "jet_eval",
    "jacobian",
    "taylor_arrays",
    "compose_taylor",
    "partials",
    "value_of",
    "sin",
    "cos",
    "tan",
    "exp",
    "log",
    "sqrt",
    "sinh",
    "cosh",
    "tanh",
    "inv",
    "sym_index_pairs",
    "pack_sym",
    "unpack_sym",
]


def _sym3(a, b):
    """a_i B_jk + a_j B_ik + a_k B_ij for a vector a and a symmetric matrix B."""
    t = np.multiply.outer(a, b)
    return t + t.transpose(1, 0, 2) + t.transpose(1, 2, 0)


class Jet:
    """Value plus dense, symmetric partial derivatives up to ``order``.

    ``d1[i]`` is the first partial along seed variable ``i``; ``d2[i, j]``
    and ``d3[i, j, k]`` hold the mixed second and third partials.
    """

    __slots__ = ("value", "d1", "d2", "d3", "order")
    __array_ufunc__ = None
    __array_priority__ = 1000

    def __init__(self, value, d1=None, d2=None, d3=None):
        self.value = float(value)
        self.d1 = d1
        self.d2 = d2
        self.d3 = d3
        if d1 is None:
            self.order = 0
        elif d2 is None:
            self.order = 1
        elif d3 is None:
            self.order = 2
        else:
            self.order = 3

    @classmethod
    def variable(cls, value, index, nvar, order):
        """Seed jet for coordinate ``index`` out of ``nvar``."""
        if order == 0:
            return cls(value)
        d1 = np.zeros(nvar)
        d1[index] = 1.0
        d2 = np.zeros((nvar, nvar)) if order >= 2 else None
        d3 = np.zeros((nvar, nvar, nvar)) if order >= 3 else None
        return cls(value, d1, d2, d3)

    @classmethod
    def constant(cls, value, nvar, order):
        arrays = [np.zeros((nvar,) * k) for k in range(1, order + 1)]
        return cls(value, *arrays)

    @property
    def nvar(self):
        return 0 if self.d1 is None else self.d1.shape[0]

    def derivatives(self):
        return [d for d in (self.d1, self.d2, self.d3) if d is not None]

    def truncate(self, order):
        """Drop every derivative above ``order``."""
        parts = self.derivatives()[:order]
        return Jet(self.value, *parts)

    def partial(self, i):
        """Jet of the partial derivative along seed ``i`` (one order lower)."""
        if self.order == 0:
            raise ValueError("cannot differentiate an order-0 jet")
        parts = [d[i] for d in self.derivatives()[1:]]
        return Jet(self.d1[i], *parts)

    # -- arithmetic -------------------------------------------------------

    def _align(self, other):
        if self.order == other.order:
            return self, other
        k = min(self.order, other.order)
        return self.truncate(k), other.truncate(k)

    def __add__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.value + other, *self.derivatives())
        a, b = self._align(other)
        return Jet(a.value + b.value, *[x + y for x, y in zip(a.derivatives(), b.derivatives())])

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.value, *[-d for d in self.derivatives()])

    def __pos__(self):
        return self

    def __sub__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.value - other, *self.derivatives())
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.value * other, *[d * other for d in self.derivatives()])
        f, g = self._align(other)
        f0, g0 = f.value, g.value
        if f.order == 0:
            return Jet(f0 * g0)
        d1 = f0 * g.d1 + g0 * f.d1
        if f.order == 1:
            return Jet(f0 * g0, d1)
        cross = np.outer(f.d1, g.d1)
        d2 = f0 * g.d2 + g0 * f.d2 + cross + cross.T
        if f.order == 2:
            return Jet(f0 * g0, d1, d2)
        d3 = f0 * g.d3 + g0 * f.d3 + _sym3(f.d1, g.d2) + _sym3(g.d1, f.d2)
        return Jet(f0 * g0, d1, d2, d3)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return self * (1.0 / other)
        return self * _reciprocal(other)

    def __rtruediv__(self, other):
        return _reciprocal(self) * other

    def __pow__(self, p):
        if isinstance(p, Jet):
            return exp(p * log(self))
        p = float(p)
        if p == 0.0:
            return Jet.constant(1.0, self.nvar, self.order)
        if p == 1.0:
            return self
        if p == 2.0:
            return self * self
        x = self.value
        if p.is_integer():
            derivs = []
            coef = 1.0
            for k in range(4):
                power = p - k
                if coef == 0.0:
                    derivs.append(0.0)
                elif power < 0 and x == 0.0:
                    raise DomainError(f"power {p} undefined at 0")
                else:
                    derivs.append(coef * x ** power)
                coef *= power
            return self._compose(*derivs)
        if x <= 0.0:
            raise DomainError(f"non-integer power {p} of non-positive value {x}")
        return self._compose(x ** p, p * x ** (p - 1), p * (p - 1) * x ** (p - 2),
                             p * (p - 1) * (p - 2) * x ** (p - 3))

    def __rpow__(self, base):
        return exp(self * math.log(base))

    def _compose(self, f0, f1, f2, f3):
        """Chain rule for phi(self) given phi and its first three derivatives."""
        if self.order == 0:
            return Jet(f0)
        a1 = self.d1
        d1 = f1 * a1
        if self.order == 1:
            return Jet(f0, d1)
        d2 = f2 * np.outer(a1, a1) + f1 * self.d2
        if self.order == 2:
            return Jet(f0, d1, d2)
        d3 = (f3 * np.multiply.outer(np.outer(a1, a1), a1)
              + f2 * _sym3(a1, self.d2) + f1 * self.d3)
        return Jet(f0, d1, d2, d3)

    # value comparisons so evaluators may branch on the base point
    def __lt__(self, other):
        return self.value < value_of(other)

    def __le__(self, other):
        return self.value <= value_of(other)

    def __gt__(self, other):
        return self.value > value_of(other)

    def __ge__(self, other):
        return self.value >= value_of(other)

    def __float__(self):
        return self.value

    def __abs__(self):
        return -self if self.value < 0 else self

    def __repr__(self):
        return f"Jet(value={self.value!r}, order={self.order}, nvar={self.nvar})"


def _reciprocal(x: Jet) -> Jet:
    v = x.value
    if v == 0.0:
        raise ZeroDivisionError("jet division by a quantity whose value is 0")
    r = 1.0 / v
    return x._compose(r, -r * r, 2.0 * r ** 3, -6.0 * r ** 4)


def value_of(x):
    return x.value if isinstance(x, Jet) else float(x)


def _elementary(name, point_fn, derivs):
    def fn(x):
        if isinstance(x, Jet):
            return x._compose(*derivs(x.value))
        return point_fn(x)

    fn.__name__ = name
    return fn


def _sin_derivs(v):
    s, c = math.sin(v), math.cos(v)
    return s, c, -s, -c


def _cos_derivs(v):
    s, c = math.sin(v), math.cos(v)
    return c, -s, -c, s


def _tan_derivs(v):
    t = math.tan(v)
    sec2 = 1.0 + t * t
    return t, sec2, 2.0 * t * sec2, 2.0 * sec2 * (1.0 + 3.0 * t * t)


def _exp_derivs(v):
    e = math.exp(v)
    return e, e, e, e


def _log_point(v):
    if v <= 0.0:
        raise DomainError(f"log of non-positive value {v}")
    return math.log(v)


def _log_derivs(v):
    r = 1.0 / v
    return _log_point(v), r, -r * r, 2.0 * r ** 3


def _sqrt_point(v):
    if v < 0.0:
        raise DomainError(f"sqrt of negative value {v}")
    return math.sqrt(v)


def _sqrt_derivs(v):
    if v <= 0.0:
        raise DomainError(f"sqrt is not differentiable at {v}")
    s = math.sqrt(v)
    return s, 0.5 / s, -0.25 / (s * v), 0.375 / (s * v * v)


def _sinh_derivs(v):
    s, c = math.sinh(v), math.cosh(v)
    return s, c, s, c


def _cosh_derivs(v):
    s, c = math.sinh(v), math.cosh(v)
    return c, s, c, s


def _tanh_derivs(v):
    t = math.tanh(v)
    s = 1.0 - t * t
    return t, s, -2.0 * t * s, s * (6.0 * t * t - 2.0)


sin = _elementary("sin", math.sin, _sin_derivs)
cos = _elementary("cos", math.cos, _cos_derivs)
tan = _elementary("tan", math.tan, _tan_derivs)
exp = _elementary("exp", math.exp, _exp_derivs)
log = _elementary("log", _log_point, _log_derivs)
sqrt = _elementary("sqrt", _sqrt_point, _sqrt_derivs)
sinh = _elementary("sinh", math.sinh, _sinh_derivs)
cosh = _elementary("cosh", math.cosh, _cosh_derivs)
tanh = _elementary("tanh", math.tanh, _tanh_derivs)


# -- smooth maps -----------------------------------------------------------


@dataclass(frozen=True)
class SmoothMap:
    """A map R^arity_in -> R^arity_out written with jet-aware operations.

    ``evaluator`` receives a sequence of inputs (floats or jets) and returns a
    sequence of ``arity_out`` outputs.  ``max_order`` is the highest jet order
    the map may be evaluated at.
    """

    arity_in: int
    arity_out: int
    evaluator: Callable[[Sequence], Sequence]
    max_order: int = MAX_ORDER
    name: str = "map"

    def __call__(self, point):
        point = _as_point(point, self.arity_in)
        out = _run(self, [float(p) for p in point], point)
        return np.array([value_of(o) for o in out])

    def compose(self, inner: "SmoothMap") -> "SmoothMap":
        """The map ``self o inner``."""
        if inner.arity_out != self.arity_in:
            raise ValueError(f"cannot compose {self.name} after {inner.name}: arity mismatch")

        def evaluator(z):
            return self.evaluator(list(inner.evaluator(z)))

        return SmoothMap(inner.arity_in, self.arity_out, evaluator,
                         min(self.max_order, inner.max_order), f"{self.name}o{inner.name}")


def _as_point(point, arity):
    point = np.asarray(point, dtype=float).reshape(-1)
    if point.shape[0] != arity:
        raise ValueError(f"point has dimension {point.shape[0]}, map expects {arity}")
    return point


def _run(smooth_map, inputs, point):
    try:
        out = list(smooth_map.evaluator(inputs))
    except DomainError as exc:
        if exc.point is None:
            raise DomainError(f"{smooth_map.name}: {exc}", point=point) from exc
        raise
    except (ZeroDivisionError, ValueError, OverflowError) as exc:
        raise DomainError(f"{smooth_map.name}: evaluator failed ({exc})", point=point) from exc
    if len(out) != smooth_map.arity_out:
        raise ValueError(f"{smooth_map.name} returned {len(out)} components, "
                         f"declared {smooth_map.arity_out}")
    return out


def jet_eval(smooth_map: SmoothMap, point, order: int) -> list[Jet]:
    """All partial derivatives of every output up to ``order`` at ``point``."""
    if not 0 <= order <= MAX_ORDER:
        raise ValueError(f"order must lie in 0..{MAX_ORDER}, got {order}")
    if order > smooth_map.max_order:
        raise ValueError(f"{smooth_map.name} is only differentiable to order "
                         f"{smooth_map.max_order}, requested {order}")
    point = _as_point(point, smooth_map.arity_in)
    n = point.shape[0]
    seeds = [Jet.variable(point[i], i, n, order) for i in range(n)]
    out = _run(smooth_map, seeds, point)
    result = []
    for o in out:
        if isinstance(o, Jet):
            result.append(o.truncate(order) if o.order > order else o)
        else:
            result.append(Jet.constant(o, n, order))
    low = min(j.order for j in result) if result else order
    if low < order:
        raise ValueError(f"{smooth_map.name} lost derivative order ({low} < {order})")
    return result


def taylor_arrays(jets: Sequence[Jet]):
    """Stack a jet vector into ``[values, d1, d2, d3]`` (as far as present)."""
    order = min(j.order for j in jets)
    arrays = [np.array([j.value for j in jets])]
    for k in range(order):
        arrays.append(np.stack([j.derivatives()[k] for j in jets]))
    return arrays


def compose_taylor(outer, inner: Sequence[Jet]) -> list[Jet]:
    """Chain rule: compose Taylor data of an outer map with inner jets.

    ``outer`` is ``[F0, F1, F2, F3]`` (values, gradient, Hessian, third
    derivatives) taken at the values of ``inner``; only the entries needed
    for the inner order must be present.
    """
    order = min(j.order for j in inner)
    F0 = np.asarray(outer[0])
    if order == 0:
        return [Jet(v) for v in F0]
    Z = taylor_arrays(inner)
    Z1 = Z[1]
    F1 = outer[1]
    h1 = F1 @ Z1
    if order == 1:
        return [Jet(F0[o], h1[o]) for o in range(F0.shape[0])]
    F2 = outer[2]
    Z2 = Z[2]
    h2 = np.einsum("oab,ai,bj->oij", F2, Z1, Z1) + np.einsum("oa,aij->oij", F1, Z2)
    if order == 2:
        return [Jet(F0[o], h1[o], h2[o]) for o in range(F0.shape[0])]
    F3 = outer[3]
    Z3 = Z[3]
    t = np.einsum("oab,aij,bk->oijk", F2, Z2, Z1)
    h3 = (np.einsum("oabc,ai,bj,ck->oijk", F3, Z1, Z1, Z1)
          + t + t.transpose(0, 1, 3, 2) + t.transpose(0, 3, 2, 1)
          + np.einsum("oa,aijk->oijk", F1, Z3))
    return [Jet(F0[o], h1[o], h2[o], h3[o]) for o in range(F0.shape[0])]


def partials(smooth_map: SmoothMap) -> SmoothMap:
    """The map of first partials, outputs ordered ``[out, in]`` row-major.

    Jets of the derivative map at order k are obtained from the order k+1
    Taylor data of ``smooth_map`` composed with the inner jets, so the
    result is itself jet-differentiable (one order less).
    """
    if smooth_map.max_order < 1:
        raise ValueError(f"{smooth_map.name} is not differentiable")
    n_in, n_out = smooth_map.arity_in, smooth_map.arity_out

    def evaluator(z):
        if not any(isinstance(c, Jet) for c in z):
            arrays = taylor_arrays(jet_eval(smooth_map, z, 1))
            return list(arrays[1].reshape(-1))
        jets = [c if isinstance(c, Jet) else None for c in z]
        order = min(j.order for j in jets if j is not None)
        nvar = next(j.nvar for j in jets if j is not None)
        jets = [j if j is not None else Jet.constant(c, nvar, order) for j, c in zip(jets, z)]
        base = [j.value for j in jets]
        T = taylor_arrays(jet_eval(smooth_map, base, order + 1))
        # Taylor data of d(out)/d(in_a): shift every array by one index
        outer = [T[k + 1].reshape((n_out * n_in,) + (n_in,) * k) for k in range(order + 1)]
        return compose_taylor(outer, jets)

    return SmoothMap(n_in, n_out * n_in, evaluator, smooth_map.max_order - 1,
                     f"d{smooth_map.name}")


def jacobian(smooth_map: SmoothMap, point, rank: int | None = None, rtol: float = 1e-10):
    """Matrix of first partials (row = output, column = input).

    With ``rank`` given, raise :class:`DegenerateImmersionError` when the
    numerical rank falls below it.
    """
    J = taylor_arrays(jet_eval(smooth_map, point, 1))[1]
    if rank is not None:
        s = np.linalg.svd(J, compute_uv=False)
        numeric = int(np.sum(s > rtol * max(1.0, s[0] if s.size else 0.0)))
        if numeric < rank:
            raise DegenerateImmersionError(
                f"{smooth_map.name}: Jacobian rank {numeric} < {rank} at {list(map(float, point))}")
    return J


# -- small linear algebra on jet matrices ----------------------------------


def inv(matrix):
    """Inverse of a square matrix of floats or jets (Gauss-Jordan, value pivoting)."""
    a = np.array(matrix, dtype=object)
    n = a.shape[0]
    if not any(isinstance(x, Jet) for x in a.flat):
        return np.linalg.inv(a.astype(float))
    a = [list(row) for row in a]
    e = [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]
    for col in range(n):
        pivot = max(range(col, n), key=lambda r: abs(value_of(a[r][col])))
        if value_of(a[pivot][col]) == 0.0:
            raise ZeroDivisionError("singular matrix")
        a[col], a[pivot] = a[pivot], a[col]
        e[col], e[pivot] = e[pivot], e[col]
        p = 1.0 / a[col][col]
        a[col] = [x * p for x in a[col]]
        e[col] = [x * p for x in e[col]]
        for r in range(n):
            f = a[r][col]
            if r == col or (not isinstance(f, Jet) and f == 0.0):
                continue
            a[r] = [x - f * y for x, y in zip(a[r], a[col])]
            e[r] = [x - f * y for x, y in zip(e[r], e[col])]
    out = np.empty((n, n), dtype=object)
    for i in range(n):
        for j in range(n):
            out[i, j] = e[i][j]
    return out


def sym_index_pairs(n: int) -> list[tuple[int, int]]:
    """Upper-triangle index pairs in the packing order used for metrics."""
    return [(i, j) for i in range(n) for j in range(i, n)]


def pack_sym(matrix):
    m = np.asarray(matrix, dtype=object)
    return [m[i, j] for i, j in sym_index_pairs(m.shape[0])]


def unpack_sym(components, n: int):
    """Rebuild an n x n symmetric (object) matrix from packed components."""
    out = np.empty((n, n), dtype=object)
    for c, (i, j) in zip(components, sym_index_pairs(n)):
        out[i, j] = c
        out[j, i] = c
    return out
