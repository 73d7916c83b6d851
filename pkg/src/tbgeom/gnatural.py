"""g-natural metrics on the tangent bundle of a charted manifold.

A g-natural metric G is fixed by six functions a1, a2, a3, b1, b2, b3 of
t = g(u, u).  In the adapted frame (horizontal lifts first, vertical lifts
second) its matrix is::

    [[A g + B (gu)(gu)^T,  a2 g + b2 (gu)(gu)^T],
     [a2 g + b2 (gu)(gu)^T, a1 g + b1 (gu)(gu)^T]]

with A = a1 + a3, B = b1 + b3 and (gu) the covector of u.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from . import diffcore as dc
from .diffcore import Jet, SmoothMap, jet_eval, taylor_arrays, unpack_sym, value_of
from .errors import ConfigError, DomainError, NondegeneracyError
from .manifold import ChartedManifold, christoffel, christoffel_map, metric_at

NONDEGENERACY_FLOOR = 1e-8
DEFAULT_T_MAX = 10.0
GENERATOR_NAMES = ("a1", "a2", "a3", "b1", "b2", "b3")


@dataclass(frozen=True)
class RationalFunction:
    """num(t) / den(t) with coefficients in ascending powers of t."""

    num: tuple = (0.0,)
    den: tuple = (1.0,)

    def __post_init__(self):
        if not self.num or not self.den or not any(c != 0.0 for c in self.den):
            raise ConfigError("rational function needs coefficients and a non-zero denominator")

    @classmethod
    def constant(cls, c: float) -> "RationalFunction":
        return cls((float(c),))

    @staticmethod
    def _poly(coeffs, t):
        acc = 0.0
        for c in reversed(coeffs):
            acc = acc * t + c
        return acc

    def is_zero(self) -> bool:
        return all(c == 0.0 for c in self.num)

    def is_constant(self) -> bool:
        return all(c == 0.0 for c in self.num[1:]) and all(c == 0.0 for c in self.den[1:])

    def __call__(self, t):
        if self.den == (1.0,):
            return self._poly(self.num, t)
        d = self._poly(self.den, t)
        if value_of(d) == 0.0:
            raise DomainError(f"generator denominator vanishes at t={value_of(t)}")
        return self._poly(self.num, t) / d


@dataclass(frozen=True)
class GNaturalGenerators:
    a1: RationalFunction
    a2: RationalFunction
    a3: RationalFunction
    b1: RationalFunction
    b2: RationalFunction
    b3: RationalFunction
    t_max: float = DEFAULT_T_MAX
    name: str = "custom"

    def functions(self):
        return [getattr(self, k) for k in GENERATOR_NAMES]

    def values(self, t):
        """(a1, a2, a3, b1, b2, b3) at t (floats or jets)."""
        return tuple(f(t) for f in self.functions())

    def derivatives(self, t: float):
        """First derivatives of the six generators at t."""
        jets = [f(Jet.variable(t, 0, 1, 1)) for f in self.functions()]
        return tuple(float(j.d1[0]) if isinstance(j, Jet) else 0.0 for j in jets)

    def b_vanishes(self) -> bool:
        return all(f.is_zero() for f in (self.b1, self.b2, self.b3))

    def check_dimension(self, n: int):
        if n == 1 and not self.b_vanishes():
            raise ConfigError("for a one-dimensional base the b-generators must vanish")

    def describe(self) -> dict:
        out = {"name": self.name, "t_max": self.t_max}
        for k in GENERATOR_NAMES:
            f = getattr(self, k)
            out[k] = {"num": list(f.num), "den": list(f.den)}
        return out


def sasaki(t_max: float = DEFAULT_T_MAX) -> GNaturalGenerators:
    one, zero = RationalFunction.constant(1.0), RationalFunction.constant(0.0)
    return GNaturalGenerators(one, zero, zero, zero, zero, zero, t_max, "sasaki")


def cheeger_gromoll(t_max: float = DEFAULT_T_MAX) -> GNaturalGenerators:
    """a1 = b1 = 1/(1+t), a2 = b2 = 0, a1 + a3 = 1, b1 + b3 = 1."""
    inv = RationalFunction((1.0,), (1.0, 1.0))
    rest = RationalFunction((0.0, 1.0), (1.0, 1.0))  # t/(1+t) = 1 - 1/(1+t)
    zero = RationalFunction.constant(0.0)
    return GNaturalGenerators(inv, zero, rest, inv, zero, rest, t_max, "cheeger-gromoll")


def constant_generators(a1=0.0, a2=0.0, a3=0.0, b1=0.0, b2=0.0, b3=0.0,
                        t_max: float = DEFAULT_T_MAX, name: str = "constant") -> GNaturalGenerators:
    c = RationalFunction.constant
    return GNaturalGenerators(c(a1), c(a2), c(a3), c(b1), c(b2), c(b3), t_max, name)


def from_coefficients(table: dict, t_max: float = DEFAULT_T_MAX,
                      name: str = "custom") -> GNaturalGenerators:
    """Build generators from ``{"a1": {"num": [...], "den": [...]}, ...}``.

    A bare list is taken as polynomial coefficients; missing entries are 0.
    """
    unknown = set(table) - set(GENERATOR_NAMES)
    if unknown:
        raise ConfigError(f"unknown generator names {sorted(unknown)}")
    funcs = []
    for k in GENERATOR_NAMES:
        entry = table.get(k, [0.0])
        if isinstance(entry, dict):
            num = tuple(float(c) for c in entry.get("num", [0.0]))
            den = tuple(float(c) for c in entry.get("den", [1.0]))
        else:
            num, den = tuple(float(c) for c in entry), (1.0,)
        funcs.append(RationalFunction(num, den))
    return GNaturalGenerators(*funcs, t_max=t_max, name=name)


def random_generators(seed: int, t_max: float = DEFAULT_T_MAX, floor: float = 0.05,
                      operating_t: float = 4.0) -> GNaturalGenerators:
    """Affine-in-t generators drawn from a seeded RNG, redrawn until
    |a| and |F| stay above ``floor`` on [0, operating_t]."""
    rng = np.random.default_rng(seed)
    grid = np.linspace(0.0, operating_t, 81)
    while True:
        coeffs = {k: list(rng.uniform(-1.0, 1.0, size=2)) for k in GENERATOR_NAMES}
        gen = from_coefficients(coeffs, t_max, f"random(seed={seed})")
        report = nondegeneracy_check(gen, grid, floor)
        if report.ok:
            return gen


PRESETS = {"sasaki": sasaki, "cheeger-gromoll": cheeger_gromoll}


# -- derived scalars -------------------------------------------------------


@dataclass(frozen=True)
class GNaturalScalars:
    t: float
    a1: float
    a2: float
    a3: float
    b1: float
    b2: float
    b3: float
    A: float
    B: float
    F1: float
    F2: float
    F3: float
    a: float
    F: float

    def row(self):
        return [getattr(self, f.name) for f in fields(self)]


SCALAR_COLUMNS = [f.name for f in fields(GNaturalScalars)]


def derived(values, t):
    """(A, B, F1, F2, F3, a, F) from generator values; floats or jets."""
    a1, a2, a3, b1, b2, b3 = values
    A = a1 + a3
    B = b1 + b3
    F1, F2, F3 = a1 + t * b1, a2 + t * b2, a3 + t * b3
    a = a1 * A - a2 * a2
    F = F1 * (F1 + F3) - F2 * F2
    return A, B, F1, F2, F3, a, F


def scalars_at(gen: GNaturalGenerators, t: float) -> GNaturalScalars:
    t = float(t)
    if not 0.0 <= t <= gen.t_max:
        raise DomainError(f"t={t} outside [0, {gen.t_max}] for generators {gen.name}")
    vals = tuple(float(v) for v in gen.values(t))
    return GNaturalScalars(t, *vals, *derived(vals, t))


@dataclass(frozen=True)
class NondegeneracyReport:
    ok: bool
    min_abs_a: float
    t_min_a: float
    min_abs_F: float
    t_min_F: float
    floor: float
    f_enforced: bool = True


def nondegeneracy_check(gen: GNaturalGenerators, t_grid: Sequence[float],
                        floor: float = NONDEGENERACY_FLOOR, dim: int | None = None):
    """Check a(t) != 0 and F(t) != 0 (only a(t) for a one-dimensional base) on a grid."""
    t_grid = [float(t) for t in t_grid]
    if not t_grid:
        raise ValueError("nondegeneracy_check needs a non-empty t grid")
    rows = [scalars_at(gen, t) for t in t_grid]
    ia = min(range(len(rows)), key=lambda i: abs(rows[i].a))
    iF = min(range(len(rows)), key=lambda i: abs(rows[i].F))
    enforce_F = dim != 1
    ok = abs(rows[ia].a) > floor and (not enforce_F or abs(rows[iF].F) > floor)
    return NondegeneracyReport(ok, abs(rows[ia].a), t_grid[ia], abs(rows[iF].F), t_grid[iF],
                               floor, enforce_F)


# -- the metric ----------------------------------------------------------------


def adapted_blocks(gen: GNaturalGenerators, g, u):
    """Adapted-frame matrix (2n x 2n object array) for metric matrix g and fibre vector u."""
    n = len(u)
    gu = [sum((g[r][s] * u[s] for s in range(n)), 0.0) for r in range(n)]
    t = sum((u[r] * gu[r] for r in range(n)), 0.0)
    a1, a2, a3, b1, b2, b3 = gen.values(t)
    A, B = a1 + a3, b1 + b3
    out = np.empty((2 * n, 2 * n), dtype=object)
    for r in range(n):
        for s in range(n):
            uu = gu[r] * gu[s]
            out[r, s] = A * g[r][s] + B * uu
            out[r, n + s] = a2 * g[r][s] + b2 * uu
            out[n + r, s] = out[r, n + s]
            out[n + r, n + s] = a1 * g[r][s] + b1 * uu
    return out


def _check_point_t(gen, man, x, u, floor):
    g = metric_at(man, x)
    u = np.asarray(u, dtype=float)
    t = float(u @ g @ u)
    s = scalars_at(gen, t)
    if abs(s.a) <= floor or (man.dim != 1 and abs(s.F) <= floor):
        raise NondegeneracyError(f"g-natural metric {gen.name} degenerate at t={t}: "
                                 f"a={s.a!r}, F={s.F!r}")
    return g, u


def metric_adapted(gen: GNaturalGenerators, man: ChartedManifold, x, u,
                   floor: float = NONDEGENERACY_FLOOR) -> np.ndarray:
    gen.check_dimension(man.dim)
    g, u = _check_point_t(gen, man, x, u, floor)
    return adapted_blocks(gen, g, u).astype(float)


def connection_block(gam, u):
    """Gamma(u)^r_k = u^s Gamma^r_sk."""
    n = len(u)
    return [[sum((u[s] * gam[r][s][k] for s in range(n)), 0.0) for k in range(n)]
            for r in range(n)]


def basis_change(man: ChartedManifold, x, u) -> np.ndarray:
    """Columns are the adapted frame (d_k^h, d_l^v) in coordinates (d/dx, d/du)."""
    n = man.dim
    gu = np.array(connection_block(christoffel(man, x), np.asarray(u, float)), dtype=float)
    P = np.eye(2 * n)
    P[n:, :n] = -gu
    return P


def _congruence(Gad, gam_u, n):
    """Q^T Gad Q with Q = [[I, 0], [Gamma(u), I]] (inverse of the adapted basis change)."""
    Q = np.empty((2 * n, 2 * n), dtype=object)
    for i in range(2 * n):
        for j in range(2 * n):
            Q[i, j] = 1.0 if i == j else 0.0
    for r in range(n):
        for k in range(n):
            Q[n + r, k] = gam_u[r][k]
    return Q.T @ Gad @ Q


def metric_natural_map(gen: GNaturalGenerators, man: ChartedManifold) -> SmoothMap:
    """G in the coordinate basis of TN as a smooth map of (x, u); packed upper triangle."""
    gen.check_dimension(man.dim)
    n = man.dim
    gam_map = christoffel_map(man)

    def evaluator(z):
        x, u = list(z[:n]), list(z[n:])
        g = man.metric(x)
        gam = np.array(gam_map.evaluator(x), dtype=object).reshape(n, n, n)
        Gad = adapted_blocks(gen, g, u)
        G = _congruence(Gad, connection_block(gam, u), n)
        return dc.pack_sym(G)

    return SmoothMap(2 * n, n * (2 * n + 1), evaluator, gam_map.max_order,
                     f"G[{gen.name},{man.name}]")


def metric_natural(gen: GNaturalGenerators, man: ChartedManifold, x, u,
                   floor: float = NONDEGENERACY_FLOOR) -> np.ndarray:
    g, u = _check_point_t(gen, man, x, u, floor)
    z = np.concatenate([man.check(x), u])
    packed = metric_natural_map(gen, man)(z)
    return np.asarray(unpack_sym(packed, 2 * man.dim), dtype=float)


def metric_natural_jets(gen: GNaturalGenerators, man: ChartedManifold, x, u, order: int = 1):
    """``[G, dG]`` (``dG[c, A, B] = d_c G_AB``) in natural coordinates of TN."""
    _check_point_t(gen, man, x, u, NONDEGENERACY_FLOOR)
    n2 = 2 * man.dim
    z = np.concatenate([man.check(x), np.asarray(u, float)])
    arrays = taylor_arrays(jet_eval(metric_natural_map(gen, man), z, order))
    out = [np.asarray(unpack_sym(arrays[0], n2), dtype=float)]
    for k in range(1, order + 1):
        full = np.empty((n2, n2) + (n2,) * k)
        for p, (i, j) in enumerate(dc.sym_index_pairs(n2)):
            full[i, j] = arrays[k][p]
            full[j, i] = arrays[k][p]
        out.append(np.moveaxis(full, (0, 1), (k, k + 1)))
    return out


def signature(matrix, tol: float = 1e-12) -> tuple[int, int, int]:
    """(positive, negative, zero) eigenvalue counts."""
    eig = np.linalg.eigvalsh(np.asarray(matrix, float))
    scale = max(1.0, float(np.max(np.abs(eig))))
    pos = int(np.sum(eig > tol * scale))
    neg = int(np.sum(eig < -tol * scale))
    return pos, neg, len(eig) - pos - neg


def scalar_table(gen: GNaturalGenerators, ts: Sequence[float]) -> list[list[float]]:
    return [scalars_at(gen, t).row() for t in ts]
