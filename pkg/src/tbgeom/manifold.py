"""Charted Riemannian manifolds, Levi-Civita connection and curvature.

Curvature convention (recorded in every :class:`CurvatureTensor`)::

    R(X, Y)Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z - nabla_[X,Y] Z
    R_rstl   = g(R(d_r, d_s) d_l, d_t)

With this lowering a space of constant curvature c satisfies
``R_rstl = c (g_rt g_sl - g_rl g_st)`` and the round sphere has
``R_theta.phi.theta.phi = sin^2(theta) > 0``.  A convention sign of -1 negates
every component.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import diffcore as dc
from .diffcore import SmoothMap, jet_eval, partials, taylor_arrays, unpack_sym
from .errors import ConfigError, DomainError, SingularMetricError

CONVENTION = "R(X,Y)Z=[nabla_X,nabla_Y]Z-nabla_[X,Y]Z; R_rstl=g(R(d_r,d_s)d_l,d_t)"
CHART_MARGIN = 0.1


@dataclass(frozen=True)
class ChartedManifold:
    """One coordinate chart with a metric field.

    ``bounds`` holds an open interval per coordinate (``None`` = unbounded);
    points outside it fail the domain guard.
    """

    dim: int
    metric_field: SmoothMap
    bounds: tuple = ()
    name: str = "manifold"
    params: dict = field(default_factory=dict, compare=False)

    def admissible(self, point) -> bool:
        try:
            self.check(point)
        except DomainError:
            return False
        return True

    def check(self, point):
        point = np.asarray(point, dtype=float).reshape(-1)
        if point.shape[0] != self.dim:
            raise ValueError(f"{self.name}: point has dimension {point.shape[0]}, chart has {self.dim}")
        if not np.all(np.isfinite(point)):
            raise DomainError(f"{self.name}: non-finite coordinate", point=point)
        for i, b in enumerate(self.bounds):
            if b is None:
                continue
            lo, hi = b
            if not lo < point[i] < hi:
                raise DomainError(f"{self.name}: outside chart interval ({lo}, {hi})",
                                  point=point, coordinate=i)
        return point

    def metric(self, z):
        """Metric matrix at floats or jets (object array for jets)."""
        return unpack_sym(self.metric_field.evaluator(z), self.dim)


@dataclass(frozen=True)
class CurvatureTensor:
    components: np.ndarray
    convention_sign: int = 1
    convention: str = CONVENTION

    def flipped(self) -> "CurvatureTensor":
        return CurvatureTensor(-self.components, -self.convention_sign, self.convention)


# -- connection and curvature ---------------------------------------------


def levi_civita(g, dg, ginv=None):
    """Gamma^r_st from a metric matrix and ``dg[l, r, s] = d_l g_rs``.

    Works on float arrays and on object arrays of jets.
    """
    if ginv is None:
        ginv = dc.inv(g)
    first_kind = 0.5 * (dg.transpose(2, 0, 1) + dg.transpose(2, 1, 0) - dg)
    return np.einsum("rl,lst->rst", ginv, first_kind)


def _metric_derivative(man: ChartedManifold, z):
    n = man.dim
    flat = partials(man.metric_field).evaluator(z)
    dg = np.empty((n, n, n), dtype=object)
    for p, (r, s) in enumerate(dc.sym_index_pairs(n)):
        for l in range(n):
            dg[l, r, s] = flat[p * n + l]
            dg[l, s, r] = flat[p * n + l]
    return dg


def christoffel_map(man: ChartedManifold) -> SmoothMap:
    """Gamma^r_st as a smooth map of the chart point, flattened [r, s, t]."""
    n = man.dim

    def evaluator(z):
        g = man.metric(z)
        dg = _metric_derivative(man, z)
        return list(levi_civita(g, dg).reshape(-1))

    return SmoothMap(n, n ** 3, evaluator, man.metric_field.max_order - 1, f"Gamma[{man.name}]")


def metric_derivatives(man: ChartedManifold, point, order: int = 1):
    """``[g, dg, d2g, ...]`` with the derivative index leading: dg[l, r, s] = d_l g_rs."""
    point = man.check(point)
    n = man.dim
    arrays = taylor_arrays(jet_eval(man.metric_field, point, order))
    out = []
    for k, a in enumerate(arrays):
        full = np.empty((n, n) + (n,) * k)
        for p, (r, s) in enumerate(dc.sym_index_pairs(n)):
            full[r, s] = a[p]
            full[s, r] = a[p]
        out.append(np.moveaxis(full, (0, 1), (k, k + 1)) if k else full)
    return out


def metric_at(man: ChartedManifold, point) -> np.ndarray:
    """Symmetric positive-definite metric matrix at an admissible point."""
    point = man.check(point)
    g = np.array(man.metric_field(point), dtype=float)
    g = np.asarray(unpack_sym(g, man.dim), dtype=float)
    eig = np.linalg.eigvalsh(g)
    if eig[0] <= 0.0:
        raise SingularMetricError(
            f"{man.name}: metric not positive definite at {list(point)}, eigenvalue {eig[0]!r}")
    return g


def christoffel(man: ChartedManifold, point) -> np.ndarray:
    """Gamma^r_st at a point, shape (n, n, n), symmetric in (s, t)."""
    g, dg = metric_derivatives(man, point, 1)
    try:
        ginv = np.linalg.inv(g)
    except np.linalg.LinAlgError as exc:
        raise SingularMetricError(f"{man.name}: singular metric at {list(point)}") from exc
    return levi_civita(g, dg, ginv).astype(float)


def christoffel_with_derivative(man: ChartedManifold, point):
    """``(Gamma, dGamma)`` with ``dGamma[l, r, s, t] = d_l Gamma^r_st``."""
    point = man.check(point)
    n = man.dim
    gam, dgam = taylor_arrays(jet_eval(christoffel_map(man), point, 1))
    return gam.reshape(n, n, n), np.moveaxis(dgam.reshape(n, n, n, n), 3, 0)


def metric_compatibility_residual(man: ChartedManifold, point) -> float:
    """max |d_l g_rs - Gamma^t_lr g_ts - Gamma^t_ls g_rt|."""
    g, dg = metric_derivatives(man, point, 1)
    gam = christoffel(man, point)
    res = dg - np.einsum("tlr,ts->lrs", gam, g) - np.einsum("tls,rt->lrs", gam, g)
    return float(np.max(np.abs(res)))


def riemann(man: ChartedManifold, point, convention_sign: int = 1) -> CurvatureTensor:
    """Lowered Riemann tensor R_rstl from Gamma and its first derivatives."""
    if convention_sign not in (1, -1):
        raise ValueError("convention_sign must be +1 or -1")
    g = metric_at(man, point)
    gam, dgam = christoffel_with_derivative(man, point)
    # Rv[i, j, k, m]: component m of R(d_i, d_j) d_k
    d = dgam.transpose(0, 2, 3, 1)  # d[i, j, k, m] = d_i Gamma^m_jk
    rv = (d - d.transpose(1, 0, 2, 3)
          + np.einsum("pjk,mip->ijkm", gam, gam)
          - np.einsum("pik,mjp->ijkm", gam, gam))
    R = np.einsum("rslm,mt->rstl", rv, g)
    return CurvatureTensor(convention_sign * R, convention_sign)


def curvature_symmetry_residuals(R) -> dict:
    """Antisymmetries, pair symmetry and first Bianchi identity residuals."""
    R = R.components if isinstance(R, CurvatureTensor) else R
    return {
        "antisym_12": float(np.max(np.abs(R + R.transpose(1, 0, 2, 3)))),
        "antisym_34": float(np.max(np.abs(R + R.transpose(0, 1, 3, 2)))),
        "pair": float(np.max(np.abs(R - R.transpose(2, 3, 0, 1)))),
        "bianchi": float(np.max(np.abs(R + R.transpose(0, 2, 3, 1) + R.transpose(0, 3, 1, 2)))),
    }


def constant_curvature_form(g) -> np.ndarray:
    """g_rt g_sl - g_rl g_st, the curvature tensor of unit constant curvature."""
    return np.einsum("rt,sl->rstl", g, g) - np.einsum("rl,st->rstl", g, g)


def constant_curvature_residual(man: ChartedManifold, point, c: float,
                                convention_sign: int = 1) -> float:
    """max |R_rstl - c (g_rt g_sl - g_rl g_st)| under the given convention."""
    g = metric_at(man, point)
    R = riemann(man, point, convention_sign).components
    return float(np.max(np.abs(R - convention_sign * c * constant_curvature_form(g))))


def fit_constant_curvature(man: ChartedManifold, points: Sequence) -> tuple[float, float]:
    """Least-squares curvature constant over sample points and the max residual."""
    num = den = 0.0
    cache = []
    for p in points:
        g = metric_at(man, p)
        R = riemann(man, p).components
        Q = constant_curvature_form(g)
        num += float(np.sum(R * Q))
        den += float(np.sum(Q * Q))
        cache.append((R, Q))
    c = num / den if den > 0 else 0.0
    residual = max(float(np.max(np.abs(R - c * Q))) for R, Q in cache)
    return c, residual


def sectional_curvature(man: ChartedManifold, point, X, Y) -> float:
    g = metric_at(man, point)
    R = riemann(man, point).components
    X, Y = np.asarray(X, float), np.asarray(Y, float)
    num = np.einsum("rstl,r,s,t,l->", R, X, Y, X, Y)
    den = (X @ g @ X) * (Y @ g @ Y) - (X @ g @ Y) ** 2
    return float(num / den)


# -- built-in spaces -------------------------------------------------------


def _packed(matrix_fn: Callable, n: int) -> Callable:
    def evaluator(z):
        m = matrix_fn(z)
        return [m[i][j] for i, j in dc.sym_index_pairs(n)]

    return evaluator


def euclidean(dim: int) -> ChartedManifold:
    def metric(z):
        return [[1.0 if i == j else 0.0 for j in range(dim)] for i in range(dim)]

    fm = SmoothMap(dim, dim * (dim + 1) // 2, _packed(metric, dim), name=f"g[R{dim}]")
    return ChartedManifold(dim, fm, (None,) * dim, f"R{dim}", {"dim": dim})


def sphere(dim: int, radius: float = 1.0, margin: float = CHART_MARGIN) -> ChartedManifold:
    """Round sphere in hyperspherical angles (x_0, ..., x_{n-1}).

    g = rho^2 (dx_0^2 + sin^2 x_0 dx_1^2 + sin^2 x_0 sin^2 x_1 dx_2^2 + ...);
    every angle but the last is kept ``margin`` away from 0 and pi.
    """
    if dim < 1:
        raise ConfigError("sphere dimension must be >= 1")
    rho2 = float(radius) ** 2

    def metric(z):
        m = [[0.0] * dim for _ in range(dim)]
        w = rho2
        for k in range(dim):
            m[k][k] = w
            if k < dim - 1:
                s = dc.sin(z[k])
                w = w * s * s
        return m

    bounds = tuple((margin, math.pi - margin) for _ in range(dim - 1)) + (None,)
    name = f"S{dim}(rho={float(radius):g})"
    fm = SmoothMap(dim, dim * (dim + 1) // 2, _packed(metric, dim), name=f"g[{name}]")
    return ChartedManifold(dim, fm, bounds, name, {"dim": dim, "radius": float(radius)})


def circle(radius: float = 1.0) -> ChartedManifold:
    return sphere(1, radius)


WARP_FUNCTIONS = {
    "cosh": dc.cosh,
    "sinh": dc.sinh,
    "sin": dc.sin,
    "exp": dc.exp,
}


def warped_product(warp: str = "cosh", fibre_dim: int = 1, coefficients: Sequence[float] = (),
                   t_range: tuple = (-3.0, 3.0)) -> ChartedManifold:
    """dt^2 + f(t)^2 dsigma^2 with dsigma^2 the unit sphere of ``fibre_dim``.

    ``warp`` names f (cosh, sinh, sin, exp) or is ``"poly"`` with ascending
    ``coefficients``.
    """
    if warp == "poly":
        coeffs = [float(c) for c in coefficients]
        if not coeffs:
            raise ConfigError("warped_product: poly warp needs coefficients")

        def f(t):
            acc = 0.0
            for c in reversed(coeffs):
                acc = acc * t + c
            return acc
    elif warp in WARP_FUNCTIONS:
        f = WARP_FUNCTIONS[warp]
    else:
        raise ConfigError(f"warped_product: unknown warp function {warp!r}")
    fibre = sphere(fibre_dim, 1.0)
    dim = fibre_dim + 1

    def metric(z):
        w = f(z[0])
        w2 = w * w
        inner = fibre.metric(list(z[1:]))
        m = [[0.0] * dim for _ in range(dim)]
        m[0][0] = 1.0
        for i in range(fibre_dim):
            for j in range(fibre_dim):
                m[i + 1][j + 1] = w2 * inner[i, j]
        return m

    name = f"warped({warp},k={fibre_dim})"
    fm = SmoothMap(dim, dim * (dim + 1) // 2, _packed(metric, dim), name=f"g[{name}]")
    bounds = (tuple(t_range),) + fibre.bounds
    params = {"warp": warp, "fibre_dim": fibre_dim, "coefficients": list(coefficients),
              "t_range": list(t_range)}
    return ChartedManifold(dim, fm, bounds, name, params)


def hyperbolic_plane() -> ChartedManifold:
    """dt^2 + cosh^2(t) dphi^2, constant curvature -1."""
    man = warped_product("cosh", 1)
    return ChartedManifold(2, man.metric_field, man.bounds, "H2", {})


def perturbed_flat(dim: int, epsilon: float = 0.1) -> ChartedManifold:
    """delta_rs + eps sin(x_r) sin(x_s): non-constant curvature for negative tests."""
    eps = float(epsilon)
    if eps <= -1.0 / dim:
        raise ConfigError("perturbed_flat: epsilon too negative for positive definiteness")

    def metric(z):
        s = [dc.sin(x) for x in z]
        return [[(1.0 if i == j else 0.0) + eps * s[i] * s[j] for j in range(dim)]
                for i in range(dim)]

    name = f"flat+{eps:g}h"
    fm = SmoothMap(dim, dim * (dim + 1) // 2, _packed(metric, dim), name=f"g[{name}]")
    return ChartedManifold(dim, fm, (None,) * dim, name, {"dim": dim, "epsilon": eps})


def saddle() -> ChartedManifold:
    """Metric induced on the graph z = y1 y2 in R^3, written out explicitly."""

    def metric(z):
        y1, y2 = z
        return [[1.0 + y2 * y2, y1 * y2], [y1 * y2, 1.0 + y1 * y1]]

    fm = SmoothMap(2, 3, _packed(metric, 2), name="g[saddle]")
    return ChartedManifold(2, fm, (None, None), "saddle", {})


SPACES = {
    "euclidean": euclidean,
    "sphere": sphere,
    "circle": circle,
    "hyperbolic_plane": hyperbolic_plane,
    "warped_product": warped_product,
    "perturbed_flat": perturbed_flat,
    "saddle": saddle,
}


def space(name: str, **params) -> ChartedManifold:
    """Build a preset space by name."""
    try:
        factory = SPACES[name]
    except KeyError:
        raise ConfigError(f"unknown space preset {name!r}; choose from {sorted(SPACES)}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigError(f"space {name!r}: {exc}") from exc
