"""Isometric immersions f: M -> N and their extrinsic geometry.

Index conventions follow the usual submanifold notation: ``B[r, a]`` is
d x^r / d y^a, ``dB[r, a, b]`` the second partials B_{a.b}^r, and
``nabla_B[a, b, r]`` the mixed covariant derivative nabla_b B_a^r.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import diffcore as dc
from .diffcore import Jet, SmoothMap, jet_eval, partials, taylor_arrays, value_of
from .errors import (ConfigError, DegenerateImmersionError, IsometryError, NotNormalError,
                     SingularMetricError)
from .manifold import (ChartedManifold, christoffel, christoffel_map, metric_at, riemann)

ISOMETRY_TOL = 1e-8
NORMAL_TOL = 1e-8
# Gram-Schmidt skips a seed vector whose residual g-norm falls below this
# fraction of its original g-norm.
SEED_FLOOR = 1e-6


@dataclass(frozen=True)
class ImmersionData:
    source: ChartedManifold
    target: ChartedManifold
    map: SmoothMap
    name: str = "immersion"
    sample_box: tuple = ()
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        m, n = self.source.dim, self.target.dim
        if not m < n:
            raise ConfigError(f"{self.name}: need dim M < dim N, got {m} and {n}")
        if self.map.arity_in != m or self.map.arity_out != n:
            raise ConfigError(f"{self.name}: map arity {self.map.arity_in}->{self.map.arity_out} "
                              f"does not match {m}->{n}")

    @property
    def m(self):
        return self.source.dim

    @property
    def n(self):
        return self.target.dim

    def check(self, y):
        y = self.source.check(y)
        self.target.check(self.map(y))
        return y


@dataclass(frozen=True)
class NormalFrame:
    vectors: np.ndarray  # (n, n - m), columns N_x
    gram: np.ndarray


@dataclass(frozen=True)
class SecondFundamentalForm:
    scalar: np.ndarray  # h[a, b, x]
    vector: np.ndarray  # nabla_B[a, b, r]
    frame: NormalFrame

    def max_norm(self) -> float:
        return float(np.max(np.abs(self.scalar))) if self.scalar.size else 0.0


def immersion_derivatives(imm: ImmersionData, y, order: int = 2):
    """``[x, B, dB, d2B]`` up to ``order`` (B_{a.b}^r is ``dB[r, a, b]``)."""
    y = imm.check(y)
    arrays = taylor_arrays(jet_eval(imm.map, y, order + 1))
    B = arrays[1]
    s = np.linalg.svd(B, compute_uv=False)
    if s[-1] <= 1e-10 * max(1.0, s[0]):
        raise DegenerateImmersionError(f"{imm.name}: Jacobian rank < {imm.m} at {list(y)}")
    return arrays


def induced_metric(imm: ImmersionData, y, check_isometry: bool = True) -> np.ndarray:
    """g_ab = g_rs B_a^r B_b^s, compared against the declared source metric."""
    x, B = immersion_derivatives(imm, y, 0)
    g = metric_at(imm.target, x)
    gab = B.T @ g @ B
    if check_isometry:
        declared = metric_at(imm.source, y)
        err = float(np.max(np.abs(gab - declared)))
        if err > ISOMETRY_TOL:
            raise IsometryError(f"{imm.name}: induced metric differs from the source metric "
                                f"by {err:.3e} at {list(map(float, y))}")
    return gab


def _pieces(imm: ImmersionData, y):
    x, B, dB = immersion_derivatives(imm, y, 1)
    g = metric_at(imm.target, x)
    gam = christoffel(imm.target, x)
    gab = B.T @ g @ B
    return x, B, dB, g, gam, gab


def induced_christoffel(imm: ImmersionData, y) -> np.ndarray:
    """Gamma_ab^c = [B_{a.b}^r + Gamma^r_st B_a^s B_b^t] B_r^c, returned as ``[c, a, b]``."""
    x, B, dB, g, gam, gab = _pieces(imm, y)
    try:
        gab_inv = np.linalg.inv(gab)
    except np.linalg.LinAlgError as exc:
        raise SingularMetricError(f"{imm.name}: singular induced metric") from exc
    B_up = gab_inv @ B.T @ g  # B_r^c as [c, r]
    ambient = dB + np.einsum("rst,sa,tb->rab", gam, B, B)
    return np.einsum("cr,rab->cab", B_up, ambient)


def vdwb_derivative(imm: ImmersionData, y) -> np.ndarray:
    """nabla_b B_a^r = B_{a.b}^r + Gamma^r_st B_a^s B_b^t - Gamma_ab^c B_c^r as ``[a, b, r]``."""
    x, B, dB, g, gam, gab = _pieces(imm, y)
    gam_ind = induced_christoffel(imm, y)
    out = dB + np.einsum("rst,sa,tb->rab", gam, B, B) - np.einsum("cab,rc->rab", gam_ind, B)
    return out.transpose(1, 2, 0)


def _g_dot(g, v, w):
    n = len(v)
    acc = 0.0
    for r in range(n):
        for s in range(n):
            acc = acc + v[r] * g[r][s] * w[s]
    return acc


def gram_schmidt_normals(g, B, count: int):
    """Orthonormal basis of the g-complement of span(B), seeded by e_0, e_1, ...

    ``g`` and ``B`` may hold floats or jets; seed selection and signs are
    decided on values so the jet and float paths pick the same frame.
    """
    n, m = len(g), len(B[0])
    cols = [[B[r][a] for r in range(n)] for a in range(m)]
    basis = []
    # tangent directions are orthonormalised first so they can be projected out
    for c in cols:
        w = list(c)
        for q in basis:
            d = _g_dot(g, q, w)
            w = [wi - d * qi for wi, qi in zip(w, q)]
        nrm = dc.sqrt(_g_dot(g, w, w))
        basis.append([wi / nrm for wi in w])
    normals = []
    for r in range(n):
        if len(normals) == count:
            break
        e = [1.0 if i == r else 0.0 for i in range(n)]
        w = e
        for _ in range(2):
            for q in basis + normals:
                d = _g_dot(g, q, w)
                w = [wi - d * qi for wi, qi in zip(w, q)]
        norm2 = _g_dot(g, w, w)
        if value_of(norm2) <= (SEED_FLOOR ** 2) * value_of(g[r][r]):
            continue
        nrm = dc.sqrt(norm2)
        v = [wi / nrm for wi in w]
        vals = [value_of(c) for c in v]
        scale = max(abs(c) for c in vals)
        lead = next(c for c in vals if abs(c) > 1e-12 * scale)
        if lead < 0:
            v = [-c for c in v]
        normals.append(v)
    if len(normals) != count:
        raise DegenerateImmersionError(f"normal complement has rank {len(normals)}, expected {count}")
    return normals


def normal_frame(imm: ImmersionData, y) -> NormalFrame:
    """Deterministic g-orthonormal frame of the normal space at f(y)."""
    x, B = immersion_derivatives(imm, y, 0)
    g = metric_at(imm.target, x)
    normals = gram_schmidt_normals(g, B, imm.n - imm.m)
    N = np.array(normals, dtype=float).T
    return NormalFrame(N, N.T @ g @ N)


def normal_frame_map(imm: ImmersionData) -> SmoothMap:
    """The normal frame as a smooth map of y, flattened ``[r, x]``."""
    n, m = imm.n, imm.m
    dmap = partials(imm.map)

    def evaluator(z):
        x = list(imm.map.evaluator(z))
        flatB = dmap.evaluator(z)
        B = [[flatB[r * m + a] for a in range(m)] for r in range(n)]
        g = imm.target.metric(x)
        normals = gram_schmidt_normals(g, B, n - m)
        return [normals[k][r] for r in range(n) for k in range(n - m)]

    return SmoothMap(m, n * (n - m), evaluator, imm.map.max_order - 1, f"N[{imm.name}]")


def second_fundamental_form(imm: ImmersionData, y) -> SecondFundamentalForm:
    """h_ab^x = g(nabla_b B_a, N_x) together with the vector-valued form."""
    x = imm.map(imm.check(y))
    g = metric_at(imm.target, x)
    vec = vdwb_derivative(imm, y)
    frame = normal_frame(imm, y)
    h = np.einsum("abr,rs,sx->abx", vec, g, frame.vectors)
    return SecondFundamentalForm(h, vec, frame)


def shape_operator(imm: ImmersionData, y, eta) -> np.ndarray:
    """Matrix A with g(A X, Y) = g(h(X, Y), eta); column a holds A(d_a).

    Raises :class:`NotNormalError` when ``eta`` is not normal to M.
    """
    x, B = immersion_derivatives(imm, y, 0)
    g = metric_at(imm.target, x)
    eta = np.asarray(eta, dtype=float)
    gab = B.T @ g @ B
    eta_norm = math.sqrt(max(eta @ g @ eta, 0.0))
    tangential = B.T @ g @ eta
    scale = eta_norm * np.sqrt(np.diag(gab))
    if np.any(np.abs(tangential) > NORMAL_TOL * np.maximum(scale, 1.0)):
        raise NotNormalError(f"{imm.name}: vector is not normal, g(eta, B_a) = {tangential}")
    vec = vdwb_derivative(imm, y)
    h_eta = np.einsum("abr,rs,s->ab", vec, g, eta)
    return np.linalg.solve(gab, h_eta)


def is_totally_geodesic(imm: ImmersionData, samples: Sequence, tol: float = 1e-8):
    """``(verdict, max |h|)`` over the sample points."""
    if len(samples) == 0:
        raise ValueError("is_totally_geodesic needs at least one sample point")
    worst = max(second_fundamental_form(imm, y).max_norm() for y in samples)
    return worst <= tol, worst


# -- consistency checks ----------------------------------------------------


def orthogonality_residual(imm: ImmersionData, y) -> float:
    """max |g(nabla_b B_a, B_c)|."""
    x, B = immersion_derivatives(imm, y, 0)
    g = metric_at(imm.target, x)
    vec = vdwb_derivative(imm, y)
    return float(np.max(np.abs(np.einsum("abr,rs,sc->abc", vec, g, B))))


def gauss_formula_residual(imm: ImmersionData, y) -> float:
    """Ambient derivative of B_a along B_b minus the source-connection part vs h N."""
    x, B, dB, g, gam, gab = _pieces(imm, y)
    ambient = dB + np.einsum("rst,sa,tb->rab", gam, B, B)
    gam_src = christoffel(imm.source, y)
    normal_part = ambient - np.einsum("cab,rc->rab", gam_src, B)
    sff = second_fundamental_form(imm, y)
    rebuilt = np.einsum("abx,rx->rab", sff.scalar, sff.frame.vectors)
    return float(np.max(np.abs(normal_part - rebuilt)))


def weingarten_residual(imm: ImmersionData, y) -> float:
    """Tangential part of the ambient derivative of N_x along B_a against -A_{N_x} B_a."""
    y = imm.check(y)
    n, m = imm.n, imm.m
    x, B = immersion_derivatives(imm, y, 0)
    g = metric_at(imm.target, x)
    gam = christoffel(imm.target, x)
    N, dN = taylor_arrays(jet_eval(normal_frame_map(imm), y, 1))
    N = N.reshape(n, n - m)
    dN = dN.reshape(n, n - m, m)  # [r, x, a]
    gab = B.T @ g @ B
    worst = 0.0
    for k in range(n - m):
        amb = dN[:, k, :] + np.einsum("rst,sa,t->ra", gam, B, N[:, k])
        tangential = np.linalg.solve(gab, B.T @ g @ amb)  # [c, a]
        A = shape_operator(imm, y, N[:, k])
        worst = max(worst, float(np.max(np.abs(tangential + A))))
    return worst


def codazzi_residual(imm: ImmersionData, y) -> float:
    """max |R(X, Y, Z, eta)| over tangent frame X, Y, Z and unit normals eta."""
    x, B = immersion_derivatives(imm, y, 0)
    R = riemann(imm.target, x).components
    N = normal_frame(imm, y).vectors
    last = np.einsum("rstl,ra,sb,tc,lx->abcx", R, B, B, B, N)
    third = np.einsum("rstl,ra,sb,tx,lc->abcx", R, B, B, N, B)
    return float(max(np.max(np.abs(last)), np.max(np.abs(third))))


# -- presets -------------------------------------------------------------------


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _angle_box(dim):
    return tuple((0.3, math.pi - 0.3) for _ in range(dim - 1)) + ((-math.pi, math.pi),)


def equator(source: ChartedManifold, target: ChartedManifold) -> ImmersionData:
    """(y_1..y_m) -> (pi/2, y_1..y_m): great sphere S^m in S^(m+1) (same radius)."""
    m = source.dim
    _require(target.dim == m + 1, "equator: target must have dim = source dim + 1")

    def evaluator(y):
        return [math.pi / 2] + list(y)

    fm = SmoothMap(m, m + 1, evaluator, name="equator")
    return ImmersionData(source, target, fm, f"equator S{m} in {target.name}", _angle_box(m))


def small_circle(source: ChartedManifold, target: ChartedManifold,
                 theta0: float = math.pi / 3) -> ImmersionData:
    """phi -> (theta0, phi) in the (theta, phi) chart of S^2."""
    _require(source.dim == 1 and target.dim == 2, "small_circle: needs 1 -> 2 dimensions")
    theta0 = float(theta0)

    def evaluator(y):
        return [theta0, y[0]]

    fm = SmoothMap(1, 2, evaluator, name="small_circle")
    return ImmersionData(source, target, fm, f"small circle theta0={theta0:.6g}",
                         ((-math.pi, math.pi),), {"theta0": theta0})


def linear_subspace(source: ChartedManifold, target: ChartedManifold) -> ImmersionData:
    """y -> (y, 0, ..., 0)."""
    m, n = source.dim, target.dim

    def evaluator(y):
        return list(y) + [0.0] * (n - m)

    fm = SmoothMap(m, n, evaluator, name="linear")
    return ImmersionData(source, target, fm, f"R{m} in {target.name}", ((-1.0, 1.0),) * m)


def graph(source: ChartedManifold, target: ChartedManifold) -> ImmersionData:
    """(y1, y2) -> (y1, y2, y1 y2), the saddle surface in R^3."""
    _require(source.dim == 2 and target.dim == 3, "graph: needs 2 -> 3 dimensions")

    def evaluator(y):
        return [y[0], y[1], y[0] * y[1]]

    fm = SmoothMap(2, 3, evaluator, name="graph")
    return ImmersionData(source, target, fm, "saddle graph in R3", ((-1.0, 1.0),) * 2)


def meridian(source: ChartedManifold, target: ChartedManifold, phi0: float = 0.0) -> ImmersionData:
    """t -> (t, phi0, ...): a fibre-constant line of a warped product."""
    _require(source.dim == 1, "meridian: source must be one-dimensional")
    n = target.dim
    fixed = [float(phi0)] * (n - 1)
    if n > 2:
        fixed = [math.pi / 2] * (n - 2) + [float(phi0)]

    def evaluator(y):
        return [y[0]] + fixed

    fm = SmoothMap(1, n, evaluator, name="meridian")
    return ImmersionData(source, target, fm, f"meridian in {target.name}", ((-1.0, 1.0),),
                         {"phi0": float(phi0)})


def warped_slice(source: ChartedManifold, target: ChartedManifold) -> ImmersionData:
    """(t, phi) -> (t, pi/2, phi): the equatorial slice of a warped product over S^2.

    Fixed by the reflection of the first fibre angle, hence totally geodesic
    whatever the warp function.
    """
    _require(source.dim == 2 and target.dim == 3, "warped_slice: needs a 2-dimensional source "
             "inside a 3-dimensional warped product")

    def evaluator(y):
        return [y[0], math.pi / 2, y[1]]

    fm = SmoothMap(2, 3, evaluator, name="warped_slice")
    return ImmersionData(source, target, fm, f"slice of {target.name}",
                         ((-1.0, 1.0), (-math.pi, math.pi)))


IMMERSIONS = {
    "equator": equator,
    "small_circle": small_circle,
    "linear_subspace": linear_subspace,
    "graph": graph,
    "meridian": meridian,
    "warped_slice": warped_slice,
}


def immersion(name: str, source: ChartedManifold, target: ChartedManifold,
              **params) -> ImmersionData:
    """Build a preset immersion and check it is isometric at its sample-box centre."""
    try:
        factory = IMMERSIONS[name]
    except KeyError:
        raise ConfigError(f"unknown immersion preset {name!r}; choose from {sorted(IMMERSIONS)}") \
            from None
    try:
        imm = factory(source, target, **params)
    except TypeError as exc:
        raise ConfigError(f"immersion {name!r}: {exc}") from exc
    centre = [0.5 * (lo + hi) + 0.1 for lo, hi in imm.sample_box]
    try:
        induced_metric(imm, centre)
    except IsometryError as exc:
        raise ConfigError(str(exc)) from exc
    return imm
