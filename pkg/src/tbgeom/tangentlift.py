"""The lift of an immersion to tangent bundles and its normal geometry.

Tangent vectors of TN are stored as 2n-vectors of coordinates along
(d/dx^1..d/dx^n, d/du^1..d/du^n); tangent vectors of TM likewise along
(d/dy, d/dv).  The lift of f: M -> N is

    f~(y, v) = (x(y), v^a B_a(y)),

whose image LM is a 2m-dimensional submanifold of TN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .diffcore import SmoothMap, jacobian, jet_eval, partials, taylor_arrays
from .errors import DegenerateImmersionError, NondegeneracyError, PreconditionError, CasePatternError
from .gnatural import GNaturalGenerators, metric_natural, scalars_at
from .manifold import ChartedManifold, christoffel, metric_at
from .submanifold import (ImmersionData, immersion_derivatives, induced_christoffel,
                          is_totally_geodesic, normal_frame, vdwb_derivative)

ZERO_REL = 1e-10
DEAD_ZONE = 10.0


@dataclass(frozen=True)
class LiftedPoint:
    y: np.ndarray
    v: np.ndarray
    x: np.ndarray
    u: np.ndarray

    @property
    def w(self):
        return np.concatenate([self.y, self.v])

    @property
    def z(self):
        return np.concatenate([self.x, self.u])


def lifted_point(imm: ImmersionData, y, v) -> LiftedPoint:
    y = imm.check(y)
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape[0] != imm.m:
        raise ValueError(f"fibre vector has {v.shape[0]} components, M has dimension {imm.m}")
    x, B = immersion_derivatives(imm, y, 0)
    return LiftedPoint(y, v, x, B @ v)


def lift_immersion(imm: ImmersionData) -> SmoothMap:
    """(y, v) -> (x(y), v^a B_a^r(y))."""
    m, n = imm.m, imm.n
    dmap = partials(imm.map)

    def evaluator(w):
        y, v = list(w[:m]), list(w[m:])
        x = list(imm.map.evaluator(y))
        B = dmap.evaluator(y)
        u = [sum((v[a] * B[r * m + a] for a in range(m)), 0.0) for r in range(n)]
        return x + u

    return SmoothMap(2 * m, 2 * n, evaluator, dmap.max_order, f"lift[{imm.name}]")


def lifted_jacobian(imm: ImmersionData, y, v) -> np.ndarray:
    p = lifted_point(imm, y, v)
    return jacobian(lift_immersion(imm), p.w, rank=2 * imm.m)


def displayed_frame(imm: ImmersionData, y, v) -> np.ndarray:
    """Columns d/dy^a = (B_a, v^b B_{a.b}) and d/dv^a = (0, B_a) in TN coordinates."""
    p = lifted_point(imm, y, v)
    x, B, dB = immersion_derivatives(imm, p.y, 1)
    n, m = imm.n, imm.m
    T = np.zeros((2 * n, 2 * m))
    T[:n, :m] = B
    T[n:, :m] = np.einsum("rab,b->ra", dB, p.v)
    T[n:, m:] = B
    return T


# -- lifts and the connection map on a single bundle -----------------------


def _gamma_u(man: ChartedManifold, x, u) -> np.ndarray:
    """Gamma(u)^r_t = Gamma^r_st u^s."""
    return np.einsum("rst,s->rt", christoffel(man, x), np.asarray(u, float))


def lift_vectors_TN(man: ChartedManifold, x, u, X):
    """Horizontal and vertical lifts of X at (x, u) as 2n-vectors."""
    X = np.asarray(X, dtype=float)
    n = man.dim
    Xh = np.concatenate([X, -_gamma_u(man, x, u) @ X])
    Xv = np.concatenate([np.zeros(n), X])
    return Xh, Xv


def connection_map(man: ChartedManifold, x, u, W) -> np.ndarray:
    """K(W) = (Wbar^r + Gamma^r_st u^s W^t) d_r."""
    W = np.asarray(W, dtype=float)
    n = man.dim
    return W[n:] + _gamma_u(man, x, u) @ W[:n]


def projection(man: ChartedManifold, W) -> np.ndarray:
    """d pi(W): the base components."""
    return np.asarray(W, dtype=float)[:man.dim]


def k_vectors(imm: ImmersionData, y, v):
    """(K_a^r as ``[a, r]``, K^r = v^a K_a^r) with K_a^r = v^b nabla_b B_a^r."""
    p = lifted_point(imm, y, v)
    nab = vdwb_derivative(imm, p.y)
    Ka = np.einsum("abr,b->ar", nab, p.v)
    return Ka, p.v @ Ka


# -- lemma checks ----------------------------------------------------------


def verify_lift_relation(imm: ImmersionData, y, v) -> float:
    """Residual of (d_a)^{v_N} = (d_a)^{v_M} and (d_a)^{h_N} = (d_a)^{h_M} - K_a."""
    p = lifted_point(imm, y, v)
    n, m = imm.n, imm.m
    J = lifted_jacobian(imm, p.y, p.v)
    B = J[:n, :m]
    Ka, _ = k_vectors(imm, p.y, p.v)
    worst = 0.0
    for a in range(m):
        hN, vN = lift_vectors_TN(imm.target, p.x, p.u, B[:, a])
        e = np.zeros(m)
        e[a] = 1.0
        hM, vM = lift_vectors_TN(imm.source, p.y, p.v, e)
        K = np.concatenate([np.zeros(n), Ka[a]])
        worst = max(worst,
                    float(np.max(np.abs(vN - J @ vM))),
                    float(np.max(np.abs(hN - (J @ hM - K)))))
    return worst


def verify_projection_lemma(imm: ImmersionData, y, v) -> float:
    """max |d pi_N(W) - df(d pi_M(W))| over W in {d/dy^a, d/dv^a}."""
    p = lifted_point(imm, y, v)
    m = imm.m
    J = lifted_jacobian(imm, p.y, p.v)
    B = J[:imm.n, :m]
    worst = 0.0
    for i in range(2 * m):
        W = np.zeros(2 * m)
        W[i] = 1.0
        lhs = projection(imm.target, J @ W)
        rhs = B @ projection(imm.source, W)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


def verify_connection_lemma(imm: ImmersionData, y, v) -> float:
    """Residual of K_N(d/dv^a) = df K_M(d/dv^a) and
    K_N(d/dy^a) = v^b nabla_b B_a + df K_M(d/dy^a)."""
    p = lifted_point(imm, y, v)
    m = imm.m
    J = lifted_jacobian(imm, p.y, p.v)
    B = J[:imm.n, :m]
    Ka, _ = k_vectors(imm, p.y, p.v)
    worst = 0.0
    for a in range(m):
        Wy = np.zeros(2 * m)
        Wy[a] = 1.0
        Wv = np.zeros(2 * m)
        Wv[m + a] = 1.0
        kn_v = connection_map(imm.target, p.x, p.u, J @ Wv)
        km_v = B @ connection_map(imm.source, p.y, p.v, Wv)
        kn_y = connection_map(imm.target, p.x, p.u, J @ Wy)
        km_y = B @ connection_map(imm.source, p.y, p.v, Wy)
        worst = max(worst, float(np.max(np.abs(kn_v - km_v))),
                    float(np.max(np.abs(kn_y - (Ka[a] + km_y)))))
    return worst


def frame_consistency_residual(imm: ImmersionData, y, v) -> float:
    return float(np.max(np.abs(lifted_jacobian(imm, y, v) - displayed_frame(imm, y, v))))


# -- normal space of LM ----------------------------------------------------


@dataclass(frozen=True)
class LMFrameBundle:
    point: LiftedPoint
    G: np.ndarray  # metric of TN in natural coordinates at f~(y, v)
    tangent: np.ndarray  # (2n, 2m): d/dy^a, d/dv^a pushed forward
    normals: np.ndarray  # (2n, 2(n-m)), G-orthonormal up to sign
    gram: np.ndarray
    Ka: np.ndarray
    K: np.ndarray
    H_top: np.ndarray  # (n, 2(n-m)) one column per normal
    H_perp: np.ndarray
    V_top: np.ndarray
    V_perp: np.ndarray

    def orthogonality_residual(self) -> float:
        return float(np.max(np.abs(self.normals.T @ self.G @ self.tangent)))


def g_orthogonal_complement(G: np.ndarray, T: np.ndarray, rtol: float = 1e-9) -> np.ndarray:
    """G-orthonormal basis of {Z : G(Z, T_i) = 0}; G may be indefinite.

    The complement is extracted from the G-adjoint projector with a
    column-pivoted QR; the result is diagonalised so that its Gram matrix
    is diag(+-1), each column's largest entry made positive.
    """
    dim, k_tan = T.shape
    k = dim - k_tan
    GT = T.T @ G @ T
    s = np.linalg.svd(GT, compute_uv=False)
    if s[-1] <= rtol * max(1.0, s[0]):
        raise DegenerateImmersionError("G is degenerate on the lifted tangent space")
    P = np.eye(dim) - T @ np.linalg.solve(GT, T.T @ G)
    Q, R, piv = scipy.linalg.qr(P, pivoting=True)
    diag = np.abs(np.diag(R))
    if diag[k - 1] <= rtol * diag[0] or (k < dim and diag[k] > 1e-6 * diag[0]):
        raise DegenerateImmersionError(f"normal complement rank differs from {k}")
    N = Q[:, :k]
    M = N.T @ G @ N
    lam, V = np.linalg.eigh(0.5 * (M + M.T))
    if np.min(np.abs(lam)) <= rtol * max(1.0, np.max(np.abs(lam))):
        raise DegenerateImmersionError("G is degenerate on the normal complement")
    N = N @ V / np.sqrt(np.abs(lam))
    for j in range(k):
        i = int(np.argmax(np.abs(N[:, j])))
        if N[i, j] < 0:
            N[:, j] = -N[:, j]
    return N


def _tangent_projector(g, B):
    return B @ np.linalg.solve(B.T @ g @ B, B.T @ g)


def normal_space_LM(gen: GNaturalGenerators, imm: ImmersionData, y, v) -> LMFrameBundle:
    p = lifted_point(imm, y, v)
    n = imm.n
    G = metric_natural(gen, imm.target, p.x, p.u)
    T = lifted_jacobian(imm, p.y, p.v)
    N = g_orthogonal_complement(G, T)
    g = metric_at(imm.target, p.x)
    B = T[:n, :imm.m]
    Pt = _tangent_projector(g, B)
    H = N[:n]
    V = np.stack([connection_map(imm.target, p.x, p.u, N[:, j]) for j in range(N.shape[1])], 1)
    Ka, K = k_vectors(imm, p.y, p.v)
    return LMFrameBundle(p, G, T, N, N.T @ G @ N, Ka, K,
                         Pt @ H, H - Pt @ H, Pt @ V, V - Pt @ V)


@dataclass(frozen=True)
class NormalConstraintResiduals:
    contracted_H: float  # g(H_top, u) = -(F1/F) g(K, a2 H_perp + a1 V_perp)
    contracted_V: float  # g(V_top, u) = (F2/F) g(K, a2 H_perp + a1 V_perp)
    vfn2: float  # F2 g(H_top, u) + F1 g(V_top, u) = 0
    vfn4: float  # (F1 + F3) g(H_top, u) + F2 g(V_top, u) = -g(K, ...)
    per_index_H: float
    per_index_V: float
    per_index_applies: bool

    def max_contracted(self) -> float:
        return max(self.contracted_H, self.contracted_V, self.vfn2, self.vfn4)


def verify_normal_constraints(gen: GNaturalGenerators, imm: ImmersionData, y, v,
                              bundle: LMFrameBundle | None = None) -> NormalConstraintResiduals:
    """Residuals of the constraint system satisfied by every LM-normal.

    The per-index forms are evaluated always; ``per_index_applies`` records
    whether they are expected to hold (a1, a2 constant with b vanishing, or
    dim M = 1).
    """
    bundle = bundle or normal_space_LM(gen, imm, y, v)
    p = bundle.point
    g = metric_at(imm.target, p.x)
    t = float(p.u @ g @ p.u)
    s = scalars_at(gen, t)
    if abs(s.F) <= 1e-12:
        raise NondegeneracyError(f"F vanishes at t={t}")
    B = bundle.tangent[:imm.n, :imm.m]
    res = np.zeros(6)
    for j in range(bundle.normals.shape[1]):
        W = s.a2 * bundle.H_perp[:, j] + s.a1 * bundle.V_perp[:, j]
        gKW = bundle.K @ g @ W
        X = bundle.H_top[:, j] @ g @ p.u
        Y = bundle.V_top[:, j] @ g @ p.u
        gKaW = bundle.Ka @ g @ W
        pH = B.T @ g @ bundle.H_top[:, j]
        pV = B.T @ g @ bundle.V_top[:, j]
        res = np.maximum(res, [
            abs(X + s.F1 / s.F * gKW),
            abs(Y - s.F2 / s.F * gKW),
            abs(s.F2 * X + s.F1 * Y),
            abs((s.F1 + s.F3) * X + s.F2 * Y + gKW),
            float(np.max(np.abs(pH + s.F1 / s.F * gKaW))),
            float(np.max(np.abs(pV - s.F2 / s.F * gKaW))),
        ])
    applies = imm.m == 1 or (gen.a1.is_constant() and gen.a2.is_constant() and gen.b_vanishes())
    return NormalConstraintResiduals(*map(float, res), applies)


def tangential_normal_parts(bundle: LMFrameBundle, g) -> float:
    """max over normals of ||H_top||_g + ||V_top||_g."""
    worst = 0.0
    for j in range(bundle.normals.shape[1]):
        h = bundle.H_top[:, j]
        w = bundle.V_top[:, j]
        worst = max(worst, math.sqrt(max(h @ g @ h, 0.0)) + math.sqrt(max(w @ g @ w, 0.0)))
    return worst


# -- the six-case normal frame -------------------------------------------------

# (a1 zero, A zero, sign a1, sign A) -> case predicates, in the order of the cases
CASE_PATTERNS = (
    lambda z1, zA, s1, sA: not z1 and not zA,
    lambda z1, zA, s1, sA: z1 and zA,
    lambda z1, zA, s1, sA: zA and not z1 and s1 < 0,
    lambda z1, zA, s1, sA: zA and not z1 and s1 > 0,
    lambda z1, zA, s1, sA: z1 and not zA and sA < 0,
    lambda z1, zA, s1, sA: z1 and not zA and sA > 0,
)


def _sgn(x):
    return 1.0 if x > 0 else -1.0


def select_case(a1: float, A: float, a2: float, zero_rel: float = ZERO_REL):
    """Case number 1..6 with its signs (eps, delta) for the generator values.

    Values within ``zero_rel`` of the generator scale count as zero; values
    up to ``DEAD_ZONE`` times that are rejected as ambiguous.
    """
    scale = max(abs(a1), abs(A), abs(a2))
    if scale == 0.0:
        raise PreconditionError("all generators vanish")
    zero = zero_rel * scale
    for name, val in (("a1", a1), ("A", A), ("a2", a2)):
        if zero < abs(val) <= DEAD_ZONE * zero:
            raise CasePatternError(f"{name}={val!r} lies in the dead zone ({zero:.1e}, "
                                   f"{DEAD_ZONE * zero:.1e}] of the case selection")
    z1, zA, z2 = abs(a1) <= zero, abs(A) <= zero, abs(a2) <= zero
    a = (0.0 if z1 else a1) * (0.0 if zA else A) - (0.0 if z2 else a2) ** 2
    if abs(a) <= zero * scale:
        raise PreconditionError(f"a = a1 A - a2^2 = {a!r} vanishes")
    hits = [i + 1 for i, pat in enumerate(CASE_PATTERNS)
            if pat(z1, zA, 0.0 if z1 else _sgn(a1), 0.0 if zA else _sgn(A))]
    if len(hits) != 1:
        raise AssertionError(f"case patterns overlap or miss: {hits}")
    case = hits[0]
    if case == 1:
        return case, _sgn(a), _sgn(a1)
    if case == 2:
        return case, _sgn(a2), 1.0
    if case in (3, 4):
        return case, _sgn(a1), 1.0
    return case, _sgn(A), 1.0


def case_coefficients(case: int, eps: float, delta: float, a1: float, A: float, a2: float):
    """(alpha_S, beta_S, alpha_T, beta_T) with S = alpha_S eta^h + beta_S eta^v, etc."""
    r3 = math.sqrt(3.0)
    if case == 1:
        a = a1 * A - a2 * a2
        c = eps * delta * math.sqrt(abs(a1)) / math.sqrt(abs(a))
        return c, -c * a2 / a1, 0.0, delta / math.sqrt(abs(a1))
    if case == 2:
        return eps / (2.0 * a2), -1.0, eps / (2.0 * a2), 1.0
    if case == 3:
        k = 1.0 / (r3 * math.sqrt(abs(a1)))
        return a1 * k / a2, k, 2.0 * a1 * k / a2, -k
    if case == 4:
        s = math.sqrt(a1)
        return a1 / (s * a2), -1.0 / s, 0.0, 1.0 / s
    if case == 5:
        k = 1.0 / (r3 * math.sqrt(abs(A)))
        return k, A * k / a2, -k, 2.0 * A * k / a2
    if case == 6:
        s = math.sqrt(A)
        return -1.0 / s, A / (s * a2), 1.0 / s, 0.0
    raise ValueError(f"no case {case}")


def expected_gram(case: int, eps: float, delta: float):
    """(G(S,S), G(S,T), G(T,T)) in units of g(eta_x, eta_y)."""
    if case == 1:
        return eps * delta, 0.0, delta
    if case == 2:
        return -eps, 0.0, eps
    return -1.0, 0.0, 1.0


@dataclass(frozen=True)
class TotallyGeodesicFrame:
    case: int
    eps: float
    delta: float
    coefficients: tuple
    S: np.ndarray  # (2n, n-m)
    T: np.ndarray
    gram: np.ndarray  # full Gram matrix of [S | T] under G
    expected: np.ndarray
    gram_residual: float
    orthogonality_residual: float


def normal_frame_totg(gen: GNaturalGenerators, imm: ImmersionData, y, v,
                      tg_tol: float = 1e-8) -> TotallyGeodesicFrame:
    """Normal frame {S_x, T_x} of LM when M is totally geodesic."""
    p = lifted_point(imm, y, v)
    ok, worst = is_totally_geodesic(imm, [p.y], tg_tol)
    if not ok:
        raise PreconditionError(f"{imm.name} is not totally geodesic at {list(p.y)} (|h|={worst:.3e})")
    g = metric_at(imm.target, p.x)
    t = float(p.u @ g @ p.u)
    s = scalars_at(gen, t)
    case, eps, delta = select_case(s.a1, s.A, s.a2)
    coeffs = case_coefficients(case, eps, delta, s.a1, s.A, s.a2)
    eta = normal_frame(imm, p.y).vectors
    lifts = [lift_vectors_TN(imm.target, p.x, p.u, eta[:, k]) for k in range(eta.shape[1])]
    eta_h = np.stack([h for h, _ in lifts], 1)
    eta_v = np.stack([w for _, w in lifts], 1)
    aS, bS, aT, bT = coeffs
    S = aS * eta_h + bS * eta_v
    T = aT * eta_h + bT * eta_v
    G = metric_natural(gen, imm.target, p.x, p.u)
    ST = np.concatenate([S, T], 1)
    gram = ST.T @ G @ ST
    ge = eta.T @ g @ eta
    ss, st, tt = expected_gram(case, eps, delta)
    expected = np.block([[ss * ge, st * ge], [st * ge, tt * ge]])
    tangent = lifted_jacobian(imm, p.y, p.v)
    return TotallyGeodesicFrame(case, eps, delta, coeffs, S, T, gram, expected,
                                float(np.max(np.abs(gram - expected))),
                                float(np.max(np.abs(ST.T @ G @ tangent))))
