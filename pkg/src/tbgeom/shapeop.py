"""Second fundamental form of the lifted submanifold LM inside (TN, G).

The Levi-Civita connection of G is obtained from first-order jets of the
natural-coordinate metric; the lifted frame fields are differentiated
through the lift map, so nothing is extended off LM.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diffcore import jet_eval, taylor_arrays
from .errors import PreconditionError, SingularMetricError
from .gnatural import GNaturalGenerators, metric_natural_jets, scalars_at
from .manifold import ChartedManifold, christoffel, fit_constant_curvature, metric_at, riemann
from .submanifold import ImmersionData, immersion_derivatives, is_totally_geodesic, normal_frame
from .tangentlift import lift_immersion, lift_vectors_TN, lifted_point, normal_space_LM

TG_TOL = 1e-8
COMPONENT_TOL = 1e-7


def tn_christoffel(gen: GNaturalGenerators, man: ChartedManifold, x, u):
    """(Gamma~[C, A, B], G) of (TN, G) in natural coordinates (x, u)."""
    G, dG = metric_natural_jets(gen, man, x, u, order=1)
    try:
        Ginv = np.linalg.inv(G)
    except np.linalg.LinAlgError as exc:
        raise SingularMetricError(f"G is singular at x={list(x)}, u={list(u)}") from exc
    first_kind = 0.5 * (dG.transpose(2, 0, 1) + dG.transpose(2, 1, 0) - dG)
    return np.einsum("cd,dab->cab", Ginv, first_kind), G, dG


def tn_compatibility_residual(gen: GNaturalGenerators, man: ChartedManifold, x, u) -> float:
    """max |d_C G_AB - Gamma~^D_CA G_DB - Gamma~^D_CB G_AD|."""
    gam, G, dG = tn_christoffel(gen, man, x, u)
    lowered = np.einsum("dca,db->cab", gam, G)
    return float(np.max(np.abs(dG - lowered - lowered.transpose(0, 2, 1))))


@dataclass(frozen=True)
class LMSecondFundamentalReport:
    y: np.ndarray
    v: np.ndarray
    components: np.ndarray  # G(nabla~_{T_i} T_j, N_k) as [i, j, k]
    covariant: np.ndarray  # nabla~_{T_i} T_j as [i, j, A]
    tangent: np.ndarray
    normals: np.ndarray
    G: np.ndarray
    symmetry_residual: float
    gauss_residual: float

    @property
    def max_component(self) -> float:
        return float(np.max(np.abs(self.components))) if self.components.size else 0.0

    def pair(self, X, Y, xi) -> float:
        """G(nabla~_X Y, xi) for X, Y given by coefficients on the lifted frame and xi normal."""
        return float(np.einsum("i,j,ijA,AB,B->", X, Y, self.covariant, self.G, xi))


def second_fundamental_form_LM(gen: GNaturalGenerators, imm: ImmersionData, y, v
                               ) -> LMSecondFundamentalReport:
    p = lifted_point(imm, y, v)
    bundle = normal_space_LM(gen, imm, p.y, p.v)
    z, J, H = taylor_arrays(jet_eval(lift_immersion(imm), p.w, 2))
    n = imm.n
    gam, G, _ = tn_christoffel(gen, imm.target, z[:n], z[n:])
    cov = H.transpose(1, 2, 0) + np.einsum("cab,ai,bj->ijc", gam, J, J)
    N = bundle.normals
    comps = np.einsum("ijA,AB,Bk->ijk", cov, G, N)
    signs = np.sign(np.diag(bundle.gram))
    normal_part = np.einsum("ijk,k,Ak->ijA", comps, signs, N)
    rhs = np.einsum("Ap,AB,ijB->pij", J, G, cov)
    coef = np.linalg.solve(J.T @ G @ J, rhs.reshape(rhs.shape[0], -1)).reshape(rhs.shape)
    tangential = np.einsum("Ap,pij->ijA", J, coef)
    gauss = float(np.max(np.abs(tangential + normal_part - cov)))
    sym = float(np.max(np.abs(comps - comps.transpose(1, 0, 2)))) if comps.size else 0.0
    return LMSecondFundamentalReport(p.y, p.v, comps, cov, J, N, G, sym, gauss)


def _riemann_form(man, x):
    return riemann(man, x).components  # R(X, Y, Z, W) = R_rstl X^r Y^s Z^t W^l


def curvature_invariance_residual(imm: ImmersionData, y) -> float:
    """max |R(B_a, B_b, B_c, eta)| over tangent coordinate vectors and unit normals."""
    x, B = immersion_derivatives(imm, y, 0)
    R = _riemann_form(imm.target, x)
    eta = normal_frame(imm, y).vectors
    if eta.size == 0:
        return 0.0
    return float(np.max(np.abs(np.einsum("rstl,ra,sb,tc,lk->abck", R, B, B, B, eta))))


@dataclass(frozen=True)
class ComponentComparison:
    """One family of closed-form components, indexed [normal, a, b]."""

    name: str
    numeric: np.ndarray
    closed_form: np.ndarray

    @property
    def residual(self) -> float:
        return float(np.max(np.abs(self.numeric - self.closed_form)))

    @property
    def max_numeric(self) -> float:
        return float(np.max(np.abs(self.numeric)))

    @property
    def max_closed_form(self) -> float:
        return float(np.max(np.abs(self.closed_form)))


# <first slot lift><second slot lift>_eta_<normal lift>
COMPONENT_FAMILIES = ("hh_eta_h", "hv_eta_h", "hh_eta_v", "vv_eta_h", "hv_eta_v", "vv_eta_v")


def closed_form_components(gen: GNaturalGenerators, imm: ImmersionData, y, v, eta=None,
                           tg_tol: float = TG_TOL,
                           report: LMSecondFundamentalReport | None = None):
    """Numeric shape-operator components of LM against their curvature expressions.

    With Ae the shape operator of LM for the normal e, the comparisons are

        -G(A_{eta^h} d_a^h, d_b^h) = a2 R(u, d_a, eta, d_b)
        -G(A_{eta^h} d_a^h, d_b^v) = a1/2 R(u, d_a, eta, d_b)
        -G(A_{eta^v} d_a^h, d_b^h) = a1/2 R(u, eta, d_a, d_b)

    and the remaining blocks, whose closed form is zero.  Requires M to be
    totally geodesic.
    """
    p = lifted_point(imm, y, v)
    ok, worst = is_totally_geodesic(imm, [p.y], tg_tol)
    if not ok:
        raise PreconditionError(f"{imm.name} is not totally geodesic at {list(p.y)} (|h|={worst:.3e})")
    report = report or second_fundamental_form_LM(gen, imm, p.y, p.v)
    m, n = imm.m, imm.n
    x, B = immersion_derivatives(imm, p.y, 0)
    g = metric_at(imm.target, x)
    s = scalars_at(gen, float(p.u @ g @ p.u))
    R = _riemann_form(imm.target, x)
    etas = normal_frame(imm, p.y).vectors if eta is None else np.asarray(eta, float).reshape(n, 1)

    gam_m = christoffel(imm.source, p.y)
    dh = np.zeros((m, 2 * m))  # d_a^h = d/dy^a - v^s Gamma_M^c_sa d/dv^c in (y, v) coefficients
    dv = np.zeros((m, 2 * m))
    for a in range(m):
        dh[a, a] = 1.0
        dh[a, m:] = -np.einsum("cs,s->c", gam_m[:, :, a], p.v)
        dv[a, m + a] = 1.0
    slots = {"h": dh, "v": dv}

    num = {k: np.zeros((etas.shape[1], m, m)) for k in COMPONENT_FAMILIES}
    cf = {k: np.zeros((etas.shape[1], m, m)) for k in COMPONENT_FAMILIES}
    for k in range(etas.shape[1]):
        e = etas[:, k]
        eh, ev = lift_vectors_TN(imm.target, x, p.u, e)
        lifts = {"h": eh, "v": ev}
        for name in COMPONENT_FAMILIES:
            first, second, which = name[0], name[1], name[-1]
            for a in range(m):
                for b in range(m):
                    num[name][k, a, b] = -report.pair(slots[first][a], slots[second][b], lifts[which])
        ru_a_eta_b = np.einsum("rstl,r,sa,t,lb->ab", R, p.u, B, e, B)
        ru_eta_a_b = np.einsum("rstl,r,s,ta,lb->ab", R, p.u, e, B, B)
        cf["hh_eta_h"][k] = s.a2 * ru_a_eta_b
        cf["hv_eta_h"][k] = 0.5 * s.a1 * ru_a_eta_b
        cf["hh_eta_v"][k] = 0.5 * s.a1 * ru_eta_a_b
    return [ComponentComparison(name, num[name], cf[name]) for name in COMPONENT_FAMILIES]


def lifted_normal_residual(gen: GNaturalGenerators, imm: ImmersionData, y, v) -> float:
    """max |G(eta^h or eta^v, tangent of LM)| for the normals eta of M."""
    rep = second_fundamental_form_LM(gen, imm, y, v)
    p = lifted_point(imm, y, v)
    x, _ = immersion_derivatives(imm, p.y, 0)
    worst = 0.0
    for e in normal_frame(imm, p.y).vectors.T:
        for xi in lift_vectors_TN(imm.target, x, p.u, e):
            worst = max(worst, float(np.max(np.abs(rep.tangent.T @ rep.G @ xi))))
    return worst


@dataclass(frozen=True)
class TheoremVerdict:
    m_totally_geodesic: bool
    n_constant_curvature: bool
    lm_totally_geodesic: bool
    max_h_m: float
    fitted_curvature: float
    curvature_residual: float
    max_lm_component: float
    tol: float
    worst_point: tuple = field(default=())

    @property
    def hypotheses_met(self) -> bool:
        return self.m_totally_geodesic and self.n_constant_curvature

    @property
    def implication_holds(self) -> bool:
        return not self.hypotheses_met or self.lm_totally_geodesic

    @property
    def status(self) -> str:
        if not self.hypotheses_met:
            return "hypothesis not met"
        return "confirmed" if self.lm_totally_geodesic else "violated"


def theorem_check(gen: GNaturalGenerators, imm: ImmersionData, samples, tol: float = COMPONENT_TOL,
                  curvature_tol: float = 1e-9, tg_tol: float = TG_TOL) -> TheoremVerdict:
    """Evaluate the three hypotheses/conclusion over ``samples`` of (y, v) pairs."""
    samples = [(np.asarray(y, float), np.asarray(v, float)) for y, v in samples]
    if not samples:
        raise ValueError("theorem_check needs at least one sample")
    tg, h_max = is_totally_geodesic(imm, [y for y, _ in samples], tg_tol)
    images = [immersion_derivatives(imm, y, 0)[0] for y, _ in samples]
    c, cres = fit_constant_curvature(imm.target, images)
    worst, where = -1.0, ()
    for y, v in samples:
        comp = second_fundamental_form_LM(gen, imm, y, v).max_component
        if comp > worst:
            worst, where = comp, (tuple(map(float, y)), tuple(map(float, v)))
    return TheoremVerdict(tg, cres <= curvature_tol, worst <= tol, h_max, c, cres, worst, tol, where)
