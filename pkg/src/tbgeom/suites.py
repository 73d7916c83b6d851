"""Verification suites over a scenario's sample grid, and their reports.

Reports are plain dicts with a fixed key order.  Floats are rounded to four
significant digits and magnitudes below ``NOISE_FLOOR`` are written as 0,
so a report does not depend on the last bits of the linear algebra backend.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from . import gnatural as gn
from . import shapeop as so
from . import tangentlift as tl
from .errors import GeometryError
from .manifold import (CONVENTION, curvature_symmetry_residuals, fit_constant_curvature,
                       metric_at, metric_compatibility_residual, riemann)
from .scenario import Scenario
from .submanifold import immersion_derivatives, is_totally_geodesic

SUITES = ("metric", "lemmas", "normals", "frames", "shape", "theorem")
NOISE_FLOOR = 1e-13


def clean(x: float) -> float:
    """Round to four significant digits; flush tiny magnitudes to zero."""
    x = float(x)
    if not math.isfinite(x):
        return x
    if abs(x) < NOISE_FLOOR:
        return 0.0
    return float(f"{x:.4g}")


def _point(y, v):
    return {"y": [float(c) for c in y], "v": [float(c) for c in v]}


@dataclass
class Check:
    """Per-point residuals compared against a tolerance.

    ``mode`` is ``"le"`` (every value at most ``tolerance``), ``"max_ge"``
    (the largest value at least ``tolerance``) or ``"info"`` (report only).
    """

    name: str
    tolerance: float | None
    mode: str = "le"
    values: list = field(default_factory=list)  # (point index, value)
    errors: list = field(default_factory=list)  # (point index, message)

    def add(self, index, value):
        self.values.append((index, float(value)))

    @property
    def passed(self) -> bool:
        if self.errors:
            return False
        if self.mode == "info":
            return True
        if not self.values:
            return False
        if self.mode == "le":
            return all(v <= self.tolerance for _, v in self.values)
        return max(v for _, v in self.values) >= self.tolerance

    def summary(self, grid) -> dict:
        out = {"name": self.name, "mode": self.mode,
               "tolerance": None if self.tolerance is None else clean(self.tolerance),
               "count": len(self.values), "passed": self.passed}
        if self.values:
            rounded = [(i, clean(v)) for i, v in self.values]
            worst = max(rounded, key=lambda iv: iv[1])  # first index wins ties
            out.update(min=min(v for _, v in rounded), max=worst[1],
                       mean=clean(sum(v for _, v in self.values) / len(self.values)),
                       worst_point=dict(index=worst[0], **_point(*grid[worst[0]])))
        if self.errors:
            out["errors"] = [{"index": i, "message": msg} for i, msg in self.errors]
        return out


@dataclass
class Verdict:
    name: str
    passed: bool
    detail: dict

    def summary(self) -> dict:
        return {"name": self.name, "passed": self.passed, **self.detail}


@dataclass
class SuiteResult:
    name: str
    checks: list = field(default_factory=list)
    verdicts: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks) and all(v.passed for v in self.verdicts)

    def summary(self, grid) -> dict:
        return {"name": self.name, "passed": self.passed,
                "checks": [c.summary(grid) for c in self.checks],
                "verdicts": [v.summary() for v in self.verdicts],
                "notes": list(self.notes)}


def _describe(exc: Exception) -> str:
    return f"{type(exc).__name__}: {exc}"


class Runner:
    """Evaluates suites on one scenario, caching per-point work shared between suites."""

    def __init__(self, scenario: Scenario, tol_scale: float = 1.0):
        if not tol_scale > 0:
            raise ValueError("tol_scale must be positive")
        self.sc = scenario
        self.tol_scale = tol_scale
        self.grid = scenario.sample_grid()
        self.imm = scenario.immersion
        self.gen = scenario.generators
        self._tg = None
        self._sff = {}

    def tol(self, key: str) -> float:
        return self.sc.tolerances[key] * self.tol_scale

    def _each(self, checks: dict, fn):
        """Run ``fn(index, y, v) -> {check name: value}``; failures go to every check."""
        for i, (y, v) in enumerate(self.grid):
            try:
                values = fn(i, y, v)
            except (GeometryError, ValueError, np.linalg.LinAlgError) as exc:
                for c in checks.values():
                    c.errors.append((i, _describe(exc)))
                continue
            for name, value in values.items():
                checks[name].add(i, value)

    @property
    def m_totally_geodesic(self):
        if self._tg is None:
            self._tg = is_totally_geodesic(self.imm, [y for y, _ in self.grid], self.tol("normal_constraints"))
        return self._tg

    def sff(self, i):
        if i not in self._sff:
            y, v = self.grid[i]
            self._sff[i] = so.second_fundamental_form_LM(self.gen, self.imm, y, v)
        return self._sff[i]

    # -- suites ----------------------------------------------------------------

    def metric(self) -> SuiteResult:
        res = SuiteResult("metric")
        t_hi = self.sc.v_max ** 2
        t_grid = np.linspace(0.0, t_hi, self.sc.t_steps)
        rep = gn.nondegeneracy_check(self.gen, t_grid, dim=self.sc.target.dim)
        res.verdicts.append(Verdict("nondegeneracy", rep.ok, {
            "t_range": [0.0, clean(t_hi)], "t_steps": self.sc.t_steps, "floor": rep.floor,
            "min_abs_a": clean(rep.min_abs_a), "t_at_min_abs_a": clean(rep.t_min_a),
            "min_abs_F": clean(rep.min_abs_F), "t_at_min_abs_F": clean(rep.t_min_F),
            "F_enforced": rep.f_enforced,
            "zeros": _zero_locations(self.gen, t_grid, rep.floor, rep.f_enforced)}))
        man = self.sc.target
        checks = {k: Check(k, self.tol(t)) for k, t in (
            ("adapted_round_trip", "exact"), ("base_metric_compatibility", "first_order"),
            ("curvature_symmetries", "symmetry"), ("tn_metric_compatibility", "first_order"))}

        def at(i, y, v):
            p = tl.lifted_point(self.imm, y, v)
            Gad = np.asarray(gn.metric_adapted(self.gen, man, p.x, p.u), float)
            Gnat = gn.metric_natural(self.gen, man, p.x, p.u)
            P = gn.basis_change(man, p.x, p.u)
            scale = max(1.0, float(np.max(np.abs(Gad))))
            sym = curvature_symmetry_residuals(riemann(man, p.x).components)
            return {"adapted_round_trip": float(np.max(np.abs(P.T @ Gnat @ P - Gad))) / scale,
                    "base_metric_compatibility": metric_compatibility_residual(man, p.x),
                    "curvature_symmetries": max(sym.values()),
                    "tn_metric_compatibility": so.tn_compatibility_residual(self.gen, man, p.x, p.u)}

        self._each(checks, at)
        res.checks.extend(checks.values())
        try:
            p = tl.lifted_point(self.imm, *self.grid[0])
            pos, neg, zero = gn.signature(gn.metric_natural(self.gen, man, p.x, p.u))
            res.notes.append(f"signature of G at grid point 0: ({pos}, {neg}, {zero})")
        except GeometryError as exc:
            res.notes.append(f"signature of G unavailable at grid point 0: {_describe(exc)}")
        return res

    def lemmas(self) -> SuiteResult:
        res = SuiteResult("lemmas")
        checks = {k: Check(k, self.tol(t)) for k, t in (
            ("frame_consistency", "exact"), ("lift_relation", "first_order"),
            ("projection", "first_order"), ("connection_map", "first_order"))}
        imm = self.imm
        self._each(checks, lambda i, y, v: {
            "frame_consistency": tl.frame_consistency_residual(imm, y, v),
            "lift_relation": tl.verify_lift_relation(imm, y, v),
            "projection": tl.verify_projection_lemma(imm, y, v),
            "connection_map": tl.verify_connection_lemma(imm, y, v)})
        res.checks.extend(checks.values())
        return res

    def normals(self) -> SuiteResult:
        res = SuiteResult("normals")
        tol = self.tol("normal_constraints")
        names = ["lm_normal_orthogonality", "contracted_H", "contracted_V", "vfn2", "vfn4"]
        tg, _ = self.m_totally_geodesic
        per_index = self.imm.m == 1 or (self.gen.a1.is_constant() and self.gen.a2.is_constant()
                                        and self.gen.b_vanishes())
        if per_index:
            names += ["per_index_H", "per_index_V"]
        else:
            res.notes.append("per-index constraint forms skipped: they need a1, a2 constant and "
                             "b1 = b2 = b3 = 0, or dim M = 1")
        if tg:
            names.append("tangential_parts")
        checks = {k: Check(k, self.tol("first_order") if k == "lm_normal_orthogonality" else tol)
                  for k in names}

        def at(i, y, v):
            bundle = tl.normal_space_LM(self.gen, self.imm, y, v)
            r = tl.verify_normal_constraints(self.gen, self.imm, y, v, bundle)
            out = {"lm_normal_orthogonality": bundle.orthogonality_residual(),
                   "contracted_H": r.contracted_H, "contracted_V": r.contracted_V,
                   "vfn2": r.vfn2, "vfn4": r.vfn4}
            if per_index:
                out.update(per_index_H=r.per_index_H, per_index_V=r.per_index_V)
            if tg:
                out["tangential_parts"] = tl.tangential_normal_parts(
                    bundle, metric_at(self.imm.target, bundle.point.x))
            return out

        self._each(checks, at)
        res.checks.extend(checks.values())
        return res

    def frames(self) -> SuiteResult:
        res = SuiteResult("frames")
        tg, h = self.m_totally_geodesic
        if not tg:
            res.notes.append(f"skipped: M is not totally geodesic (max |h| = {clean(h)})")
            return res
        checks = {"gram_relations": Check("gram_relations", self.tol("gram")),
                  "frame_orthogonality": Check("frame_orthogonality", self.tol("first_order"))}
        cases = {}

        def at(i, y, v):
            f = tl.normal_frame_totg(self.gen, self.imm, y, v)
            cases[i] = f.case
            return {"gram_relations": f.gram_residual, "frame_orthogonality": f.orthogonality_residual}

        self._each(checks, at)
        res.checks.extend(checks.values())
        res.notes.append(f"cases hit: {sorted(set(cases.values()))}")
        return res

    def shape(self) -> SuiteResult:
        res = SuiteResult("shape")
        expect = self.sc.expect
        tg, _ = self.m_totally_geodesic
        checks = {"sff_symmetry": Check("sff_symmetry", self.tol("sff_symmetry")),
                  "gauss_consistency": Check("gauss_consistency", self.tol("first_order"))}
        if "min_lm_component" in expect:
            comp = Check("lm_max_component", expect["min_lm_component"], mode="max_ge")
        elif expect.get("lm_totally_geodesic", tg):
            comp = Check("lm_max_component", self.tol("theorem"))
        else:
            comp = Check("lm_max_component", None, mode="info")
        checks["lm_max_component"] = comp
        families = so.COMPONENT_FAMILIES if tg else ()
        for fam in families:
            checks[f"closed_form_{fam}"] = Check(f"closed_form_{fam}", self.tol("curvature"))
        if tg:
            for k in ("closed_form_numeric_side", "closed_form_curvature_side", "curvature_invariance"):
                checks[k] = Check(k, self.tol("curvature"))

        def at(i, y, v):
            rep = self.sff(i)
            out = {"sff_symmetry": rep.symmetry_residual, "gauss_consistency": rep.gauss_residual,
                   "lm_max_component": rep.max_component}
            if tg:
                comps = so.closed_form_components(self.gen, self.imm, y, v, report=rep)
                for c in comps:
                    out[f"closed_form_{c.name}"] = c.residual
                out["closed_form_numeric_side"] = max(c.max_numeric for c in comps)
                out["closed_form_curvature_side"] = max(c.max_closed_form for c in comps)
                out["curvature_invariance"] = so.curvature_invariance_residual(self.imm, y)
            return out

        self._each(checks, at)
        res.checks.extend(checks.values())
        if tg:
            res.notes.append("closed-form identities are compared only where M is totally geodesic; "
                             "both sides are reported separately")
        return res

    def theorem(self) -> SuiteResult:
        res = SuiteResult("theorem")
        tol = self.tol("theorem")
        try:
            tg, h = self.m_totally_geodesic
            images = [immersion_derivatives(self.imm, y, 0)[0] for y, _ in self.grid]
            c, cres = fit_constant_curvature(self.imm.target, images)
            worst, where = -1.0, 0
            for i in range(len(self.grid)):
                comp = self.sff(i).max_component
                if clean(comp) > clean(worst):
                    worst, where = comp, i
        except (GeometryError, ValueError, np.linalg.LinAlgError) as exc:
            res.verdicts.append(Verdict("theorem", False, {"error": _describe(exc)}))
            return res
        verdict = so.TheoremVerdict(tg, cres <= self.tol("first_order"), worst <= tol, h, c, cres,
                                    worst, tol)
        triple = [verdict.m_totally_geodesic, verdict.n_constant_curvature,
                  verdict.lm_totally_geodesic]
        expected = self.sc.expect.get("verdict")
        passed = verdict.implication_holds and (expected is None or expected == triple)
        res.verdicts.append(Verdict("theorem", passed, {
            "m_totally_geodesic": triple[0], "n_constant_curvature": triple[1],
            "lm_totally_geodesic": triple[2], "expected": expected,
            "status": verdict.status, "implication_holds": verdict.implication_holds,
            "max_h_m": clean(h), "fitted_curvature": clean(c), "curvature_residual": clean(cres),
            "max_lm_component": clean(worst), "tolerance": clean(tol),
            "worst_point": dict(index=where, **_point(*self.grid[where]))}))
        if tg and triple[2] and not triple[1]:
            res.notes.append("LM is totally geodesic although N does not have constant curvature")
        return res

    def scope_note(self) -> str:
        return (f"a(t) and F(t) are checked on t in [0, {clean(self.sc.v_max ** 2)}], "
                "not on all of [0, inf)")

    def run(self, suites) -> dict:
        results = [getattr(self, name)() for name in suites]
        return {
            "tool": "tbgeom",
            "version": __version__,
            "convention": CONVENTION,
            "nondegeneracy_scope": self.scope_note(),
            "scenario": {"name": self.sc.name, "description": self.sc.description,
                         "config": self.sc.echo},
            "seed": self.sc.seed,
            "tol_scale": self.tol_scale,
            "grid": [_point(y, v) for y, v in self.grid],
            "suites": [r.summary(self.grid) for r in results],
            "passed": all(r.passed for r in results),
        }


def _zero_locations(gen, t_grid, floor, f_enforced):
    """t values where a (or F) is within ``floor`` of zero, or brackets of a sign change."""
    rows = [gn.scalars_at(gen, t) for t in t_grid]
    out = []
    for label in ("a", "F") if f_enforced else ("a",):
        vals = [getattr(r, label) for r in rows]
        for k, t in enumerate(t_grid):
            if abs(vals[k]) <= floor:
                out.append({"scalar": label, "t": clean(t)})
            elif k and abs(vals[k - 1]) > floor and vals[k - 1] * vals[k] < 0:
                out.append({"scalar": label, "between": [clean(t_grid[k - 1]), clean(t)]})
    return out


def resolve_suites(selector: str):
    if selector == "all":
        return list(SUITES)
    if selector not in SUITES:
        raise ValueError(f"unknown suite {selector!r}; choose from {list(SUITES) + ['all']}")
    return [selector]


def run_scenario(scenario: Scenario, selector: str = "all", tol_scale: float = 1.0) -> dict:
    return Runner(scenario, tol_scale).run(resolve_suites(selector))


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2) + "\n"


def report_text(report: dict) -> str:
    """Aligned plain-text table of every check and verdict."""
    head = ["suite", "check", "tolerance", "max", "mean", "worst point", "status"]
    rows = []
    for suite in report["suites"]:
        for c in suite["checks"]:
            wp = c.get("worst_point")
            where = f"#{wp['index']} y={wp['y']} v={wp['v']}" if wp else "-"
            status = "PASS" if c["passed"] else "FAIL"
            if c.get("errors"):
                status += f" ({len(c['errors'])} errors)"
            tol = "-" if c["tolerance"] is None else (">=" if c["mode"] == "max_ge" else "<=") + \
                f"{c['tolerance']:.0e}"
            rows.append([suite["name"], c["name"], tol, _num(c.get("max")), _num(c.get("mean")),
                         where, status])
        for v in suite["verdicts"]:
            rows.append([suite["name"], v["name"], "-", "-", "-", "-", "PASS" if v["passed"] else "FAIL"])
    widths = [max(len(str(r[k])) for r in [head] + rows) for k in range(len(head))]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    lines = [f"scenario {report['scenario']['name']}  seed {report['seed']}  "
             f"tol-scale {report['tol_scale']}  tbgeom {report['version']}",
             f"curvature convention: {report['convention']}",
             f"nondegeneracy scope: {report['nondegeneracy_scope']}", "",
             fmt.format(*head), fmt.format(*["-" * w for w in widths])]
    lines += [fmt.format(*map(str, r)) for r in rows]
    for suite in report["suites"]:
        for v in suite["verdicts"]:
            detail = {k: val for k, val in v.items() if k not in ("name", "passed")}
            lines.append(f"{suite['name']}/{v['name']}: {json.dumps(detail)}")
        for note in suite["notes"]:
            lines.append(f"{suite['name']}: {note}")
    lines.append("")
    lines.append("RESULT: " + ("PASS" if report["passed"] else "FAIL"))
    return "\n".join(lines) + "\n"


def _num(x):
    return "-" if x is None else f"{x:.3e}"
