"""End-to-end acceptance checks, grouped by criterion with the `criterion` marker.

The terminal summary (see conftest.py) prints one PASS/FAIL line for each.
"""

import json
import math
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import tbgeom
from tbgeom import gnatural as gn
from tbgeom import manifold as mf
from tbgeom import shapeop as so
from tbgeom import submanifold as sm
from tbgeom import tangentlift as tl
from tbgeom.cli import main
from tbgeom.errors import PreconditionError
from tbgeom.scenario import load_scenario

SCENARIOS = Path(tbgeom.__file__).parent / "scenarios"
EQUATOR_SCENARIOS = [f"{g}-equator-{e}" for e in ("s1-in-s2", "s2-in-s3")
                     for g in ("sasaki", "cg", "random")]
TOTALLY_GEODESIC_SCENARIOS = EQUATOR_SCENARIOS + ["plane-in-r3", "warped-slice",
                                                  "neutral-equator-s1-in-s2"]


def scenario(name):
    return load_scenario(SCENARIOS / f"{name}.toml")


def _v_norm(sc, y, v):
    return math.sqrt(float(v @ mf.metric_at(sc.source, y) @ v))


@pytest.mark.criterion(1)
def test_nondegeneracy_closed_algebra():
    start = time.perf_counter()
    ts = np.linspace(0.0, 10.0, 101)
    worst = 0.0
    for t in ts:
        s = gn.scalars_at(gn.sasaki(), t)
        worst = max(worst, abs(s.a - 1.0), abs(s.F - 1.0))
        c = gn.scalars_at(gn.cheeger_gromoll(), t)
        worst = max(worst, abs(c.a - 1.0 / (1.0 + t)), abs(c.F - (1.0 + t)))
    assert gn.nondegeneracy_check(gn.sasaki(), ts).ok
    assert gn.nondegeneracy_check(gn.cheeger_gromoll(), ts).ok
    elapsed = time.perf_counter() - start
    assert worst <= 1e-12
    assert elapsed < 1.0


@pytest.mark.criterion(2)
def test_lift_relation_small_circle():
    start = time.perf_counter()
    sc = scenario("small-circle")
    grid = sc.sample_grid()
    assert len(grid) == 100 and sc.v_max == 2.0
    assert max(_v_norm(sc, y, v) for y, v in grid) <= 2.0
    worst = max(tl.verify_lift_relation(sc.immersion, y, v) for y, v in grid)
    elapsed = time.perf_counter() - start
    assert worst <= 1e-9
    assert elapsed < 5.0


@pytest.mark.criterion(3)
@pytest.mark.parametrize("name", ["small-circle", "sasaki-equator-s1-in-s2"])
def test_projection_and_connection_lemmas(name):
    reference = scenario("small-circle")
    sc = replace(scenario(name), points=reference.points, seed=reference.seed,
                 v_max=reference.v_max)
    grid = sc.sample_grid()
    assert len(grid) == 100
    for y, v in grid:
        assert tl.verify_projection_lemma(sc.immersion, y, v) <= 1e-9
        assert tl.verify_connection_lemma(sc.immersion, y, v) <= 1e-9


@pytest.mark.criterion(4)
@pytest.mark.parametrize("name", ["small-circle", "small-circle-constant"])
def test_normal_constraints_small_circle(name):
    sc = scenario(name)
    gen = sc.generators
    assert gen.a1.is_constant() and gen.a2.is_constant()
    for y, v in sc.sample_grid()[:20]:
        res = tl.verify_normal_constraints(gen, sc.immersion, y, v)
        assert max(res.contracted_H, res.contracted_V, res.vfn2) <= 1e-8


@pytest.mark.criterion(4)
@pytest.mark.parametrize("name", TOTALLY_GEODESIC_SCENARIOS)
def test_tangential_parts_vanish_when_totally_geodesic(name):
    sc = scenario(name)
    for y, v in sc.sample_grid()[:20]:
        bundle = tl.normal_space_LM(sc.generators, sc.immersion, y, v)
        g = mf.metric_at(sc.target, bundle.point.x)
        assert tl.tangential_normal_parts(bundle, g) <= 1e-8


CASE_GENERATORS = {
    1: gn.sasaki(),
    2: gn.constant_generators(a2=1.0),
    3: gn.constant_generators(a1=-1.0, a3=1.0, a2=1.0),
    4: gn.constant_generators(a1=1.0, a3=-1.0, a2=1.0),
    5: gn.constant_generators(a1=0.0, a3=-1.0, a2=1.0),
    6: gn.constant_generators(a1=0.0, a3=1.0, a2=1.0),
}

_values = st.one_of(st.just(0.0), st.floats(-5, -1e-3), st.floats(1e-3, 5))


@settings(max_examples=1000, deadline=None, database=None)
@given(a1=_values, A=_values, a2=_values)
def _partition_draw(a1, A, a2):
    scale = max(abs(a1), abs(A), abs(a2))
    if scale == 0.0 or abs(a1 * A - a2 * a2) <= tl.ZERO_REL * scale ** 2:
        with pytest.raises(PreconditionError):
            tl.select_case(a1, A, a2)
        return
    signs = (a1 == 0, A == 0, math.copysign(1, a1) if a1 else 0.0, math.copysign(1, A) if A else 0.0)
    hits = [i + 1 for i, pat in enumerate(tl.CASE_PATTERNS) if pat(*signs)]
    assert len(hits) == 1
    assert tl.select_case(a1, A, a2)[0] == hits[0]


@pytest.mark.criterion(5)
def test_six_case_frames_and_partition():
    imm = sm.equator(mf.sphere(2), mf.sphere(3))
    rng = np.random.default_rng(5)
    for case, gen in CASE_GENERATORS.items():
        for _ in range(5):
            y = np.array([rng.uniform(0.3, 2.8), rng.uniform(-3, 3)])
            frame = tl.normal_frame_totg(gen, imm, y, rng.uniform(-1.4, 1.4, 2))
            assert frame.case == case
            assert frame.gram_residual <= 1e-10
            assert np.max(np.abs(np.abs(np.diag(frame.gram)) - 1.0)) <= 1e-10
    _partition_draw()


@pytest.mark.criterion(6)
def test_main_theorem_equators_and_control():
    start = time.perf_counter()
    for name in EQUATOR_SCENARIOS:
        sc = scenario(name)
        grid = sc.sample_grid()
        assert len(grid) == 30 and max(_v_norm(sc, y, v) for y, v in grid) <= 2.0
        verdict = so.theorem_check(sc.generators, sc.immersion, grid)
        assert verdict.hypotheses_met, name
        assert verdict.max_lm_component <= 1e-7, (name, verdict.max_lm_component)
    control = scenario("small-circle")
    worst = max(so.second_fundamental_form_LM(control.generators, control.immersion, y, v)
                .max_component for y, v in control.sample_grid())
    golden = json.loads((SCENARIOS / "golden" / "small-circle.json").read_text())
    (shape,) = [s for s in golden["suites"] if s["name"] == "shape"]
    (recorded,) = [c for c in shape["checks"] if c["name"] == "lm_max_component"]
    elapsed = time.perf_counter() - start
    assert worst >= 0.1 and recorded["max"] >= 0.1
    assert float(f"{worst:.4g}") == recorded["max"]
    assert elapsed < 60.0


@pytest.mark.criterion(7)
@pytest.mark.parametrize("name", TOTALLY_GEODESIC_SCENARIOS)
def test_closed_form_concordance(name):
    sc = scenario(name)
    for y, v in sc.sample_grid():
        for comp in so.closed_form_components(sc.generators, sc.immersion, y, v):
            assert comp.residual <= 1e-7
            assert comp.max_numeric <= 1e-7
            assert comp.max_closed_form <= 1e-7


@pytest.mark.criterion(8)
@pytest.mark.parametrize("rho", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("dim", [2, 3])
def test_sphere_curvature_kernel(dim, rho):
    man = mf.sphere(dim, rho)
    rng = np.random.default_rng(dim * 10 + int(4 * rho))
    for _ in range(50):
        p = [rng.uniform(0.1, math.pi - 0.1) for _ in range(dim - 1)] + [rng.uniform(-math.pi, math.pi)]
        assert mf.constant_curvature_residual(man, p, 1.0 / rho ** 2) <= 1e-9
        residuals = mf.curvature_symmetry_residuals(mf.riemann(man, p).components)
        assert max(residuals.values()) <= 1e-10


@pytest.mark.criterion(9)
@pytest.mark.parametrize("name", sorted(p.stem for p in SCENARIOS.glob("*.toml")))
def test_golden_reports_reproduce(tmp_path, name):
    out = tmp_path / "report.json"
    main(["run", "--config", str(SCENARIOS / f"{name}.toml"), "--suite", "all", "--quiet",
          "--json", str(out)])
    assert out.read_bytes() == (SCENARIOS / "golden" / f"{name}.json").read_bytes()
