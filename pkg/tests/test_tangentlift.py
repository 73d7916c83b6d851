import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tbgeom import gnatural as gn
from tbgeom import manifold as mf
from tbgeom import submanifold as sm
from tbgeom import tangentlift as tl
from tbgeom.errors import CasePatternError, PreconditionError

from .oracles import fd_jacobian

THETA0 = math.pi / 3


@pytest.fixture(scope="module")
def small_circle():
    return sm.small_circle(mf.circle(math.sin(THETA0)), mf.sphere(2), THETA0)


@pytest.fixture(scope="module")
def equator_s1():
    return sm.equator(mf.circle(), mf.sphere(2))


@pytest.fixture(scope="module")
def equator_s2():
    return sm.equator(mf.sphere(2), mf.sphere(3))


@pytest.fixture(scope="module")
def saddle_graph():
    return sm.graph(mf.saddle(), mf.euclidean(3))


def lifted_samples(imm, count, seed=0, v_max=2.0):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        y = np.array([rng.uniform(lo + 0.05, hi - 0.05) for lo, hi in imm.sample_box])
        out.append((y, rng.uniform(-v_max / math.sqrt(imm.m), v_max / math.sqrt(imm.m), imm.m)))
    return out


# -- lift map ------------------------------------------------------------------


def test_linear_subspace_lift_is_linear_inclusion():
    imm = sm.linear_subspace(mf.euclidean(2), mf.euclidean(3))
    lift = tl.lift_immersion(imm)
    assert np.allclose(lift([0.3, -0.2, 1.5, 0.7]), [0.3, -0.2, 0.0, 1.5, 0.7, 0.0])
    J = tl.lifted_jacobian(imm, [0.3, -0.2], [1.5, 0.7])
    expected = np.zeros((6, 4))
    expected[[0, 1, 3, 4], [0, 1, 2, 3]] = 1.0
    assert np.array_equal(J, expected)


def test_equator_lift(equator_s1):
    assert np.allclose(tl.lift_immersion(equator_s1)([0.4, 1.3]), [math.pi / 2, 0.4, 0.0, 1.3])


def test_lower_left_block_is_partial_derivative_of_frame(small_circle, saddle_graph):
    # latitude chart: B is constant, so the block vanishes although K does not
    J = tl.lifted_jacobian(small_circle, [0.5], [1.0])
    assert np.all(J[2:, :1] == 0.0)
    assert np.linalg.norm(tl.k_vectors(small_circle, [0.5], [1.0])[1]) > 0.1
    y, v = [0.3, -0.4], [1.2, 0.5]
    J = tl.lifted_jacobian(saddle_graph, y, v)
    _, _, dB = sm.immersion_derivatives(saddle_graph, y, 1)
    assert np.allclose(J[3:, :2], np.einsum("rab,b->ra", dB, v), atol=1e-15)
    assert np.allclose(J[5, :2], [v[1], v[0]], atol=1e-15)


@pytest.mark.parametrize("name", ["small_circle", "equator_s2", "saddle_graph"])
def test_frame_consistency_100_points(name, request):
    imm = request.getfixturevalue(name)
    for y, v in lifted_samples(imm, 100, seed=1):
        assert tl.frame_consistency_residual(imm, y, v) <= 1e-12
        assert np.linalg.matrix_rank(tl.lifted_jacobian(imm, y, v)) == 2 * imm.m


def test_lifted_jacobian_against_finite_differences(small_circle, saddle_graph):
    for imm in (small_circle, saddle_graph):
        lift = tl.lift_immersion(imm)
        for y, v in lifted_samples(imm, 5, seed=2):
            w = np.concatenate([y, v])
            assert np.allclose(tl.lifted_jacobian(imm, y, v), fd_jacobian(lift, w), atol=1e-8)


# -- lifts and the connection map ------------------------------------------------


def test_lifts_on_euclidean_base():
    Xh, Xv = tl.lift_vectors_TN(mf.euclidean(2), [0.1, 0.2], [1.0, 3.0], [0.5, -1.0])
    assert np.array_equal(Xh, [0.5, -1.0, 0.0, 0.0])
    assert np.array_equal(Xv, [0.0, 0.0, 0.5, -1.0])
    W = np.array([1.0, 2.0, 3.0, 4.0])
    assert np.array_equal(tl.connection_map(mf.euclidean(2), [0.0, 0.0], [1.0, 1.0], W), [3.0, 4.0])


def test_horizontal_lift_at_zero_vector():
    Xh, _ = tl.lift_vectors_TN(mf.sphere(2), [1.0, 0.3], [0.0, 0.0], [0.2, 0.7])
    assert np.array_equal(Xh, [0.2, 0.7, 0.0, 0.0])


def test_sphere_horizontal_lift_example():
    s2 = mf.sphere(2)
    x, u = [math.pi / 4, 0.0], [0.0, 1.0]
    Xh, Xv = tl.lift_vectors_TN(s2, x, u, [1.0, 0.0])
    assert Xh[3] == pytest.approx(-1.0, abs=1e-15)
    assert Xh[2] == pytest.approx(0.0, abs=1e-15)
    assert np.allclose(tl.connection_map(s2, x, u, Xh), 0.0, atol=1e-15)
    assert np.allclose(tl.connection_map(s2, x, u, Xv), [1.0, 0.0], atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(th=st.floats(0.3, 2.8), ph=st.floats(-3, 3),
       u=st.lists(st.floats(-2, 2), min_size=2, max_size=2),
       X=st.lists(st.floats(-2, 2), min_size=2, max_size=2))
def test_lift_projection_connection_identities(th, ph, u, X):
    s2 = mf.sphere(2)
    Xh, Xv = tl.lift_vectors_TN(s2, [th, ph], u, X)
    assert np.array_equal(tl.projection(s2, Xh), np.asarray(X, float))
    assert np.array_equal(tl.projection(s2, Xv), [0.0, 0.0])
    assert np.max(np.abs(tl.connection_map(s2, [th, ph], u, Xh))) <= 1e-12
    assert np.allclose(tl.connection_map(s2, [th, ph], u, Xv), X, atol=1e-15)


def test_k_vectors(small_circle, equator_s2):
    Ka, K = tl.k_vectors(small_circle, [0.9], [1.0])
    g = mf.metric_at(mf.sphere(2), [THETA0, 0.9])
    assert math.sqrt(Ka[0] @ g @ Ka[0]) == pytest.approx(math.sqrt(3) / 4, abs=1e-14)
    assert np.allclose(K, Ka[0])
    Ka0, K0 = tl.k_vectors(small_circle, [0.9], [0.0])
    assert np.all(Ka0 == 0) and np.all(K0 == 0)
    Ka, K = tl.k_vectors(equator_s2, [1.0, 0.4], [0.3, -0.8])
    assert np.max(np.abs(Ka)) <= 1e-15
    # K_a is g-normal to M
    _, B = sm.immersion_derivatives(small_circle, [0.9], 0)
    Ka, _ = tl.k_vectors(small_circle, [0.9], [1.7])
    assert abs(Ka[0] @ g @ B[:, 0]) <= 1e-15


# -- the three lemmas ------------------------------------------------------------


@pytest.mark.parametrize("name", ["small_circle", "equator_s1", "equator_s2", "saddle_graph"])
def test_lemmas_at_50_points(name, request):
    imm = request.getfixturevalue(name)
    for y, v in lifted_samples(imm, 50, seed=3):
        assert tl.verify_lift_relation(imm, y, v) <= 1e-9
        assert tl.verify_projection_lemma(imm, y, v) <= 1e-12
        assert tl.verify_connection_lemma(imm, y, v) <= 1e-9


def test_lemmas_exact_for_totally_geodesic_or_zero_fibre(equator_s2, small_circle):
    for y, v in lifted_samples(equator_s2, 10, seed=4):
        assert tl.verify_lift_relation(equator_s2, y, v) <= 1e-12
        assert tl.verify_connection_lemma(equator_s2, y, v) <= 1e-12
    assert tl.verify_lift_relation(small_circle, [0.3], [0.0]) <= 1e-12


# -- LM normals and the constraint system ---------------------------------------


GENERATORS = {
    "sasaki": gn.sasaki(),
    "cheeger-gromoll": gn.cheeger_gromoll(),
    "random": gn.random_generators(11),
    "constant": gn.constant_generators(a1=2.0, a2=0.5, a3=1.0),
}


@pytest.mark.parametrize("gen_name", sorted(GENERATORS))
@pytest.mark.parametrize("name", ["small_circle", "equator_s2", "saddle_graph"])
def test_normal_constraints(name, gen_name, request):
    imm = request.getfixturevalue(name)
    gen = GENERATORS[gen_name]
    for y, v in lifted_samples(imm, 20, seed=5, v_max=1.5):
        bundle = tl.normal_space_LM(gen, imm, y, v)
        assert bundle.normals.shape == (2 * imm.n, 2 * (imm.n - imm.m))
        assert bundle.orthogonality_residual() <= 1e-9
        assert np.allclose(np.abs(np.diag(bundle.gram)), 1.0, atol=1e-12)
        res = tl.verify_normal_constraints(gen, imm, y, v, bundle)
        assert res.max_contracted() <= 1e-8
        if res.per_index_applies:
            assert max(res.per_index_H, res.per_index_V) <= 1e-8


def test_per_index_forms_need_constant_generators(saddle_graph):
    worst = max(tl.verify_normal_constraints(gn.cheeger_gromoll(), saddle_graph, y, v).per_index_H
                for y, v in lifted_samples(saddle_graph, 10, seed=6))
    assert worst > 1e-3


def test_small_circle_has_tangential_normal_part(small_circle):
    bundle = tl.normal_space_LM(gn.sasaki(), small_circle, [0.4], [1.0])
    g = mf.metric_at(mf.sphere(2), bundle.point.x)
    norms = [math.sqrt(h @ g @ h) for h in bundle.H_top.T]
    assert max(norms) > 1e-2


@pytest.mark.parametrize("gen_name", sorted(GENERATORS))
def test_totally_geodesic_normals_have_no_tangential_part(equator_s2, gen_name):
    gen = GENERATORS[gen_name]
    for y, v in lifted_samples(equator_s2, 20, seed=7, v_max=1.5):
        bundle = tl.normal_space_LM(gen, equator_s2, y, v)
        g = mf.metric_at(mf.sphere(3), bundle.point.x)
        assert tl.tangential_normal_parts(bundle, g) <= 1e-8


def test_linear_subspace_sasaki_normals_are_coordinate_complement():
    imm = sm.linear_subspace(mf.euclidean(2), mf.euclidean(3))
    bundle = tl.normal_space_LM(gn.sasaki(), imm, [0.1, 0.5], [0.4, -0.3])
    span = bundle.normals
    assert np.allclose(np.abs(span), np.eye(6)[:, [2, 5]], atol=1e-14) or \
        np.allclose(np.abs(span), np.eye(6)[:, [5, 2]], atol=1e-14)


def test_g_orthogonal_complement_indefinite():
    G = np.diag([1.0, -1.0, 1.0, -1.0])
    T = np.array([[1.0], [0.0], [0.0], [0.0]])
    N = tl.g_orthogonal_complement(G, T)
    assert np.allclose(N.T @ G @ T, 0.0)
    assert sorted(np.round(np.diag(N.T @ G @ N), 12)) == [-1.0, -1.0, 1.0]


# -- six cases -------------------------------------------------------------------


CASE_GENERATORS = {
    1: gn.sasaki(),
    2: gn.constant_generators(a2=1.0),
    3: gn.constant_generators(a1=-1.0, a3=1.0, a2=1.0),
    4: gn.constant_generators(a1=1.0, a3=-1.0, a2=1.0),
    5: gn.constant_generators(a1=0.0, a3=-1.0, a2=1.0),
    6: gn.constant_generators(a1=0.0, a3=1.0, a2=1.0),
}


@pytest.mark.parametrize("case", sorted(CASE_GENERATORS))
@pytest.mark.parametrize("name", ["equator_s1", "equator_s2"])
def test_six_case_frames(case, name, request):
    imm = request.getfixturevalue(name)
    gen = CASE_GENERATORS[case]
    for y, v in lifted_samples(imm, 10, seed=8):
        frame = tl.normal_frame_totg(gen, imm, y, v)
        assert frame.case == case
        assert frame.gram_residual <= 1e-10
        assert frame.orthogonality_residual <= 1e-9
        # unit eta gives unit-norm S and T
        assert np.allclose(np.abs(np.diag(frame.gram)), 1.0, atol=1e-10)


def test_case_one_sasaki_coefficients_collapse():
    case, eps, delta = tl.select_case(1.0, 1.0, 0.0)
    assert (case, eps, delta) == (1, 1.0, 1.0)
    assert tl.case_coefficients(case, eps, delta, 1.0, 1.0, 0.0) == (1.0, 0.0, 0.0, 1.0)


def test_case_two_and_four_examples():
    case, eps, delta = tl.select_case(0.0, 0.0, 1.0)
    assert (case, eps) == (2, 1.0)
    assert tl.case_coefficients(case, eps, delta, 0.0, 0.0, 1.0) == (0.5, -1.0, 0.5, 1.0)
    case, eps, delta = tl.select_case(1.0, 0.0, 1.0)
    assert (case, eps) == (4, 1.0)
    assert tl.case_coefficients(case, eps, delta, 1.0, 0.0, 1.0) == (1.0, -1.0, 0.0, 1.0)


def _reference_case(a1, A):
    if a1 != 0 and A != 0:
        return 1
    if a1 == 0 and A == 0:
        return 2
    if A == 0:
        return 3 if a1 < 0 else 4
    return 5 if A < 0 else 6


values = st.one_of(st.just(0.0), st.floats(-5, -1e-3), st.floats(1e-3, 5))


@settings(max_examples=1000, deadline=None)
@given(a1=values, A=values, a2=values)
def test_case_patterns_partition(a1, A, a2):
    scale = max(abs(a1), abs(A), abs(a2))
    if scale == 0.0 or abs(a1 * A - a2 * a2) <= tl.ZERO_REL * scale ** 2:
        with pytest.raises(PreconditionError):
            tl.select_case(a1, A, a2)
        return
    hits = [i + 1 for i, pat in enumerate(tl.CASE_PATTERNS)
            if pat(a1 == 0, A == 0, math.copysign(1, a1) if a1 else 0.0,
                   math.copysign(1, A) if A else 0.0)]
    assert hits == [_reference_case(a1, A)]
    case, eps, delta = tl.select_case(a1, A, a2)
    assert case == hits[0]
    ss, st_, tt = tl.expected_gram(case, eps, delta)
    assert st_ == 0.0 and abs(ss) == 1.0 and abs(tt) == 1.0


def test_dead_zone_rejected():
    with pytest.raises(CasePatternError):
        tl.select_case(1.0, 5e-10, 0.3)
    tl.select_case(1.0, 5e-11, 1.0)  # below threshold: treated as zero


def test_vanishing_a_is_a_precondition_failure():
    with pytest.raises(PreconditionError):
        tl.select_case(1.0, 1.0, 1.0)
    with pytest.raises(PreconditionError):
        tl.select_case(0.0, 2.0, 0.0)


def test_frame_requires_totally_geodesic(small_circle):
    with pytest.raises(PreconditionError):
        tl.normal_frame_totg(gn.sasaki(), small_circle, [0.2], [1.0])
