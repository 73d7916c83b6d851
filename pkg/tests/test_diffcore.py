import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tbgeom import diffcore as dc
from tbgeom.diffcore import Jet, SmoothMap, jacobian, jet_eval, partials, taylor_arrays
from tbgeom.errors import DegenerateImmersionError, DomainError

from .oracles import fd_hessian, fd_jacobian


def scalar_map(fn, n=1, name="f"):
    return SmoothMap(n, 1, lambda z: [fn(*z)], name=name)


def test_square_second_order():
    (j,) = jet_eval(scalar_map(lambda x: x * x), [3.0], 2)
    assert j.value == 9.0
    assert j.d1[0] == 6.0
    assert j.d2[0, 0] == 2.0


def test_sin_theta_at_equator():
    (j,) = jet_eval(scalar_map(lambda th, ph: dc.sin(th), 2), [math.pi / 2, 0.0], 1)
    assert j.value == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(j.d1, 0.0, atol=1e-15)


def test_reciprocal_third_order_against_analytic_and_fd():
    f = lambda x: 1.0 / (1.0 + x)
    (j,) = jet_eval(scalar_map(f), [1.0], 3)
    assert j.value == pytest.approx(0.5, abs=1e-15)
    assert j.d1[0] == pytest.approx(-0.25, abs=1e-15)
    assert j.d2[0, 0] == pytest.approx(0.25, abs=1e-15)
    assert j.d3[0, 0, 0] == pytest.approx(-0.375, abs=1e-15)
    h = 1e-5
    fd1 = (f(1 + h) - f(1 - h)) / (2 * h)
    fd2 = (f(1 + h) - 2 * f(1) + f(1 - h)) / h ** 2
    assert j.d1[0] == pytest.approx(fd1, rel=1e-8)
    assert j.d2[0, 0] == pytest.approx(fd2, rel=1e-4)


def test_order_out_of_range_and_dimension_mismatch():
    m = scalar_map(lambda x: x)
    with pytest.raises(ValueError):
        jet_eval(m, [1.0], 4)
    with pytest.raises(ValueError):
        jet_eval(m, [1.0, 2.0], 1)


def test_domain_violation_reports_point():
    m = scalar_map(lambda x: dc.log(x), name="log")
    with pytest.raises(DomainError) as info:
        jet_eval(m, [-1.0], 1)
    assert info.value.point is not None and info.value.point[0] == -1.0


def test_identity_jacobian():
    ident = SmoothMap(3, 3, lambda z: list(z))
    assert np.array_equal(jacobian(ident, [0.3, -1.0, 2.0]), np.eye(3))


def test_equator_jacobian_column():
    eq = SmoothMap(1, 2, lambda y: [math.pi / 2, y[0]])
    assert np.array_equal(jacobian(eq, [0.7]), [[0.0], [1.0]])


def test_graph_jacobian_third_row():
    gr = SmoothMap(2, 3, lambda y: [y[0], y[1], y[0] * y[1]])
    J = jacobian(gr, [1.0, 2.0], rank=2)
    assert np.array_equal(J[2], [2.0, 1.0])


def test_rank_deficiency_raises():
    flat = SmoothMap(2, 3, lambda y: [y[0], y[0], y[0] * 0.0])
    with pytest.raises(DegenerateImmersionError):
        jacobian(flat, [1.0, 2.0], rank=2)


def test_point_evaluation_equals_order_zero():
    m = SmoothMap(2, 2, lambda z: [dc.exp(z[0]) * dc.cos(z[1]), z[0] / (1 + z[1] * z[1])])
    p = [0.4, -0.8]
    vals = taylor_arrays(jet_eval(m, p, 0))[0]
    assert np.array_equal(vals, m(p))


def test_partial_arrays_symmetric():
    m = scalar_map(lambda x, y, z: dc.sin(x * y) * dc.exp(z) + x ** 3 * y / (2 + z), 3)
    (j,) = jet_eval(m, [0.3, 1.1, -0.4], 3)
    assert np.allclose(j.d2, j.d2.T, atol=0)
    for perm in [(1, 0, 2), (0, 2, 1), (2, 1, 0), (1, 2, 0), (2, 0, 1)]:
        assert np.allclose(j.d3, j.d3.transpose(perm), atol=1e-14)


def test_pack_unpack_roundtrip():
    a = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 5.0], [3.0, 5.0, 6.0]])
    assert np.array_equal(np.asarray(dc.unpack_sym(dc.pack_sym(a), 3), float), a)


def test_jet_matrix_inverse_matches_numpy_and_differentiates():
    def mat(z):
        x, y = z
        return [[2.0 + x, y], [y, 3.0 + x * y]]

    def inv_entries(z):
        return list(dc.inv(np.array(mat(z), dtype=object)).reshape(-1))

    m = SmoothMap(2, 4, inv_entries)
    p = np.array([0.2, 0.5])
    assert np.allclose(m(p), np.linalg.inv(np.array(mat(p))).reshape(-1), atol=1e-15)
    J = jacobian(m, p)
    assert np.allclose(J, fd_jacobian(m, p), atol=1e-8)


def test_partials_map_is_differentiable():
    f = SmoothMap(2, 1, lambda z: [dc.sin(z[0]) * z[1] ** 2])
    df = partials(f)
    p = np.array([0.7, -1.3])
    assert np.allclose(df(p), [math.cos(0.7) * 1.69, 2 * math.sin(0.7) * -1.3], atol=1e-15)
    assert np.allclose(jacobian(df, p), fd_jacobian(df, p), atol=1e-8)
    assert df.max_order == 2


_elementary = [
    (dc.sin, math.sin, (-3, 3)), (dc.cos, math.cos, (-3, 3)), (dc.tan, math.tan, (-1.2, 1.2)),
    (dc.exp, math.exp, (-2, 2)), (dc.log, math.log, (0.1, 4)), (dc.sqrt, math.sqrt, (0.1, 4)),
    (dc.sinh, math.sinh, (-2, 2)), (dc.cosh, math.cosh, (-2, 2)), (dc.tanh, math.tanh, (-2, 2)),
]


@pytest.mark.parametrize("jet_fn,float_fn,interval", _elementary)
def test_elementary_functions_against_finite_differences(jet_fn, float_fn, interval):
    rng = np.random.default_rng(0)
    m = scalar_map(jet_fn)
    for x in rng.uniform(*interval, size=10):
        (j,) = jet_eval(m, [x], 3)
        assert j.value == pytest.approx(float_fn(x), rel=1e-14)
        h = 1e-4
        d1 = (float_fn(x + h) - float_fn(x - h)) / (2 * h)
        d2 = (float_fn(x + h) - 2 * float_fn(x) + float_fn(x - h)) / h ** 2
        (jp,) = jet_eval(m, [x + h], 2)
        (jm,) = jet_eval(m, [x - h], 2)
        d3 = (jp.d2[0, 0] - jm.d2[0, 0]) / (2 * h)
        scale = max(1.0, abs(j.d1[0]), abs(j.d2[0, 0]), abs(j.d3[0, 0, 0]))
        assert abs(j.d1[0] - d1) <= 1e-6 * scale
        assert abs(j.d2[0, 0] - d2) <= 1e-5 * scale
        assert abs(j.d3[0, 0, 0] - d3) <= 1e-6 * scale


coeffs = st.lists(st.floats(-2, 2, allow_nan=False), min_size=1, max_size=4)


def _poly(cs, x):
    acc = 0.0
    for c in reversed(cs):
        acc = acc * x + c
    return acc


@settings(max_examples=60, deadline=None)
@given(c1=coeffs, c2=coeffs, c3=coeffs, x=st.floats(-1.5, 1.5), y=st.floats(-1.5, 1.5))
def test_chain_rule_composition(c1, c2, c3, x, y):
    """Jets of g(f(x, y)) equal the Taylor composition of jets of g and f."""
    inner = SmoothMap(2, 2, lambda z: [_poly(c1, z[0]) * z[1], _poly(c2, z[1]) + z[0]])
    outer = SmoothMap(2, 1, lambda w: [_poly(c3, w[0]) * w[1] + w[0] * w[0]])
    direct = jet_eval(outer.compose(inner), [x, y], 3)
    f_jets = jet_eval(inner, [x, y], 3)
    T = taylor_arrays(jet_eval(outer, [j.value for j in f_jets], 3))
    composed = dc.compose_taylor(T, f_jets)
    for a, b in zip(direct, composed):
        for da, db in zip([a.value] + a.derivatives(), [b.value] + b.derivatives()):
            scale = max(1.0, float(np.max(np.abs(da))))
            assert np.max(np.abs(np.asarray(da) - np.asarray(db))) <= 1e-11 * scale


@settings(max_examples=60, deadline=None)
@given(c1=coeffs, c2=coeffs, x=st.floats(-1.5, 1.5))
def test_leibniz_rule_on_polynomials(c1, c2, x):
    """(pq)' = p'q + pq' and its higher analogues, against hand-differentiated polynomials."""
    p = np.polynomial.Polynomial(c1)
    q = np.polynomial.Polynomial(c2)
    (j,) = jet_eval(scalar_map(lambda t: _poly(c1, t) * _poly(c2, t)), [x], 3)
    prod = p * q
    for k, got in enumerate([j.value, j.d1[0], j.d2[0, 0], j.d3[0, 0, 0]]):
        expected = prod.deriv(k)(x) if k else prod(x)
        assert got == pytest.approx(expected, rel=1e-12, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(x=st.floats(-1.0, 1.0), y=st.floats(-1.0, 1.0))
def test_truncation_consistency(x, y):
    m = SmoothMap(2, 1, lambda z: [dc.exp(z[0] * z[1]) / (2.0 + dc.sin(z[0]))])
    (j3,) = jet_eval(m, [x, y], 3)
    (j2,) = jet_eval(m, [x, y], 2)
    t = j3.truncate(2)
    assert t.value == j2.value
    assert np.allclose(t.d1, j2.d1, rtol=0, atol=1e-15)
    assert np.allclose(t.d2, j2.d2, rtol=0, atol=1e-15)


def test_fd_concordance_multivariate():
    m = SmoothMap(3, 2, lambda z: [dc.sin(z[0]) * dc.cosh(z[1]) + z[2] ** 3,
                                   dc.sqrt(2.0 + z[0] * z[0]) * dc.exp(-z[2]) / (1.0 + z[1] ** 2)])
    rng = np.random.default_rng(1)
    for _ in range(20):
        p = rng.uniform(-1, 1, 3)
        arr = taylor_arrays(jet_eval(m, p, 2))
        assert np.allclose(arr[1], fd_jacobian(m, p), rtol=1e-6, atol=1e-8)
        assert np.allclose(arr[2], fd_hessian(m, p), rtol=1e-6, atol=1e-6)


def test_jet_division_by_float_and_power():
    x = Jet.variable(2.0, 0, 1, 3)
    y = (x ** 3) / 4.0
    assert y.value == 2.0
    assert y.d1[0] == 3.0
    assert y.d3[0, 0, 0] == 1.5
    z = x ** 0.5
    assert z.d1[0] == pytest.approx(0.5 / math.sqrt(2.0))
