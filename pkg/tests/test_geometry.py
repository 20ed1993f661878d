import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from confgeo import dsl
from confgeo.errors import DegenerateMetric, NegativeGram
from confgeo.geometry import area_A, geometry_at, inner, norm2, volume_V
from confgeo.suites import corpus

# random metric strategy: positive diagonal plus small off-diagonal terms
coef = st.floats(-0.3, 0.3)


@st.composite
def random_metrics(draw):
    c = [draw(coef) for _ in range(9)]
    return dsl.metric_from_mapping({
        "g11": f"exp({c[0]!r}*x2 + {c[1]!r}*x3^2)",
        "g22": f"1 + 0.5*sin({c[2]!r}*x1 + {c[3]!r}*x3)^2",
        "g33": f"2 + {c[4]!r}*x1*x2",
        "g12": f"{c[5]!r}*cos(x3)",
        "g13": f"{c[6]!r}*x2",
        "g23": f"{c[7]!r}*x1 + {c[8]!r}*x3^2",
    })


points = st.tuples(*[st.floats(-0.7, 0.7)] * 3).map(np.array)


def test_flat_geometry_vanishes(flat):
    geom = geometry_at(flat, (0.3, -1.0, 2.0))
    for field in (geom.Gamma, geom.riemann, geom.schouten):
        assert np.all(field == 0)
    assert geom.sqrt_det_g == 1


def test_sphere_curvature(sphere):
    geom = geometry_at(sphere, (0, 0, 0))
    np.testing.assert_allclose(geom.ricci, 2 * geom.g, atol=1e-12)
    assert geom.scalar_R == pytest.approx(6.0)
    np.testing.assert_allclose(geom.schouten, geom.g / 2, atol=1e-12)


def test_sphere_curvature_away_from_origin(sphere):
    # constant curvature holds at every chart point
    geom = geometry_at(sphere, (0.4, -0.3, 0.9))
    np.testing.assert_allclose(geom.ricci, 2 * geom.g, rtol=1e-11, atol=1e-11)
    assert geom.scalar_R == pytest.approx(6.0, rel=1e-11)


def test_diagonal_christoffels():
    m = dsl.builtin_metric("diagonal", {"f1": "1", "f2": "x1^2", "f3": "1"})
    G = geometry_at(m, (2, 0, 0)).Gamma
    expected = np.zeros((3, 3, 3))
    expected[1, 0, 1] = expected[1, 1, 0] = 0.5
    expected[0, 1, 1] = -2.0
    np.testing.assert_allclose(G, expected, atol=1e-14)


def test_degenerate_metric():
    m = dsl.builtin_metric("diagonal", {"f1": "1", "f2": "x1^2", "f3": "1"})
    with pytest.raises(DegenerateMetric):
        geometry_at(m, (0, 0, 0))


def test_inner_products(flat, sphere):
    e = geometry_at(flat, (0, 0, 0))
    assert inner(e, [1, 0, 0], [0, 1, 0]) == 0
    assert norm2(e, [1, 2, 2]) == 9
    assert norm2(geometry_at(sphere, (0, 0, 0)), [1, 0, 0]) == pytest.approx(4)


def test_area_examples(flat):
    e = geometry_at(flat, (0, 0, 0))
    assert area_A(e, [1, 0, 0], [0, 1, 0]) == 1
    assert area_A(e, [1, 0, 0], [2, 0, 0]) == 0
    t = 0.8
    assert area_A(e, [-math.sin(t), math.cos(t), 1], [-math.cos(t), -math.sin(t), 0]) == pytest.approx(math.sqrt(2))


def test_negative_gram_in_lorentzian_signature():
    m = dsl.metric_from_mapping({"g11": "-1", "g22": "1", "g33": "1", "signature": "-++"})
    geom = geometry_at(m, (0, 0, 0))
    with pytest.raises(NegativeGram):
        area_A(geom, [1, 1, 0], [1, 0, 0])


def test_volume_examples(flat, generic_metric):
    e = geometry_at(flat, (0, 0, 0))
    assert volume_V(e, [1, 0, 0], [0, 1, 0], [0, 0, 1]) == 1
    assert volume_V(geometry_at(generic_metric, (0.1, 0.2, 0.3)), [1, 0, 0], [1, 0, 0], [0, 0, 1]) == 0
    t = 1.1
    s, c = math.sin(t), math.cos(t)
    assert volume_V(e, [-s, c, 1], [-c, -s, 0], [s, -c, 0]) == pytest.approx(1.0)


@given(random_metrics(), points)
def test_metric_inverse_and_symmetries(metric, p):
    geom = geometry_at(metric, p)
    np.testing.assert_allclose(geom.g @ geom.g_inv, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(geom.Gamma, geom.Gamma.transpose(0, 2, 1), atol=1e-14)
    np.testing.assert_allclose(geom.ricci, geom.ricci.T, atol=1e-12)
    # three-dimensional Schouten specialization
    np.testing.assert_allclose(geom.schouten, geom.ricci - geom.scalar_R / 4 * geom.g, atol=1e-12)


@given(random_metrics(), points)
def test_s_antisymmetrization_is_riemann(metric, p):
    geom = geometry_at(metric, p)
    S, R = geom.S, geom.riemann
    # S^k_ijl - S^k_ilj = R^k_i l j in the convention of PointGeometry.riemann
    np.testing.assert_allclose(S - S.transpose(0, 1, 3, 2), R.transpose(0, 1, 3, 2), atol=1e-10)


def _gamma(metric, p):
    return geometry_at(metric, p).Gamma


@given(random_metrics(), points)
def test_ricci_against_finite_differences(metric, p):
    # independent route: central differences of Gamma, then the trace formula
    h = 1e-5
    G = _gamma(metric, p)
    dG = np.empty((3, 3, 3, 3))  # [l, k, i, j]
    for l in range(3):
        e = np.zeros(3)
        e[l] = h
        dG[l] = (_gamma(metric, p + e) - _gamma(metric, p - e)) / (2 * h)
    ric = (
        np.einsum("kkjl->jl", dG)
        - np.einsum("jkkl->jl", dG)
        + np.einsum("kkp,pjl->jl", G, G)
        - np.einsum("kjp,pkl->jl", G, G)
    )
    got = geometry_at(metric, p).ricci
    assert np.max(np.abs(got - ric)) <= 1e-6 * max(1.0, np.max(np.abs(got)))


@given(random_metrics(), points)
def test_volume_gram_identity(metric, p):
    rng = np.random.default_rng(abs(hash(tuple(p))) % 2 ** 32)
    u, a, b = rng.normal(size=(3, 3))
    geom = geometry_at(metric, p)
    gram = np.linalg.det(np.array([[inner(geom, v, w) for w in (u, a, b)] for v in (u, a, b)]))
    assert volume_V(geom, u, a, b) ** 2 == pytest.approx(gram, rel=1e-10)


@pytest.mark.parametrize("metric", corpus(), ids=lambda m: m.name)
def test_schouten_conformal_law(metric):
    # gbar = exp(2 f) g; Hess and |df|^2 in g
    f = "0.3*sin(x1) + 0.2*x2*x3 - 0.1*x3^2"
    bar = dsl.metric_from_mapping({
        key: f"exp(2*({f}))*({dsl.serialize(metric.component(i, j))})"
        for key, (i, j) in zip(dsl.COMPONENT_KEYS, [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)])
    })
    p = np.array([0.2, -0.4, 0.3])
    geom = geometry_at(metric, p)
    fj = dsl.eval_jet(f, p, 2)
    df = np.array([fj.partial(i) for i in range(3)])
    ddf = np.array([[fj.partial(i, j) for j in range(3)] for i in range(3)])
    hess = ddf - np.einsum("kij,k->ij", geom.Gamma, df)
    predicted = geom.schouten - hess + np.outer(df, df) - 0.5 * (df @ geom.g_inv @ df) * geom.g
    got = geometry_at(bar, p).schouten
    assert np.max(np.abs(got - predicted)) <= 1e-8 * max(1.0, np.max(np.abs(got)))
