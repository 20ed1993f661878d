import math

import numpy as np
import pytest
from scipy import integrate as quad

from confgeo import dsl
from confgeo.conformal import rescale_trajectory
from confgeo.errors import ChartSingularity, ConformalDegenerate, DegenerateCurve
from confgeo.frenet import (
    conformal_torsion_omega,
    curvature,
    distance_to_2pi_multiple,
    flat_invariants,
    flat_L_prime,
    flat_L_tilde,
    frenet_at,
    frenet_torsion,
    invariants,
    lagrangian_L,
    lagrangian_L_prime,
    lagrangian_L_prime_b_gradient,
    lambda_potential,
    torsion,
    total_twist,
)
from confgeo.geodesics import CurveState, IntegratorConfig, conformal_rhs, curve_trajectory, integrate
from confgeo.geometry import coordinate_jets, covariant_jets, geometry_at, inner
from confgeo.suites import corpus
from confgeo.variational import random_admissible_jet

TORUS = ["(2 + cos(3*t))*cos(2*t)", "(2 + cos(3*t))*sin(2*t)", "sin(3*t)"]


def helix_jets(t):
    s, c = math.sin(t), math.cos(t)
    return np.array([-s, c, 1.0]), np.array([-c, -s, 0.0]), np.array([s, -c, 0.0])


def random_b(rng, geom, u, a):
    return conformal_rhs(geom, u, a) + rng.normal(size=3)


def test_circle_invariants(flat):
    e = geometry_at(flat, (1, 0, 0))
    fd = frenet_at(e, [0, 1, 0], [-1, 0, 0], [0, -1, 0])
    assert (fd.kappa, fd.tau, fd.L) == (1, 0, 0)


def test_helix_invariants(flat):
    e = geometry_at(flat, (0, 0, 0))
    fd = frenet_at(e, *helix_jets(0.3))
    assert fd.ell == pytest.approx(math.sqrt(2))
    assert fd.A == pytest.approx(math.sqrt(2))
    assert fd.V == pytest.approx(1)
    assert fd.kappa == pytest.approx(0.5)
    assert fd.tau == pytest.approx(0.5)
    assert fd.L == pytest.approx(math.sqrt(2) / 2)
    assert lagrangian_L(e, *helix_jets(0.3)) == pytest.approx(math.sqrt(2) / 2)


def test_degenerate_curve(flat):
    e = geometry_at(flat, (0, 0, 0))
    with pytest.raises(DegenerateCurve):
        frenet_at(e, [1, 0, 0], [2, 0, 0], [0, 0, 1])
    with pytest.raises(DegenerateCurve):
        lagrangian_L(e, [1, 0, 0], [0, 0, 0], [0, 1, 0])


@pytest.mark.parametrize("metric", corpus(), ids=lambda m: m.name)
def test_frame_and_torsion_identities(metric, rng):
    for _ in range(20):
        x, u, a = random_admissible_jet(metric, rng, unit_speed=False)
        geom = geometry_at(metric, x)
        b = random_b(rng, geom, u, a)
        fd = frenet_at(geom, u, a, b)
        F = np.array([fd.T, fd.N, fd.B])
        gram = F @ geom.g @ F.T
        np.testing.assert_allclose(gram, np.eye(3), atol=1e-10)
        assert fd.tau == pytest.approx(fd.V / fd.A ** 2, rel=1e-10)
        assert fd.L == pytest.approx(fd.ell * fd.V / fd.A ** 2, rel=1e-12)
        # moving-frame route to the torsion
        assert frenet_torsion(metric, x, u, a, b) == pytest.approx(torsion(geom, u, a, b), rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("metric", corpus(), ids=lambda m: m.name)
def test_parametrization_independence(metric, rng):
    # L(h' u, h'^2 a + h'' u, h'^3 b + 3 h' h'' a + h''' u) = h' L(u, a, b)
    for _ in range(10):
        x, u, a = random_admissible_jet(metric, rng, unit_speed=False)
        geom = geometry_at(metric, x)
        b = random_b(rng, geom, u, a)
        h1, h2, h3 = rng.uniform(0.5, 2.0), rng.normal(), rng.normal()
        L = lagrangian_L(geom, u, a, b)
        Lh = lagrangian_L(geom, h1 * u, h1 ** 2 * a + h2 * u, h1 ** 3 * b + 3 * h1 * h2 * a + h3 * u)
        assert abs(Lh - h1 * L) <= 1e-8 * max(1.0, abs(L))
        k = curvature(geom, u, a)
        assert curvature(geom, h1 * u, h1 ** 2 * a + h2 * u) == pytest.approx(k, rel=1e-10)


# order-reduced Lagrangian ----------------------------------------------------

def test_flat_L_prime_closed_form(flat, rng):
    for _ in range(50):
        x, u, a = random_admissible_jet(flat, rng, unit_speed=False)
        b = rng.normal(size=3)
        got = lagrangian_L_prime(flat, x, u, a, b)
        assert got == pytest.approx(flat_L_prime(u, a), abs=1e-10)


@pytest.mark.parametrize("metric_name", ["flat", "generic_metric"])
def test_L_prime_against_finite_difference_of_lambda(metric_name, request):
    metric = request.getfixturevalue(metric_name)
    helix = ["cos(t)", "sin(t)", "0.7*t"]
    t0, h = 0.4, 1e-4
    traj = curve_trajectory(metric, helix, np.array([t0 - 2 * h, t0 - h, t0, t0 + h, t0 + 2 * h]))
    lam = [lambda_potential(geometry_at(metric, traj.x[i]), traj.u[i], traj.a[i]) for i in range(5)]
    dlam = (lam[0] - 8 * lam[1] + 8 * lam[3] - lam[4]) / (12 * h)
    geom = geometry_at(metric, traj.x[2])
    expected = lagrangian_L(geom, traj.u[2], traj.a[2], traj.b[2]) - dlam
    assert lagrangian_L_prime(metric, traj.x[2], traj.u[2], traj.a[2], traj.b[2]) == pytest.approx(expected, abs=1e-7)


@pytest.mark.parametrize("metric", corpus(), ids=lambda m: m.name)
def test_L_prime_does_not_depend_on_b(metric, rng):
    for _ in range(5):
        x, u, a = random_admissible_jet(metric, rng)
        b = random_b(rng, geometry_at(metric, x), u, a)
        assert np.max(np.abs(lagrangian_L_prime_b_gradient(metric, x, u, a, b))) <= 1e-9


def test_chart_singularity(flat):
    e = geometry_at(flat, (0, 0, 0))
    with pytest.raises(ChartSingularity):
        lambda_potential(e, np.array([0.0, 1.0, 0.0]), np.array([1.0, 2.0, 0.0]))


def test_flat_L_tilde_examples():
    assert flat_L_tilde([1, 1, 1], [0, 0, 0]) == 0
    # direct evaluation of the symmetrized expression: -390 / (650 sqrt 14)
    assert flat_L_tilde([1, 2, 3], [1, 0, 0]) == pytest.approx(-0.16035674514745463, rel=1e-14)
    assert flat_L_tilde([1, 2, 3], [1, 0, 0]) == pytest.approx(-390 / (650 * math.sqrt(14)), rel=1e-14)
    # two vanishing components make a pairwise denominator vanish
    with pytest.raises(ChartSingularity):
        flat_L_tilde([1, 0, 0], [0, 1, 0])


# conformal torsion -------------------------------------------------------------

def test_conformal_torsion_examples():
    for kappa, tau in [(1.0, 0.5), (0.4, 2.0), (3.0, -0.7)]:
        T, w = conformal_torsion_omega(kappa, tau, 0.0, 0.0, 0.0)
        assert T * w == pytest.approx(tau, rel=1e-13)
    assert conformal_torsion_omega(1.0, 0.0, 1.0, 0.0, 0.0) == (0.0, 1.0)
    T, _ = conformal_torsion_omega(2.0, 0.0, 0.3, -0.2, 0.0)
    assert T == 0
    with pytest.raises(ConformalDegenerate):
        conformal_torsion_omega(1.0, 0.0, 0.0, 0.5, 0.0)


def test_flat_invariants_of_helix():
    inv = flat_invariants(["2*cos(t)", "2*sin(t)", "t"], np.linspace(0, 1, 5))
    np.testing.assert_allclose(inv["kappa"], 2 / 5)
    np.testing.assert_allclose(inv["tau"], 1 / 5)
    np.testing.assert_allclose(inv["kappa_s"], 0, atol=1e-14)
    np.testing.assert_allclose(inv["speed"], math.sqrt(5))


# total twist -------------------------------------------------------------------

def test_circle_twist(flat):
    traj = curve_trajectory(flat, ["cos(t)", "sin(t)", "0"], np.linspace(0, 2 * math.pi, 101))
    assert total_twist(traj) == pytest.approx(0, abs=1e-14)


def torus_oracle():
    def tau_ds(t):
        inv = flat_invariants(TORUS, np.array([t]))
        return float(inv["tau"][0] * inv["speed"][0])

    return quad.quad(tau_ds, 0, 2 * math.pi, limit=400, epsabs=1e-12, epsrel=1e-12)[0]


def test_torus_curve_twist(flat):
    traj = curve_trajectory(flat, TORUS, np.linspace(0, 2 * math.pi, 1201))
    raw = total_twist(traj, reduce=False)
    assert raw == pytest.approx(torus_oracle(), abs=1e-6)
    assert total_twist(traj) == pytest.approx(raw % (2 * math.pi), abs=1e-12)


def test_twist_changes_by_multiple_of_2pi(flat):
    traj = curve_trajectory(flat, TORUS, np.linspace(0, 2 * math.pi, 1201))
    bar = rescale_trajectory(traj, "0.3*sin(x1)")
    dist, _ = distance_to_2pi_multiple(total_twist(bar, reduce=False) - total_twist(traj, reduce=False))
    assert dist <= 1e-4


def test_open_curve_twist_is_raw(flat):
    traj = curve_trajectory(flat, ["cos(t)", "sin(t)", "3*t"], np.linspace(0, 12, 401))
    assert total_twist(traj) == pytest.approx(total_twist(traj, reduce=False))
    assert total_twist(traj) == pytest.approx(12 * 3 / math.sqrt(10), rel=1e-12)


def test_distance_to_2pi_multiple():
    assert distance_to_2pi_multiple(4 * math.pi + 1e-5) == (pytest.approx(1e-5), 2)
    assert distance_to_2pi_multiple(-2 * math.pi)[1] == -1


def test_ricci_remark_along_geodesics(sphere, generic_metric):
    cfg = IntegratorConfig(rtol=1e-11, atol=1e-12)
    for metric in (sphere, generic_metric):
        s = CurveState(0, (0.1, 0.0, -0.1), (1.0, 0.2, 0.1), (0.0, 0.5, 0.3))
        traj = integrate(metric, s, 1.0, cfg)
        for i, geom in enumerate(traj.geometries()):
            fd = frenet_at(geom, traj.u[i], traj.a[i], traj.b[i])
            assert abs(fd.kappa * fd.tau - fd.T @ geom.ricci @ fd.B) <= 1e-6


def test_invariant_columns(sphere):
    traj = integrate(sphere, CurveState(0, (0, 0, 0), (0.5, 0, 0), (0, 0.3, 0.1)), 0.5)
    cols = invariants(traj)
    assert list(cols) == ["kappa", "tau", "L", "ell", "A", "V"]
    np.testing.assert_allclose(cols["L"], cols["ell"] * cols["V"] / cols["A"] ** 2, rtol=1e-12)


def test_covariant_coordinate_round_trip(generic_metric, rng):
    geom = geometry_at(generic_metric, (0.3, -0.1, 0.2))
    u, a, b = rng.normal(size=(3, 3))
    back = covariant_jets(geom, *coordinate_jets(geom, u, a, b))
    np.testing.assert_allclose(np.array(back), np.array([u, a, b]), atol=1e-13)
    assert inner(geom, u, a) == pytest.approx(inner(geom, a, u))
