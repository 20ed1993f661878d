import math

import numpy as np
import pytest

from confgeo import dsl
from confgeo.errors import (
    ConstraintDrift,
    ConstraintViolated,
    InputError,
    NonMonotone,
    NullVelocity,
)
from confgeo.geodesics import (
    CurveState,
    IntegratorConfig,
    Trajectory,
    conformal_rhs,
    constrained_rhs,
    curve_trajectory,
    geodesic_residuals,
    integrate,
    normal_residual,
    reparametrize,
    reverse_state,
    tangential_residual,
)
from confgeo.geometry import geometry_at, inner, norm2

TIGHT = IntegratorConfig(rtol=1e-12, atol=1e-13)


def unit_start(metric, x, u, a):
    """Normalize u and make a g-orthogonal to it."""
    geom = geometry_at(metric, x)
    u = np.asarray(u, float) / math.sqrt(norm2(geom, u))
    a = np.asarray(a, float)
    a = a - inner(geom, u, a) * u
    return CurveState(0.0, x, u, a)


def test_flat_rhs_examples(flat):
    e = geometry_at(flat, (0, 0, 0))
    np.testing.assert_array_equal(conformal_rhs(e, [1, 0, 0], [0, 1, 0]), [-1.5, 0, 0])
    np.testing.assert_array_equal(conformal_rhs(e, [1, 0, 0], [0, 0, 0]), [0, 0, 0])
    np.testing.assert_array_equal(constrained_rhs(e, [1, 0, 0], [0, 1, 0]), [-0.5, 0, 0])
    np.testing.assert_array_equal(constrained_rhs(e, [0, 1, 0], [0, 0, 2]), [0, -2, 0])


def test_sphere_rhs_frozen_value(sphere):
    geom = geometry_at(sphere, (0, 0, 0))
    np.testing.assert_allclose(conformal_rhs(geom, [0.5, 0, 0], [0, 0, 0]), [-0.25, 0, 0], atol=1e-14)


def test_constrained_matches_parametrized_on_constraint_set(rng):
    m = dsl.builtin_metric("conformally_flat", {"phi": "x1"})
    for _ in range(10):
        s = unit_start(m, rng.uniform(-1, 1, 3), rng.normal(size=3), rng.normal(size=3))
        geom = geometry_at(m, s.x)
        # constrained form requires P(u,u) = -|a|^2/2, fix |a| accordingly
        puu = s.u @ geom.schouten @ s.u
        if puu >= 0:
            continue
        a = s.a / math.sqrt(norm2(geom, s.a)) * math.sqrt(-2 * puu)
        np.testing.assert_allclose(constrained_rhs(geom, s.u, a), conformal_rhs(geom, s.u, a), atol=1e-10)


def test_constrained_rejects_off_constraint(flat):
    with pytest.raises(ConstraintViolated, match="g\\(u, a\\)"):
        constrained_rhs(geometry_at(flat, (0, 0, 0)), [1, 0, 0], [1, 1, 0])


def test_null_velocity(flat):
    with pytest.raises(NullVelocity):
        conformal_rhs(geometry_at(flat, (0, 0, 0)), [0, 0, 0], [1, 0, 0])


def test_residual_examples(flat, generic_metric, rng):
    e = geometry_at(flat, (0, 0, 0))
    assert tangential_residual(e, [1, 0, 0], [0, 1, 0], [-1.5, 0, 0]) == 0
    np.testing.assert_array_equal(normal_residual(e, [1, 0, 0], [0, 1, 0], [-1.5, 0, 0]), 0)
    assert tangential_residual(e, [1, 0, 0], [0, 1, 0], [0, 0, 0]) == 1.5
    np.testing.assert_array_equal(normal_residual(e, [1, 0, 0], [0, 1, 0], [0, 0, 0]), 0)
    geom = geometry_at(generic_metric, (0.2, 0.1, -0.3))
    for _ in range(5):
        u, a = rng.normal(size=(2, 3))
        b = conformal_rhs(geom, u, a)
        scale = 1 + np.linalg.norm(b)
        assert abs(tangential_residual(geom, u, a, b)) <= 1e-12 * scale
        assert np.linalg.norm(normal_residual(geom, u, a, b)) <= 1e-12 * scale


def test_flat_circle_closes(flat):
    s = CurveState(0, (0, 0, 0), (1, 0, 0), (0, 1, 0))
    traj = integrate(flat, s, 2 * math.pi, TIGHT, mode="constrained")
    assert np.linalg.norm(traj.x[-1] - traj.x[0]) <= 1e-8
    # radius 1/|a| around x + a/|a|^2
    np.testing.assert_allclose(np.linalg.norm(traj.x - [0, 1, 0], axis=1), 1.0, atol=1e-9)


def test_flat_circle_parametrized(flat):
    # speed is not constant here, but the image is still the unit circle about (0,1,0)
    traj = integrate(flat, CurveState(0, (0, 0, 0), (1, 0, 0), (0, 1, 0)), 2 * math.pi, TIGHT)
    np.testing.assert_allclose(np.linalg.norm(traj.x - [0, 1, 0], axis=1), 1.0, atol=1e-9)
    assert np.all(traj.x[:, 2] == 0)
    tan, nor = geodesic_residuals(traj)
    assert tan.max() <= 1e-12 and nor.max() <= 1e-12


def test_straight_line(flat):
    s = CurveState(0, (1, 2, 3), (0.3, -0.4, 1.2), (0, 0, 0))
    for method in ("rk4-fixed", "rkf45-adaptive"):
        traj = integrate(flat, s, 3.0, IntegratorConfig(method=method, step=0.1))
        np.testing.assert_allclose(traj.x, s.x + traj.t[:, None] * s.u, atol=1e-12)


def test_sphere_constrained_run(sphere):
    s = unit_start(sphere, (0.1, -0.2, 0.05), (0.3, 0.5, -0.1), (0.2, 0.1, 0.4))
    traj = integrate(sphere, s, 1.0, TIGHT, mode="constrained")
    assert traj.drift.max() <= 1e-9
    geoms = traj.geometries()
    for i, geom in enumerate(geoms):
        nor = normal_residual(geom, traj.u[i], traj.a[i], traj.b[i])
        assert np.linalg.norm(nor) <= 1e-8


def test_drift_abort_without_projection(sphere):
    s = unit_start(sphere, (0.1, -0.2, 0.05), (0.3, 0.5, -0.1), (0.2, 0.1, 0.4))
    coarse = IntegratorConfig(method="rk4-fixed", step=0.5, constraint_projection=False)
    with pytest.raises(ConstraintDrift):
        integrate(sphere, s, 20.0, coarse, mode="constrained")


@pytest.mark.parametrize("metric_name", ["sphere", "generic_metric"])
def test_on_shell_closure(metric_name, request):
    metric = request.getfixturevalue(metric_name)
    traj = integrate(metric, CurveState(0, (0.1, 0.0, -0.1), (1.0, 0.2, 0.1), (0.0, 0.5, 0.3)), 1.5, TIGHT)
    tan, nor = geodesic_residuals(traj)
    assert tan.max() <= 1e-7 and nor.max() <= 1e-7


def test_time_reversal(generic_metric):
    cfg = IntegratorConfig(rtol=1e-11, atol=1e-12)
    s0 = CurveState(0, (0.1, 0.0, -0.1), (1.0, 0.2, 0.1), (0.0, 0.5, 0.3))
    fwd = integrate(generic_metric, s0, 1.0, cfg)
    back = integrate(generic_metric, reverse_state(fwd.state(-1)), 1.0, cfg)
    end = back.state(-1)
    err = np.concatenate([end.x - s0.x, -end.u - s0.u, end.a - s0.a])
    assert np.max(np.abs(err)) <= 10 * 1e-11 * 10


def test_t_eval_samples(flat):
    s = CurveState(0, (0, 0, 0), (1, 0, 0), (0, 1, 0))
    traj = integrate(flat, s, 1.0, TIGHT, t_eval=[0.25, 0.5, 1.0])
    np.testing.assert_allclose(traj.t, [0, 0.25, 0.5, 1.0])
    with pytest.raises(InputError):
        integrate(flat, s, 1.0, TIGHT, t_eval=[0.5, 0.25])


def test_trajectory_round_trips(sphere):
    s = unit_start(sphere, (0.1, -0.2, 0.05), (0.3, 0.5, -0.1), (0.2, 0.1, 0.4))
    traj = integrate(sphere, s, 0.5, TIGHT, mode="constrained")
    back = Trajectory.from_csv(traj.to_csv(), sphere, mode="constrained")
    np.testing.assert_array_equal(back.table(), traj.table())
    back = Trajectory.from_dict(traj.to_dict())
    np.testing.assert_array_equal(back.table(), traj.table())
    assert back.metric.components == sphere.components
    assert traj.to_csv().splitlines()[0] == ",".join(Trajectory.COLUMNS)


def test_trajectory_requires_increasing_parameter(flat):
    z = np.zeros((2, 3))
    with pytest.raises(InputError):
        Trajectory(flat, np.array([0.0, 0.0]), z, z, z, z)


# reparametrization --------------------------------------------------------

@pytest.fixture(scope="module")
def circle():
    flat = dsl.builtin_metric("euclidean")
    t = np.linspace(0, 2 * math.pi, 41)
    return curve_trajectory(flat, ["cos(t)", "sin(t)", "0"], t)


def test_identity_reparametrization(circle):
    out = reparametrize(circle, "t")
    for name in ("t", "x", "u", "a", "b"):
        np.testing.assert_allclose(getattr(out, name), getattr(circle, name), atol=1e-12)


def test_linear_reparametrization_keeps_normal_part(circle):
    out = reparametrize(circle, "2*t")
    _, nor = geodesic_residuals(out)
    assert nor.max() <= 1e-8


def test_nonlinear_reparametrization(circle):
    out = reparametrize(circle, "t + 0.1*sin(t)")
    tan, nor = geodesic_residuals(out)
    assert nor.max() <= 1e-6
    assert tan.max() > 1e-3


def test_non_monotone_reparametrization(circle):
    with pytest.raises(NonMonotone):
        reparametrize(circle, "t + 2*sin(t)")


def test_interpolated_reparametrization_converges(generic_metric):
    # normal residual after Hermite resampling; halving the sample spacing
    s0 = CurveState(0, (0.1, 0.0, -0.1), (1.0, 0.2, 0.1), (0.0, 0.5, 0.3))
    cfg = IntegratorConfig(rtol=1e-13, atol=1e-14)
    errs = []
    for n in (8, 16):
        traj = integrate(generic_metric, s0, 1.0, cfg, t_eval=np.linspace(0, 1, n + 1)[1:])
        s = np.linspace(0.0, 0.5, 23)
        out = reparametrize(traj, "2*t", method="interpolate", s_values=s)
        errs.append(geodesic_residuals(out)[1].max())
    assert errs[0] / errs[1] >= 8
