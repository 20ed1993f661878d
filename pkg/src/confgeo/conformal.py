"""Conformal rescaling g -> gbar = exp(-2 phi) g of metrics and curve data.

Verifies that L changes by a total derivative, L_bar - L = dS/dt, where S
is the angle in the normal plane u^perp between the projections of a and
a_bar, and that conformal geodesics of g stay conformal geodesics of gbar.

The Schouten law is usually written for gbar = exp(2 f) g; with the
convention here f = -phi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import dsl, jets
from .errors import NotUnitSpeed, ProjectionDegenerate
from .frenet import check_nondegenerate, distance_to_2pi_multiple, lagrangian_L, total_twist
from .geodesics import Trajectory, check_velocity, normal_residual, unit_speed
from .geometry import (
    coordinate_jets,
    covariant_jets,
    cross,
    gamma_apply,
    geometry_at,
    inner,
    jet_geometry,
    norm2,
    raise_index,
)

UNIT_SPEED_TOL = 1e-9
PROJECTION_RTOL = 1e-10


@dataclass(frozen=True)
class ConformalFactor:
    """Scalar phi(x1, x2, x3) of the rescaling gbar = exp(-2 phi) g."""

    phi: dsl.Expression

    def __post_init__(self):
        object.__setattr__(self, "phi", dsl.parse_expression(self.phi))

    @classmethod
    def of(cls, phi):
        return phi if isinstance(phi, cls) else cls(phi)

    def value(self, point):
        return dsl.evaluate(self.phi, np.moveaxis(np.asarray(point, float), -1, 0))

    def derivatives(self, point):
        """(phi, gradient d_i phi, Hessian d_i d_j phi) in coordinates."""
        j = dsl.eval_jet(self.phi, point, 2)
        grad = np.array([j.partial(i) for i in range(3)])
        hess = np.array([[j.partial(i, k) for k in range(3)] for i in range(3)])
        return j.value, grad, hess

    def __str__(self):
        return dsl.serialize(self.phi)


def rescale_metric(spec, phi):
    """Metric with components exp(-2 phi) g_ij, built on the expression trees."""
    phi = ConformalFactor.of(phi).phi
    factor = dsl.Call("exp", dsl.BinOp("*", dsl.Const(-2.0), phi))
    comps = tuple(dsl.BinOp("*", factor, c) for c in spec.components)
    return dsl.MetricSpec(comps, spec.signature, f"{spec.name}_rescaled")


# pointwise transformation ----------------------------------------------------

def transform_state(geom, phi_derivs, u, a, b):
    """(u_bar, a_bar, b_bar) for gbar = exp(-2 phi) g from g-unit-speed data (u, a, b).

    ``phi_derivs`` is (phi, d phi, coordinate Hessian) at the point, as from
    :meth:`ConformalFactor.derivatives`.  The u-component of ``b_bar``
    assumes a unit-speed jet through third order, g(u, b) = -|a|^2; the part
    normal to u does not depend on it.
    """
    u = np.asarray(u, float)
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    uu = check_velocity(geom, u)
    if abs(uu - 1.0) > UNIT_SPEED_TOL or abs(inner(geom, u, a)) > UNIT_SPEED_TOL:
        raise NotUnitSpeed(f"|u|^2 = {uu!r}, g(u,a) = {inner(geom, u, a)!r}")
    phi, dphi, hess = phi_derivs
    grad = raise_index(geom, dphi)
    du = dphi @ u
    da = dphi @ a
    cov_hess = hess - np.einsum("kij,k->ij", geom.Gamma, dphi)
    nabla_u_grad = raise_index(geom, cov_hess @ u)
    e = math.exp(phi)
    u_bar = e * u
    a_bar = e ** 2 * (a - du * u + grad)
    # the u-coefficient follows from d/dt d_u(phi) = Hess(u, u) + d_a(phi);
    # the part normal to u is b + d_u(phi) grad + nabla_u grad
    b_bar = e ** 3 * (
        b + du * grad + nabla_u_grad - (cov_hess @ u @ u + 2.0 * da + dphi @ grad) * u
    )
    return u_bar, a_bar, b_bar


def _project(geom, u, v):
    return v - (inner(geom, v, u) / norm2(geom, u)) * u


def divergence_potential_S(geom, u, a, a_bar, signed=False):
    """Angle between the u^perp projections of a and a_bar.

    The principal value lies in [0, pi].  With ``signed`` the angle is
    measured from pi(a) to pi(a_bar) around u (g-cross orientation) and lies
    in (-pi, pi].
    """
    pa = _project(geom, u, np.asarray(a, float))
    pb = _project(geom, u, np.asarray(a_bar, float))
    na = math.sqrt(max(norm2(geom, pa), 0.0))
    nb = math.sqrt(max(norm2(geom, pb), 0.0))
    ref = math.sqrt(max(norm2(geom, a), norm2(geom, a_bar), 1e-300))
    if na <= PROJECTION_RTOL * ref or nb <= PROJECTION_RTOL * ref:
        raise ProjectionDegenerate("projection of a or a_bar onto u^perp vanishes")
    c = inner(geom, pa, pb)
    if not signed:
        return math.acos(min(1.0, max(-1.0, c / (na * nb))))
    s = inner(geom, cross(geom, u, pa), pb) / math.sqrt(norm2(geom, u))
    return math.atan2(s, c)


def _angle_jet(c, s):
    """Continuous angle atan2(s, c) of jets, expanded around the base value."""
    c0 = jets.value_of(c)
    s0 = jets.value_of(s)
    base = np.arctan2(s0, c0)
    re = c0 * c + s0 * s
    im = c0 * s - s0 * c
    return base + jets.arctan(im / re)


def _normal_angle_tjets(metric, metric_bar, x, xd1, xd2, xd3, fixed=None):
    """d/dt of the normal-plane angles along the samples.

    Returns (dS/dt, dtheta/dt, dtheta_bar/dt) where S is the signed angle
    from pi(a) to pi(a_bar) and theta, theta_bar are the angles of pi(a),
    pi(a_bar) measured from pi(fixed) (only when ``fixed`` is given).
    """
    alg = jets.algebra(((1, 1),))
    n = len(x)
    t = jets.Jet.variable(alg, 0, np.zeros(n))[..., None]
    X = jets.Jet.constant(alg, x) + t * xd1
    U = jets.Jet.constant(alg, xd1) + t * xd2
    Xdd = jets.Jet.constant(alg, xd2) + t * xd3
    gj = jet_geometry(metric, X)
    gbj = jet_geometry(metric_bar, X)
    A = Xdd + gamma_apply(gj, U, U)
    Ab = Xdd + gamma_apply(gbj, U, U)
    uu = norm2(gj, U)
    pa = A - (inner(gj, A, U) / uu)[..., None] * U
    pb = Ab - (inner(gj, Ab, U) / uu)[..., None] * U
    speed = jets.sqrt(uu)

    def rate(p, q):
        c = inner(gj, p, q)
        s = inner(gj, cross(gj, U, p), q) / speed
        ang = _angle_jet(c, s)
        return ang.c[..., 1]

    dS = rate(pa, pb)
    if fixed is None:
        return dS, None, None
    v = jets.Jet.constant(alg, np.broadcast_to(np.asarray(fixed, float), x.shape))
    pv = v - (inner(gj, v, U) / uu)[..., None] * U
    return dS, rate(pv, pa), rate(pv, pb)


def _bar_jets(metric_bar, x, xd1, xd2, xd3):
    geoms = [geometry_at(metric_bar, p) for p in x]
    cov = [covariant_jets(gm, d1, d2, d3) for gm, d1, d2, d3 in zip(geoms, xd1, xd2, xd3)]
    return geoms, np.array([c[0] for c in cov]), np.array([c[1] for c in cov]), np.array([c[2] for c in cov])


def _coordinate_samples(traj):
    geoms = traj.geometries()
    cj = [coordinate_jets(gm, u, a, b) for gm, u, a, b in zip(geoms, traj.u, traj.a, traj.b)]
    return geoms, np.array([c[0] for c in cj]), np.array([c[1] for c in cj]), np.array([c[2] for c in cj])


def rescale_trajectory(traj, phi):
    """Same samples and parameter, with covariant jets recomputed in gbar."""
    metric_bar = rescale_metric(traj.metric, phi)
    _, xd1, xd2, xd3 = _coordinate_samples(traj)
    _, u, a, b = _bar_jets(metric_bar, traj.x, xd1, xd2, xd3)
    return Trajectory(metric_bar, traj.t, traj.x, u, a, b, mode="curve")


@dataclass(frozen=True)
class DivergenceProfile:
    t: np.ndarray
    L: np.ndarray
    L_bar: np.ndarray
    dS: np.ndarray
    S: np.ndarray  # signed, unwrapped
    residual: np.ndarray  # |L_bar - L - dS/dt|

    @property
    def max_residual(self):
        return float(np.max(self.residual))

    @property
    def integrated_gap(self):
        """|int (L_bar - L) dt - (S(end) - S(start))|, a global version of the identity."""
        return abs(float(integrate.trapezoid(self.L_bar - self.L, self.t)) - (self.S[-1] - self.S[0]))


def verify_divergence(metric, phi, traj, resample=True):
    """Pointwise residual of L_bar - L = dS/dt along ``traj`` (a curve in ``metric``).

    With ``resample`` the curve is first reparametrized to g-unit speed.  The
    identity itself does not depend on the parameter since L dt, L_bar dt and
    S are all reparametrization invariant.
    """
    phi = ConformalFactor.of(phi)
    if traj.metric is not metric:
        traj = Trajectory(metric, traj.t, traj.x, traj.u, traj.a, traj.b, mode=traj.mode)
    if resample:
        traj = unit_speed(traj)
    metric_bar = rescale_metric(metric, phi)
    geoms, xd1, xd2, xd3 = _coordinate_samples(traj)
    gbars, ub, ab, bb = _bar_jets(metric_bar, traj.x, xd1, xd2, xd3)
    L = np.array([lagrangian_L(gm, u, a, b) for gm, u, a, b in zip(geoms, traj.u, traj.a, traj.b)])
    Lb = np.array([lagrangian_L(gm, u, a, b) for gm, u, a, b in zip(gbars, ub, ab, bb)])
    S = np.array([divergence_potential_S(gm, u, a, abar, signed=True) for gm, u, a, abar in zip(geoms, traj.u, traj.a, ab)])
    dS, _, _ = _normal_angle_tjets(metric, metric_bar, traj.x, xd1, xd2, xd3)
    return DivergenceProfile(traj.t, L, Lb, dS, np.unwrap(S), np.abs(Lb - L - dS))


def angle_relation_residual(metric, phi, traj, direction=(0.0, 0.0, 1.0)):
    """|(L_bar - dtheta_bar/dt) - (L - dtheta/dt)| with angles from the projection of a fixed direction."""
    phi = ConformalFactor.of(phi)
    if traj.metric is not metric:
        traj = Trajectory(metric, traj.t, traj.x, traj.u, traj.a, traj.b, mode=traj.mode)
    metric_bar = rescale_metric(metric, phi)
    geoms, xd1, xd2, xd3 = _coordinate_samples(traj)
    gbars, ub, ab, bb = _bar_jets(metric_bar, traj.x, xd1, xd2, xd3)
    L = np.array([lagrangian_L(gm, u, a, b) for gm, u, a, b in zip(geoms, traj.u, traj.a, traj.b)])
    Lb = np.array([lagrangian_L(gm, u, a, b) for gm, u, a, b in zip(gbars, ub, ab, bb)])
    _, dth, dthb = _normal_angle_tjets(metric, metric_bar, traj.x, xd1, xd2, xd3, fixed=direction)
    return np.abs((Lb - dthb) - (L - dth))


# geodesic images -------------------------------------------------------------

def _zero_schouten_residual(geom, u, a, b):
    uu = check_velocity(geom, u)
    return cross(geom, u, b) - 3.0 * inner(geom, u, a) / uu * cross(geom, u, a)


def geodesic_image_residual(metric, phi, traj, zero_schouten=False):
    """Relative gbar-normal residual of the point set of ``traj`` after gbar-unit-speed reparametrization.

    ``zero_schouten`` drops the Schouten term (a negative control).  Each
    residual is divided by max(1, |b|, |a|^2) measured in gbar.
    """
    if traj.metric is not metric:
        traj = Trajectory(metric, traj.t, traj.x, traj.u, traj.a, traj.b, mode=traj.mode)
    bar = unit_speed(rescale_trajectory(traj, phi))
    out = np.empty(len(bar))
    for i, gm in enumerate(bar.geometries()):
        u, a, b = bar.u[i], bar.a[i], bar.b[i]
        r = _zero_schouten_residual(gm, u, a, b) if zero_schouten else normal_residual(gm, u, a, b)
        scale = max(1.0, math.sqrt(abs(norm2(gm, b))), abs(norm2(gm, a)))
        out[i] = math.sqrt(abs(norm2(gm, r))) / scale
    return out


# Schouten law ----------------------------------------------------------------

def schouten_law_residual(metric, phi, point, f_sign=-1.0):
    """Relative gap between P of gbar and P - Hess f + df df - |df|^2 g / 2 with f = f_sign * phi.

    The law holds for f = -phi (the default); ``f_sign=+1`` is a sign-convention control.
    """
    phi = ConformalFactor.of(phi)
    geom = geometry_at(metric, point)
    gbar = geometry_at(rescale_metric(metric, phi), point)
    _, dphi, hess = phi.derivatives(point)
    df = f_sign * dphi
    hf = f_sign * (hess - np.einsum("kij,k->ij", geom.Gamma, dphi))
    predicted = geom.P - hf + np.outer(df, df) - 0.5 * (df @ raise_index(geom, df)) * geom.g
    return float(np.max(np.abs(gbar.P - predicted)) / max(1.0, np.max(np.abs(gbar.P))))


# total twist ---------------------------------------------------------------

def twist_change(traj, phi):
    """(twist in g, twist in gbar, distance of the change to 2 pi Z, nearest k); raw integrals."""
    t_g = total_twist(traj, reduce=False)
    t_bar = total_twist(rescale_trajectory(traj, phi), reduce=False)
    dist, k = distance_to_2pi_multiple(t_bar - t_g)
    return t_g, t_bar, dist, k


def check_admissible(traj):
    for gm, u, a in zip(traj.geometries(), traj.u, traj.a):
        check_nondegenerate(gm, u, a)
    return True


__all__ = [
    "ConformalFactor",
    "DivergenceProfile",
    "angle_relation_residual",
    "divergence_potential_S",
    "geodesic_image_residual",
    "rescale_metric",
    "rescale_trajectory",
    "schouten_law_residual",
    "transform_state",
    "twist_change",
    "verify_divergence",
]
