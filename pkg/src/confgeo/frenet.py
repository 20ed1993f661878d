"""Frenet frame, curve invariants and the torsion Lagrangians.

For covariant jets (u, a, b) of a curve::

    ell = |u|,  A = sqrt(|u|^2 |a|^2 - g(u,a)^2),  V = sqrt|g| eps_ijk u^i a^j b^k
    kappa = A / ell^3,  tau = V / A^2,  L = ell V / A^2

so L dt = tau ds.  The functions computing L and the potential lambda accept
jets as well as arrays, which the variational checks rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import dsl, jets
from .errors import ChartSingularity, ConformalDegenerate, DegenerateCurve
from .geodesics import check_velocity
from .geometry import (
    EPS,
    area_A,
    coordinate_jets,
    covariant_jets,
    cross,
    gamma_apply,
    geometry_at,
    gram2,
    inner,
    jet_geometry,
    lower,
    norm2,
    volume_V,
)

DEGENERATE_RTOL = 1e-8
CHART_RTOL = 1e-10


@dataclass(frozen=True)
class FrenetData:
    T: np.ndarray
    N: np.ndarray
    B: np.ndarray
    kappa: float
    tau: float
    ell: float
    A: float
    V: float
    L: float


def _value(x):
    return np.asarray(jets.value_of(x))


def check_nondegenerate(geom, u, a):
    """Raise :class:`DegenerateCurve` unless A > 1e-8 ell |a|; returns (|u|^2, A^2)."""
    uu = norm2(geom, u)
    aa = norm2(geom, a)
    G = gram2(geom, u, a)
    uv, av, Gv = _value(uu), _value(aa), _value(G)
    if np.any(np.abs(uv) == 0):
        check_velocity(geom, _value(u))
    bound = DEGENERATE_RTOL * np.sqrt(np.abs(uv) * np.abs(av))
    if np.any(np.sqrt(np.maximum(Gv, 0.0)) <= bound) or np.any(Gv <= 0):
        raise DegenerateCurve("curve is degenerate (velocity and acceleration are parallel)")
    return uu, G


def frenet_at(geom, u, a, b):
    """Frenet frame and invariants from covariant jets at one point."""
    u, a, b = (np.asarray(v, float) for v in (u, a, b))
    check_velocity(geom, u)
    uu, G = check_nondegenerate(geom, u, a)
    ell = math.sqrt(uu)
    A = math.sqrt(G)
    V = float(volume_V(geom, u, a, b))
    T = u / ell
    pa = a - inner(geom, T, a) * T
    N = pa / math.sqrt(norm2(geom, pa))
    B = cross(geom, T, N)
    return FrenetData(T, N, B, A / ell ** 3, V / G, ell, A, V, ell * V / G)


def lagrangian_L(geom, u, a, b):
    """L = ell V / A^2 (arrays or jets)."""
    uu, G = check_nondegenerate(geom, u, a)
    return jets.sqrt(uu) * volume_V(geom, u, a, b) / G


def torsion(geom, u, a, b):
    uu, G = check_nondegenerate(geom, u, a)
    return volume_V(geom, u, a, b) / G


def curvature(geom, u, a):
    uu, G = check_nondegenerate(geom, u, a)
    return jets.sqrt(G) / jets.sqrt(uu) ** 3


def lambda_potential(geom, u, a):
    """arctan[(a_1 ell^2 - g(u,a) u_1) / (ell sqrt|g| eps_1ij u^i a^j)], indices lowered with g."""
    uu, G = check_nondegenerate(geom, u, a)
    ell = jets.sqrt(uu)
    num = lower(geom, a)[..., 0] * uu - inner(geom, u, a) * lower(geom, u)[..., 0]
    eps1 = u[..., 1] * a[..., 2] - u[..., 2] * a[..., 1]
    den = ell * geom.sqrt_det_g * eps1
    scale = np.sqrt(np.abs(_value(uu)) * np.abs(_value(norm2(geom, a))))
    if np.any(np.abs(_value(eps1)) * np.sqrt(np.abs(_value(geom.sqrt_det_g))) <= CHART_RTOL * scale):
        raise ChartSingularity("eps_1ij u^i a^j vanishes; the arctan chart of the potential fails")
    return jets.arctan(num / den)


# jets along a curve ----------------------------------------------------------

def curve_tjet(metric, x, u, a, b, perturb_b=False):
    """First-order t-jets of (geometry, u, a) along the curve through (x, u, a, b).

    With ``perturb_b`` a second group of three variables perturbs the
    coordinate third derivative, so coefficients of ``t * e_j`` are the
    b-derivatives of time derivatives.  Returns (alg, geom_jet, u_jet, a_jet, b_jet_at_t0).
    """
    geom = geometry_at(metric, x)
    xd1, xd2, xd3 = coordinate_jets(geom, np.asarray(u, float), np.asarray(a, float), np.asarray(b, float))
    groups = ((1, 1), (3, 1)) if perturb_b else ((1, 1),)
    alg = jets.algebra(groups)
    t = jets.Jet.variable(alg, 0)
    xd3j = jets.Jet.constant(alg, xd3)
    if perturb_b:
        xd3j = xd3j + jets.stack([jets.Jet.variable(alg, 1 + j) for j in range(3)], axis=-1)
    X = jets.Jet.constant(alg, x) + t * xd1
    U = jets.Jet.constant(alg, xd1) + t * jets.Jet.constant(alg, xd2)
    Xdd = jets.Jet.constant(alg, xd2) + t * xd3j
    gj = jet_geometry(metric, X)
    aj = Xdd + gamma_apply(gj, U, U)
    # b at t = 0 only depends on the perturbation through x'''
    bj = xd3j + 3.0 * gamma_apply(geom, xd1, xd2) + _s_apply_const(geom, xd1)
    return alg, gj, U, aj, bj


def _s_apply_const(geom, v):
    return np.einsum("kijl,i,j,l->k", geom.S, v, v, v)


def _t_derivative(alg, jet):
    """d/dt at t = 0 as a jet over the remaining groups (or a float)."""
    if len(alg.groups) == 1:
        return jet.coefficient((1,)) if jet.ndim == 0 else jet.c[..., 1]
    return jet.project({0: (1,)})


def _at_t0(alg, jet):
    if len(alg.groups) == 1:
        return jet.value
    return jet.project({0: (0,)})


def frenet_torsion(metric, x, u, a, b):
    """Torsion as g(∇_T N, B), computed from the moving frame (independent of V/A^2)."""
    alg, gj, U, aj, _ = curve_tjet(metric, x, u, a, b)
    ell = jets.sqrt(norm2(gj, U))
    T = U / ell[..., None]
    pa = aj - inner(gj, T, aj)[..., None] * T
    N = pa / jets.sqrt(norm2(gj, pa))[..., None]
    geom = geometry_at(metric, x)
    N0 = _at_t0(alg, N)
    B0 = cross(geom, _at_t0(alg, T), N0)
    dN = _t_derivative(alg, N)
    cov = dN + gamma_apply(geom, np.asarray(u, float), N0)
    return inner(geom, cov, B0) / math.sqrt(norm2(geom, np.asarray(u, float)))


def lambda_rate(metric, x, u, a, b):
    """d lambda / dt along the curve through the given jets (exact, via t-jets)."""
    alg, gj, U, aj, _ = curve_tjet(metric, x, u, a, b)
    return _t_derivative(alg, lambda_potential(gj, U, aj))


def lagrangian_L_prime(metric, x, u, a, b):
    """L' = L - d lambda/dt, a second-order Lagrangian."""
    geom = geometry_at(metric, x)
    return float(lagrangian_L(geom, np.asarray(u, float), np.asarray(a, float), np.asarray(b, float))) - float(
        lambda_rate(metric, x, u, a, b)
    )


def lagrangian_L_prime_b_gradient(metric, x, u, a, b):
    """(∂L'/∂b^j)_j at fixed (x, u, a); vanishes identically."""
    alg, gj, U, aj, bj = curve_tjet(metric, x, u, a, b, perturb_b=True)
    geom = geometry_at(metric, x)
    b0 = bj.project({0: (0,)})
    u0 = jets.Jet.constant(b0.alg, np.asarray(u, float))
    a0 = jets.Jet.constant(b0.alg, np.asarray(a, float))
    L = lagrangian_L(geom, u0, a0, b0)
    dlam = _t_derivative(alg, lambda_potential(gj, U, aj))
    Lp = L - dlam
    return np.array([Lp.partial(j) for j in range(3)])


def flat_L_prime(xd1, xd2):
    """Flat closed form x1'(x2' x3'' - x3' x2'') / ((x2'^2 + x3'^2) |x'|)."""
    u = jets.stack(list(xd1)) if not isinstance(xd1, (np.ndarray, jets.Jet)) else xd1
    a = jets.stack(list(xd2)) if not isinstance(xd2, (np.ndarray, jets.Jet)) else xd2
    u1, u2, u3 = u[..., 0], u[..., 1], u[..., 2]
    d = u2 ** 2 + u3 ** 2
    n2 = u1 ** 2 + d
    if np.any(_value(d) <= CHART_RTOL * _value(n2)):
        raise ChartSingularity("x2'^2 + x3'^2 vanishes")
    return u1 * (u2 * a[..., 2] - u3 * a[..., 1]) / (d * jets.sqrt(n2))


def flat_L_tilde(u, a):
    """Symmetrized flat second-order Lagrangian in (x', x'')."""
    u = jets.stack(list(u)) if not isinstance(u, (np.ndarray, jets.Jet)) else u
    a = jets.stack(list(a)) if not isinstance(a, (np.ndarray, jets.Jet)) else a
    u1, u2, u3 = u[..., 0], u[..., 1], u[..., 2]
    a1, a2, a3 = a[..., 0], a[..., 1], a[..., 2]
    pairs = (u1 ** 2 + u2 ** 2, u2 ** 2 + u3 ** 2, u3 ** 2 + u1 ** 2)
    norm2u = _value(u1 ** 2 + u2 ** 2 + u3 ** 2)
    if any(np.any(_value(p) <= CHART_RTOL * norm2u) for p in pairs):
        raise ChartSingularity("a pairwise sum x_i'^2 + x_j'^2 vanishes")
    num = (
        u2 * u3 * (u2 ** 4 - u3 ** 4) * a1
        + u3 * u1 * (u3 ** 4 - u1 ** 4) * a2
        + u1 * u2 * (u1 ** 4 - u2 ** 4) * a3
    )
    return num / (pairs[0] * pairs[1] * pairs[2] * jets.sqrt(u1 ** 2 + u2 ** 2 + u3 ** 2))


# flat conformal torsion ----------------------------------------------------

def conformal_torsion_omega(kappa, tau, kappa_s, kappa_ss, tau_s):
    """Conformal torsion T and the density of omega = (kappa_s^2 + kappa^2 tau^2)^(1/4) ds."""
    q = kappa_s ** 2 + kappa ** 2 * tau ** 2
    if np.any(np.asarray(q) <= 1e-14):
        raise ConformalDegenerate("kappa_s^2 + kappa^2 tau^2 vanishes")
    T = (2 * kappa_s ** 2 * tau + kappa * kappa_s * tau_s - kappa * kappa_ss * tau + kappa ** 2 * tau ** 3) / q ** 1.25
    return T, q ** 0.25


def flat_invariants(components, t):
    """kappa, tau, kappa_s, kappa_ss, tau_s and speed |x'| of a Euclidean curve given by expressions in t."""
    t = np.asarray(t, float)
    alg = jets.algebra(((1, 5),))
    tj = jets.Jet.variable(alg, 0, t)
    X = [dsl.evaluate(dsl.parse_expression(c, ("t",)), [tj]) for c in components]
    X = [x if isinstance(x, jets.Jet) else jets.Jet.constant(alg, np.broadcast_to(x, t.shape)) for x in X]
    d1 = [x.differentiate(0) for x in X]
    d2 = [x.differentiate(0) for x in d1]
    d3 = [x.differentiate(0) for x in d2]
    c = [d1[1] * d2[2] - d1[2] * d2[1], d1[2] * d2[0] - d1[0] * d2[2], d1[0] * d2[1] - d1[1] * d2[0]]
    cc = c[0] * c[0] + c[1] * c[1] + c[2] * c[2]
    speed = jets.sqrt(d1[0] * d1[0] + d1[1] * d1[1] + d1[2] * d1[2])
    kappa = jets.sqrt(cc) / speed ** 3
    tau = (c[0] * d3[0] + c[1] * d3[1] + c[2] * d3[2]) / cc
    kappa_s = kappa.differentiate(0) / speed
    kappa_ss = kappa_s.differentiate(0) / speed
    tau_s = tau.differentiate(0) / speed
    return {
        "kappa": kappa.value,
        "tau": tau.value,
        "kappa_s": kappa_s.value,
        "kappa_ss": kappa_ss.value,
        "tau_s": tau_s.value,
        "speed": speed.value,
    }


# trajectories --------------------------------------------------------------

def invariants(traj):
    """Columns kappa, tau, L, ell, A, V along a trajectory."""
    cols = {k: np.empty(len(traj)) for k in ("kappa", "tau", "L", "ell", "A", "V")}
    for i, geom in enumerate(traj.geometries()):
        fd = frenet_at(geom, traj.u[i], traj.a[i], traj.b[i])
        for k in cols:
            cols[k][i] = getattr(fd, k)
    return cols


def lagrangian_profile(traj):
    return np.array([
        float(lagrangian_L(g, traj.u[i], traj.a[i], traj.b[i])) for i, g in enumerate(traj.geometries())
    ])


def total_twist(traj, closed_tol=1e-6, reduce=True):
    """Trapezoid quadrature of L dt over the samples.

    Reduced to [0, 2 pi) when the curve is closed (endpoint gap below
    ``closed_tol``) and ``reduce`` is set; otherwise returned raw.
    """
    L = lagrangian_profile(traj)
    value = float(integrate.trapezoid(L, traj.t))
    closed = np.linalg.norm(traj.x[-1] - traj.x[0]) < closed_tol
    if reduce and closed:
        value = value % (2 * math.pi)
    return value


def distance_to_2pi_multiple(value):
    k = round(value / (2 * math.pi))
    return abs(value - 2 * math.pi * k), k
