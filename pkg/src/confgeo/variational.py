"""Euler-Lagrange operator of the torsion Lagrangian and its structural probes.

The variational derivative::

    EL_i = dL/dx^i - d/dt dL/dx'^i + d^2/dt^2 dL/dx''^i - d^3/dt^3 dL/dx'''^i

is evaluated exactly in one jet algebra: a t-series truncated at t^3 and
first-order perturbations e_{3m+i} of the four jet slots q_m = x^(m).  Slot
q_m is fed the Taylor series of x^(m)(t) built from the supplied
derivatives, so the coefficient of t^m e_{3m+i} in L is
(1/m!) d^m/dt^m dL/dq_m^i.  Setting x^(4..6) = 0 gives the truncated total
derivative.

Residuals are made dimensionless by first rescaling the jet to unit speed
(x^(k) -> x^(k)/ell^k, which multiplies EL by 1/ell) and dividing by
``max(1, |b|, |a|^2, |tau| A^2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import jets
from .errors import InputError, StencilTooShort
from .frenet import check_nondegenerate, flat_L_prime, flat_L_tilde, lagrangian_L
from .geodesics import check_velocity, conformal_rhs
from .geometry import (
    coordinate_jets,
    covariant_jets,
    geometry_at,
    inner,
    jet_geometry,
    norm2,
    volume_V,
)


@dataclass(frozen=True)
class JetPoint:
    """Point and coordinate derivatives x^(1), ..., x^(k) of a curve."""

    x: np.ndarray
    derivs: tuple

    def __post_init__(self):
        x = np.asarray(self.x, float)
        ds = tuple(np.asarray(d, float) for d in self.derivs)
        if x.shape != (3,) or any(d.shape != (3,) for d in ds):
            raise InputError("jet entries must be 3-vectors")
        if not 3 <= len(ds) <= 6:
            raise InputError("a jet point needs between 3 and 6 derivatives")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "derivs", ds)

    @property
    def order(self):
        return len(self.derivs)

    def padded(self, k=6):
        """[x, x', ..., x^(k)] with missing derivatives set to zero."""
        out = [self.x] + list(self.derivs[:k])
        return out + [np.zeros(3)] * (k + 1 - len(out))

    def truncated(self):
        return JetPoint(self.x, self.derivs[:3])

    def extended(self, higher):
        """Replace x^(4), ... by ``higher``."""
        return JetPoint(self.x, self.derivs[:3] + tuple(higher))

    def scaled(self, c):
        """Jet of the curve s -> x(c s)."""
        return JetPoint(self.x, tuple(d * c ** (k + 1) for k, d in enumerate(self.derivs)))


def jetpoint_from_covariant(metric, x, u, a, b, higher=()):
    geom = geometry_at(metric, x)
    d1, d2, d3 = coordinate_jets(geom, np.asarray(u, float), np.asarray(a, float), np.asarray(b, float))
    return JetPoint(x, (d1, d2, d3) + tuple(higher))


def covariant_from_jetpoint(metric, jp):
    geom = geometry_at(metric, jp.x)
    return covariant_jets(geom, *jp.derivs[:3])


@dataclass(frozen=True)
class ELResult:
    """EL at the given jet (``value``) and at its unit-speed rescaling (``normalized``).

    ``relative`` = max|normalized| / scale.
    """

    value: np.ndarray
    normalized: np.ndarray
    scale: float
    ell: float

    @property
    def relative(self):
        return float(np.max(np.abs(self.normalized)) / self.scale)


# core ----------------------------------------------------------------------

LAGRANGIANS = ("torsion", "flat_reduced", "flat_symmetric")


def _lagrangian(kind, metric, q):
    """L as a jet from slot jets q = (x, x', x'', x''')."""
    if kind == "torsion":
        geom = jet_geometry(metric, q[0])
        u, a, b = covariant_jets(geom, q[1], q[2], q[3])
        return lagrangian_L(geom, u, a, b)
    if kind == "flat_reduced":
        return flat_L_prime(q[1], q[2])
    if kind == "flat_symmetric":
        return flat_L_tilde(q[1], q[2])
    raise InputError(f"unknown Lagrangian {kind!r}; expected one of {LAGRANGIANS}")


def _el_jet(metric, X, extra=None, lagrangian="torsion"):
    """EL as jets over the ``extra`` group (or plain floats).

    ``X`` is [x, x', ..., x^(6)].  ``extra`` is ``(group, inject)`` where
    ``inject(alg, Xj)`` adds the extra variables to the list of constant jets.
    """
    groups = [(1, 3), (12, 1)]
    if extra is not None:
        groups.append(extra[0])
    alg = jets.algebra(tuple(groups))
    Xj = [jets.Jet.constant(alg, np.asarray(v, float)) for v in X]
    if extra is not None:
        Xj = extra[1](alg, Xj)
    t = jets.Jet.variable(alg, 0)
    tp = [1.0, t, t * t, t * t * t]
    q = []
    for m in range(4):
        slot = Xj[m]
        for k in range(1, 4):
            slot = slot + tp[k] * Xj[m + k] * (1.0 / math.factorial(k))
        eps = jets.stack([jets.Jet.variable(alg, 1 + 3 * m + i) for i in range(3)], axis=-1)
        q.append(slot + eps)
    L = _lagrangian(lagrangian, metric, q)
    out = []
    for i in range(3):
        total = 0.0
        for m in range(4):
            e = [0] * 12
            e[3 * m + i] = 1
            if extra is None:
                coef = L.coefficient((m,) + tuple(e))
            else:
                coef = L.project({0: (m,), 1: tuple(e)})
            total = total + ((-1) ** m * math.factorial(m)) * coef
        out.append(total)
    return out


def _normalize(metric, jp):
    geom = geometry_at(metric, jp.x)
    ell = math.sqrt(abs(check_velocity(geom, jp.derivs[0])))
    return jp.scaled(1.0 / ell), ell


def residual_scale(metric, jp):
    """max(1, |b|, |a|^2, |tau| A^2) of a unit-speed jet (g-norms)."""
    geom = geometry_at(metric, jp.x)
    u, a, b = covariant_jets(geom, *jp.derivs[:3])
    uu, G = check_nondegenerate(geom, u, a)
    tau = float(volume_V(geom, u, a, b)) / G
    return max(1.0, math.sqrt(abs(norm2(geom, b))), abs(norm2(geom, a)), abs(tau) * G)


def _check_jet(metric, jp):
    geom = geometry_at(metric, jp.x)
    check_velocity(geom, jp.derivs[0])
    u, a, _ = covariant_jets(geom, *jp.derivs[:3])
    check_nondegenerate(geom, u, a)


def el_full(metric, jp, lagrangian="torsion"):
    """Full variational derivative using x^(4..6) from ``jp`` (missing ones are zero)."""
    _check_jet(metric, jp)
    njp, ell = _normalize(metric, jp)
    val = np.array([float(v) for v in _el_jet(metric, njp.padded(), lagrangian=lagrangian)])
    return ELResult(ell * val, val, residual_scale(metric, njp), ell)


def el_truncated(metric, jp, lagrangian="torsion"):
    """EL with the truncated total derivative (3-jet only)."""
    return el_full(metric, jp.truncated(), lagrangian)


def _probe_extra(slot, n=3):
    def inject(alg, Xj):
        p = jets.stack([jets.Jet.variable(alg, 13 + j) for j in range(n)], axis=-1)
        Xj = list(Xj)
        Xj[slot] = Xj[slot] + p
        return Xj

    return ((n, 1), inject)


def _probe_matrix(metric, njp, slot, lagrangian="torsion"):
    els = _el_jet(metric, njp.padded(), extra=_probe_extra(slot), lagrangian=lagrangian)
    return np.array([[e.partial(j) for j in range(3)] for e in els])


def order_probe(metric, jp, order, lagrangian="torsion"):
    """Matrix dEL_i / dx^(order)_j at a 6-jet (rows i, columns j), on the unit-speed jet.

    Returns (matrix, scale).
    """
    if order not in (4, 5, 6):
        raise InputError("order must be 4, 5 or 6")
    _check_jet(metric, jp)
    njp, _ = _normalize(metric, jp)
    return _probe_matrix(metric, njp, order, lagrangian), residual_scale(metric, njp)


@dataclass(frozen=True)
class SymbolResult:
    matrix: np.ndarray
    singular_values: np.ndarray
    kernel_residual: float  # |u^T M| / sigma_1
    scale: float

    @property
    def ratios(self):
        s = self.singular_values
        return s[1] / s[0], s[2] / s[0]


def symbol_rank(metric, jp, lagrangian="torsion"):
    """Symbol dEL_i/dx'''^j at the unit-speed 3-jet and its singular values."""
    _check_jet(metric, jp)
    njp, _ = _normalize(metric, jp.truncated())
    M = _probe_matrix(metric, njp, 3, lagrangian)
    sv = np.linalg.svd(M, compute_uv=False)
    u = njp.derivs[0]
    kern = float(np.linalg.norm(u @ M) / sv[0]) if sv[0] > 0 else float("inf")
    return SymbolResult(M, sv, kern, residual_scale(metric, njp))


def tangential_identity(metric, jp, lagrangian="torsion"):
    """(u^i EL_i, scale) on the unit-speed 3-jet."""
    res = el_truncated(metric, jp, lagrangian)
    njp, _ = _normalize(metric, jp)
    return float(njp.derivs[0] @ res.normalized), res.scale


def b_cubic_probe(metric, jp, direction, lagrangian="torsion"):
    """d^3/ds^3 EL(x''' + s d) at s = 0 on the unit-speed 3-jet; zero since EL is quadratic in b."""
    _check_jet(metric, jp)
    njp, _ = _normalize(metric, jp.truncated())
    d = np.asarray(direction, float)

    def inject(alg, Xj):
        Xj = list(Xj)
        s = jets.Jet.variable(alg, 13)
        Xj[3] = Xj[3] + s * d
        return Xj

    els = _el_jet(metric, njp.padded(), extra=((1, 3), inject), lagrangian=lagrangian)
    return np.array([e.partial(0, 0, 0) for e in els]), residual_scale(metric, njp)


# random jets ---------------------------------------------------------------

def random_admissible_jet(metric, rng, center=None, spread=0.3, unit_speed=True, curvature=(0.5, 2.0)):
    """Random nondegenerate (x, u, a) as covariant vectors.

    The part of ``a`` normal to ``u`` has g-norm drawn from ``curvature``
    (relative to |u|^2), the tangential part is normal with deviation 0.5.
    Keeping A away from zero matters: rounding in the EL probes grows like
    a high inverse power of A.
    """
    center = np.zeros(3) if center is None else np.asarray(center, float)
    x = center + spread * rng.uniform(-1, 1, size=3)
    geom = geometry_at(metric, x)
    u = rng.normal(size=3)
    u = u / math.sqrt(norm2(geom, u))
    if not unit_speed:
        u = u * rng.uniform(0.5, 2.0)
    uu = norm2(geom, u)
    n = rng.normal(size=3)
    n = n - (inner(geom, n, u) / uu) * u
    n = n / math.sqrt(norm2(geom, n))
    a = rng.uniform(*curvature) * uu * n + 0.5 * rng.normal() * u
    check_nondegenerate(geom, u, a)
    return x, u, a


def onshell_jetpoint(metric, x, u, a, higher=()):
    geom = geometry_at(metric, x)
    b = conformal_rhs(geom, u, a)
    return jetpoint_from_covariant(metric, x, u, a, b, higher)


# discrete action -----------------------------------------------------------

@dataclass(frozen=True)
class DiscreteCurve:
    """Nodes x_0, ..., x_{N-1} at uniform parameter spacing ``step``."""

    nodes: np.ndarray
    step: float

    def __post_init__(self):
        nodes = np.asarray(self.nodes, float)
        if nodes.ndim != 2 or nodes.shape[1] != 3:
            raise InputError("nodes must have shape (N, 3)")
        if len(nodes) < 7:
            raise StencilTooShort(f"need at least 7 nodes, got {len(nodes)}")
        if not self.step > 0:
            raise InputError("step must be positive")
        object.__setattr__(self, "nodes", nodes)


# central stencils on offsets -2..2
_D1 = np.array([0.0, -0.5, 0.0, 0.5, 0.0])
_D2 = np.array([0.0, 1.0, -2.0, 1.0, 0.0])
_D3 = np.array([-0.5, 1.0, 0.0, -1.0, 0.5])


def _fd_jets(c):
    X = c.nodes
    h = c.step
    n = len(X)
    idx = np.arange(2, n - 2)
    win = np.stack([X[idx + o] for o in range(-2, 3)], axis=0)  # (5, M, 3)
    d1 = np.tensordot(_D1, win, axes=1) / h
    d2 = np.tensordot(_D2, win, axes=1) / h ** 2
    d3 = np.tensordot(_D3, win, axes=1) / h ** 3
    return idx, X[idx], d1, d2, d3


def _lagrangian_values(metric, x, d1, d2, d3, lagrangian, with_gradient):
    if not with_gradient:
        alg = jets.algebra(((1, 0),))
        q = [jets.Jet.constant(alg, v) for v in (x, d1, d2, d3)]
        return _lagrangian(lagrangian, metric, q).value, None
    alg = jets.algebra(((12, 1),))
    q = []
    for m, v in enumerate((x, d1, d2, d3)):
        eps = jets.stack([jets.Jet.variable(alg, 3 * m + i, np.zeros(len(v))) for i in range(3)], axis=-1)
        q.append(jets.Jet.constant(alg, v) + eps)
    L = _lagrangian(lagrangian, metric, q)
    grads = np.stack([L.c[..., alg.var_monomial(k)] for k in range(12)], axis=-1)  # (M, 12)
    return L.value, grads.reshape(-1, 4, 3)


def discrete_action(metric, c, lagrangian="torsion"):
    """Sum over nodes 2..N-3 of L(x_i, D1 x, D2 x, D3 x) h."""
    idx, x, d1, d2, d3 = _fd_jets(c)
    L, _ = _lagrangian_values(metric, x, d1, d2, d3, lagrangian, False)
    return float(np.sum(L) * c.step)


def interior_rows(n):
    """Rows of :func:`action_gradient` whose stencils are complete (4 .. N-5)."""
    return np.arange(4, n - 4)


def action_gradient(metric, c, lagrangian="torsion", method="exact", delta=None):
    """Discrete variational derivative (1/h) dS/dx_n; NaN outside :func:`interior_rows`.

    ``method='exact'`` differentiates L by jets and scatters through the
    stencils; ``method='perturb'`` uses symmetric node perturbations of the
    action with step ``delta``.  The default 1e-3 h^3 keeps the perturbation
    of the third-difference jet small.
    """
    n = len(c.nodes)
    if n < 9:
        raise StencilTooShort("need at least 9 nodes for an interior gradient row")
    h = c.step
    out = np.full((n, 3), np.nan)
    rows = interior_rows(n)
    if method == "perturb":
        delta = 1e-3 * h ** 3 if delta is None else delta
        for r in rows:
            for k in range(3):
                plus = c.nodes.copy()
                minus = c.nodes.copy()
                plus[r, k] += delta
                minus[r, k] -= delta
                sp = discrete_action(metric, DiscreteCurve(plus, h), lagrangian)
                sm = discrete_action(metric, DiscreteCurve(minus, h), lagrangian)
                out[r, k] = (sp - sm) / (2 * delta) / h
        return out
    if method != "exact":
        raise InputError(f"unknown gradient method {method!r}")
    idx, x, d1, d2, d3 = _fd_jets(c)
    _, g = _lagrangian_values(metric, x, d1, d2, d3, lagrangian, True)
    full = np.zeros((n, 3))
    full[idx] += g[:, 0]
    for o in range(-2, 3):
        w = g[:, 1] * _D1[o + 2] / h + g[:, 2] * _D2[o + 2] / h ** 2 + g[:, 3] * _D3[o + 2] / h ** 3
        full[idx + o] += w
    out[rows] = full[rows]
    return out


def gradient_norm(grad, t=None, window=None):
    """Max-norm over the interior rows, optionally only where ``window[0] <= t <= window[1]``.

    A fixed parameter window keeps mesh-refinement studies comparing the
    same stretch of curve.
    """
    g = np.abs(np.asarray(grad))
    if window is not None:
        t = np.asarray(t)
        g = g[(t >= window[0]) & (t <= window[1])]
    return float(np.nanmax(g))


def curve_from_trajectory(traj):
    steps = np.diff(traj.t)
    if np.ptp(steps) > 1e-9 * np.mean(steps):
        raise InputError("trajectory samples must be uniformly spaced")
    return DiscreteCurve(traj.x, float(np.mean(steps)))
