"""Pointwise Riemannian data and the metric algebra of curve jets.

Conventions
-----------
Christoffel symbols ``Gamma[k, i, j]`` = Γ^k_ij, derivative ``dGamma[k, i, j, l]``
= ∂_l Γ^k_ij, and ``S[k, i, j, l]`` = ∂_l Γ^k_ij + Γ^k_lp Γ^p_ij (the tensor
that shows up in the third derivative of a curve).  Riemann is::

    R^k_lij = ∂_i Γ^k_jl - ∂_j Γ^k_il + Γ^k_ip Γ^p_jl - Γ^k_jp Γ^p_il

stored as ``riemann[k, l, i, j]``, with Ric_lj = R^k_lkj (positive on spheres)
and Schouten P = Ric - (R/4) g.  With these conventions
``S[k,i,j,l] - S[k,i,l,j] == riemann[k,i,l,j]``.

The g-cross product is (v x w)^k = g^{kl} sqrt|g| eps_lij v^i w^j and the
volume V(u, a, b) = sqrt|g| eps_ijk u^i a^j b^k is signed.

Every function below works on plain arrays and on :class:`~confgeo.jets.Jet`
tensors alike, and broadcasts over leading batch axes.
"""

from __future__ import annotations

from functools import cached_property, lru_cache

import numpy as np

from . import jets
from .dsl import MAX_ORDER
from .errors import DegenerateMetric, NegativeGram, OrderTooHigh

EPS = np.zeros((3, 3, 3))
for _i, _j, _k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    EPS[_i, _j, _k] = 1.0
    EPS[_i, _k, _j] = -1.0

DEGENERATE_RTOL = 1e-12


def _ein(sub, a, b):
    return jets.contract(sub, a, b)


def _det3(m):
    return (
        m[..., 0, 0] * (m[..., 1, 1] * m[..., 2, 2] - m[..., 1, 2] * m[..., 2, 1])
        - m[..., 0, 1] * (m[..., 1, 0] * m[..., 2, 2] - m[..., 1, 2] * m[..., 2, 0])
        + m[..., 0, 2] * (m[..., 1, 0] * m[..., 2, 1] - m[..., 1, 1] * m[..., 2, 0])
    )


def _inv3(m, det):
    rows = []
    for i in range(3):
        row = []
        for j in range(3):
            # cofactor of (j, i)
            r = [k for k in range(3) if k != j]
            c = [k for k in range(3) if k != i]
            minor = m[..., r[0], c[0]] * m[..., r[1], c[1]] - m[..., r[0], c[1]] * m[..., r[1], c[0]]
            row.append(minor if (i + j) % 2 == 0 else -minor)
        rows.append(jets.stack(row, axis=-1))
    adj = jets.stack(rows, axis=-2)
    if isinstance(det, jets.Jet):
        return adj * jets.reciprocal(det)[..., None, None]
    return adj / np.asarray(det)[..., None, None]


def check_metric(g, riemannian=True):
    """Raise :class:`DegenerateMetric` for singular or (if declared) indefinite ``g``."""
    g = np.asarray(jets.value_of(g))
    det = np.linalg.det(g)
    scale = np.linalg.norm(g, axis=(-2, -1)) ** 3
    if np.any(~np.isfinite(g)) or np.any(np.abs(det) < DEGENERATE_RTOL * scale):
        raise DegenerateMetric(f"metric is degenerate (det g = {np.min(np.abs(det)):.3e})")
    if riemannian:
        minors = (g[..., 0, 0], np.linalg.det(g[..., :2, :2]), det)
        if any(np.any(m <= 0) for m in minors):
            raise DegenerateMetric("metric declared Riemannian is not positive definite")


class PointGeometry:
    """Metric, connection and curvature at one point (or a batch of points).

    Attributes hold plain arrays for :func:`geometry_at` and jets for
    :func:`jet_geometry`.  Curvature fields are computed on first access.
    """

    def __init__(self, point, g, dg, ddg, riemannian=True):
        self.point = point
        self.g = g
        self.riemannian = riemannian
        det = _det3(g)
        sign = np.sign(jets.value_of(det))
        self.det_g = det
        self.g_inv = _inv3(g, det)
        self.sqrt_det_g = jets.sqrt(det * sign)
        ginv = self.g_inv
        # Gamma_{m,ij} = 1/2 (d_i g_jm + d_j g_im - d_m g_ij), dg[..., k, i, j] = d_k g_ij
        low = 0.5 * (_swap(dg, "ijm->mij") + _swap(dg, "jim->mij") - dg)
        self.Gamma = _ein("...km,...mij->...kij", ginv, low)
        dlow = 0.5 * (_swap(ddg, "lijm->lmij") + _swap(ddg, "ljim->lmij") - ddg)  # [l, m, i, j]
        dginv = -_ein("...ka,...lab->...lkb", ginv, _ein("...lab,...bm->...lam", dg, ginv))
        self.dGamma = _ein("...lkm,...mij->...kijl", dginv, low) + _ein("...km,...lmij->...kijl", ginv, dlow)
        self.S = self.dGamma + _ein("...klp,...pij->...kijl", self.Gamma, self.Gamma)

    @cached_property
    def riemann(self):
        dG, G = self.dGamma, self.Gamma
        return (
            _swap(dG, "kjli->klij")
            - _swap(dG, "kilj->klij")
            + _ein("...kip,...pjl->...klij", G, G)
            - _ein("...kjp,...pil->...klij", G, G)
        )

    @cached_property
    def ricci(self):
        r = self.riemann
        return sum(r[..., k, :, k, :] for k in range(3))

    @cached_property
    def scalar_R(self):
        return _ein("...ij,...ij->...", self.g_inv, self.ricci)

    @cached_property
    def schouten(self):
        return self.ricci - 0.25 * _scalar_times(self.scalar_R, self.g)

    @property
    def P(self):
        return self.schouten


def _swap(t, spec):
    """Permute trailing tensor axes with einsum semantics: ``'kij->ijk'`` gives out[i,j,k] = t[k,i,j]."""
    src, dst = spec.split("->")
    perm = [src.index(ch) for ch in dst]
    if isinstance(t, jets.Jet):
        nb = t.c.ndim - 1 - len(src)
        axes = list(range(nb)) + [nb + p for p in perm] + [t.c.ndim - 1]
        return jets.Jet(t.alg, np.transpose(t.c, axes))
    t = np.asarray(t)
    nb = t.ndim - len(src)
    return np.transpose(t, list(range(nb)) + [nb + p for p in perm])


def _scalar_times(s, t, extra=2):
    idx = (Ellipsis,) + (None,) * extra
    if isinstance(s, jets.Jet):
        return t * s[idx] if isinstance(t, jets.Jet) else s[idx] * np.asarray(t)
    return np.asarray(s)[idx] * t


def geometry_at(metric, point):
    """Numeric :class:`PointGeometry` of ``metric`` at ``point``.

    ``point`` may carry leading batch axes.
    """
    point = np.asarray(point, dtype=float)
    if point.shape == (3,) and metric.is_constant:
        return _constant_geometry(metric)
    tay = metric.taylor(point, 2)
    g = tay.c[..., 0]
    check_metric(g, metric.riemannian)
    dg = np.stack([tay.partial(k) for k in range(3)], axis=-3)
    ddg = np.stack([np.stack([tay.partial(k, l) for l in range(3)], axis=-3) for k in range(3)], axis=-4)
    return PointGeometry(point, g, dg, ddg, metric.riemannian)


@lru_cache(maxsize=64)
def _constant_geometry(metric):
    geom = geometry_at(metric, np.zeros((1, 3)))
    out = PointGeometry.__new__(PointGeometry)
    out.point = np.zeros(3)
    out.riemannian = geom.riemannian
    for name in ("g", "det_g", "g_inv", "sqrt_det_g", "Gamma", "dGamma", "S", "schouten"):
        value = np.asarray(getattr(geom, name))[0]
        if np.ndim(value):
            value.flags.writeable = False
        else:
            value = float(value)
        out.__dict__[name] = value
    return out


def _nilpotent_powers(delta, max_degree):
    """Products delta^alpha over the monomials of ``Algebra([(3, d)])``, d <= max_degree.

    Returns (powers, N) with N the largest degree at which some power is
    nonzero.  ``powers`` is indexed like ``jets.algebra(((3, N),)).monomials``.
    """
    xalg = jets.algebra(((3, max_degree),))
    pw = {}
    top = 0
    for mono in xalg.monomials:
        deg = sum(mono)
        if deg == 0:
            pw[mono] = None
            continue
        if deg > top + 1:
            break
        v = next(i for i, e in enumerate(mono) if e)
        prev = list(mono)
        prev[v] -= 1
        prev = tuple(prev)
        p = delta[v] if pw[prev] is None else pw[prev] * delta[v]
        pw[mono] = p
        if np.any(p.c != 0):
            top = deg
    return pw, top


def _compose(poly, pw, N, alg, batch):
    """Evaluate the Taylor polynomial ``poly`` (a jet in x) at x0 + delta."""
    xalg = poly.alg
    tshape = poly.shape[len(batch):]
    c = poly.c.reshape(batch + (-1, xalg.size))
    monos = [m for m in xalg.monomials if sum(m) <= N]
    out = np.zeros(batch + (c.shape[-2], alg.size))
    out[..., 0] = c[..., 0]
    for m in monos[1:]:
        coef = c[..., xalg.index[m]]
        out = out + coef[..., None] * pw[m].c[..., None, :]
    return jets.Jet(alg, out.reshape(batch + tshape + (alg.size,)))


def jet_geometry(metric, x):
    """Geometry along a jet-valued point ``x`` (Jet of shape (..., 3)).

    The metric's Taylor polynomial at ``x.value`` is composed with the
    nilpotent part of ``x``; the result is exact in the jet algebra of ``x``.
    """
    alg = x.alg
    batch = x.shape[:-1]
    x0 = np.asarray(x.value)
    delta = [x[..., i].nilpotent() for i in range(3)]
    pw, N = _nilpotent_powers(delta, MAX_ORDER)
    order = N + 2
    if order > MAX_ORDER:
        raise OrderTooHigh(f"jet geometry needs metric derivatives of order {order} > {MAX_ORDER}")
    tay = metric.taylor(x0, order)
    check_metric(tay.c[..., 0], metric.riemannian)
    d1 = [tay.differentiate(k) for k in range(3)]
    d2 = [[d1[k].differentiate(l) for l in range(3)] for k in range(3)]
    g = _compose(tay, pw, N, alg, batch)
    dg = jets.stack([_compose(d, pw, N, alg, batch) for d in d1], axis=-3)
    ddg = jets.stack(
        [jets.stack([_compose(d, pw, N, alg, batch) for d in row], axis=-3) for row in d2], axis=-4
    )
    return PointGeometry(x, g, dg, ddg, metric.riemannian)


# metric algebra ----------------------------------------------------------

def inner(geom, v, w):
    """g(v, w) = g_ij v^i w^j."""
    return _ein("...i,...i->...", _ein("...ij,...j->...i", geom.g, w), v)


def norm2(geom, v):
    return inner(geom, v, v)


def lower(geom, v):
    return _ein("...ij,...j->...i", geom.g, v)


def raise_index(geom, w):
    return _ein("...ij,...j->...i", geom.g_inv, w)


def cross(geom, v, w):
    """g-cross product (v x w)^k = g^{kl} sqrt|g| eps_lij v^i w^j."""
    low = _ein("...li,...i->...l", _ein("lij,...j->...li", EPS, w), v)
    return raise_index(geom, _scalar_times(geom.sqrt_det_g, low, 1))


def gram2(geom, u, a):
    """|u|^2 |a|^2 - g(u, a)^2."""
    return norm2(geom, u) * norm2(geom, a) - inner(geom, u, a) ** 2


def area_A(geom, u, a):
    """A = sqrt(|u|^2 |a|^2 - g(u, a)^2)."""
    G = gram2(geom, u, a)
    gv = np.asarray(jets.value_of(G))
    scale = np.asarray(jets.value_of(norm2(geom, u) * norm2(geom, a)))
    if np.any(gv < -1e-13 * np.abs(scale)):
        raise NegativeGram(f"Gram determinant of (u, a) is negative ({np.min(gv):.3e})")
    if isinstance(G, jets.Jet):
        return jets.sqrt(G)
    return np.sqrt(np.maximum(G, 0.0)) if np.ndim(G) else float(np.sqrt(max(G, 0.0)))


def volume_V(geom, u, a, b):
    """Signed V = sqrt|g| eps_ijk u^i a^j b^k."""
    return geom.sqrt_det_g * _triple(u, a, b)


def _triple(u, a, b):
    m = _ein("ijk,...k->...ij", EPS, b)
    return _ein("...i,...i->...", _ein("...ij,...j->...i", m, a), u)


def gamma_apply(geom, v, w):
    """Γ^k_ij v^i w^j."""
    return _ein("...ki,...i->...k", _ein("...kij,...j->...ki", geom.Gamma, w), v)


def s_apply(geom, u):
    """S^k_ijl u^i u^j u^l."""
    t = _ein("...kijl,...l->...kij", geom.S, u)
    return _ein("...ki,...i->...k", _ein("...kij,...j->...ki", t, u), u)


def schouten_sharp(geom, u):
    """P^sharp u, the vector with components g^{ki} P_ij u^j."""
    return raise_index(geom, _ein("...ij,...j->...i", geom.schouten, u))


def schouten_uu(geom, u):
    return _ein("...i,...i->...", _ein("...ij,...j->...i", geom.schouten, u), u)


def covariant_jets(geom, xd1, xd2, xd3):
    """Covariant (u, a, b) from coordinate derivatives of a curve.

    u = x', a = x'' + Γ(x', x'), b = x''' + 3 Γ(x', x'') + S(x', x', x').
    """
    u = xd1
    a = xd2 + gamma_apply(geom, xd1, xd1)
    b = xd3 + 3.0 * gamma_apply(geom, xd1, xd2) + s_apply(geom, xd1)
    return u, a, b


def coordinate_jets(geom, u, a, b):
    """Inverse of :func:`covariant_jets`: coordinate (x', x'', x''')."""
    xd2 = a - gamma_apply(geom, u, u)
    xd3 = b - 3.0 * gamma_apply(geom, u, xd2) - s_apply(geom, u)
    return u, xd2, xd3
