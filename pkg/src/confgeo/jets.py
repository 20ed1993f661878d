"""Truncated multivariate Taylor arithmetic.

A :class:`Jet` is a (possibly tensor-valued) truncated power series in a set
of nilpotent variables.  The variables come in *groups*; each group
``(nvars, cap)`` keeps only the monomials whose total degree in that group's
variables is at most ``cap``.  Two typical layouts::

    Algebra([(3, 6)])              # all partials of order <= 6 in x1, x2, x3
    Algebra([(1, 3), (12, 1)])     # t-series to t^3, first order in 12 directions

Coefficients are stored in Taylor normalization (the coefficient of
``v^alpha`` is ``d^alpha f / alpha!``) along the last axis of ``Jet.c``;
leading axes are tensor components, so one Jet can hold a whole Christoffel
array.  :meth:`Jet.partial` converts to derivative normalization.

Elementary functions (:func:`exp`, :func:`sqrt`, ...) accept plain floats and
arrays as well, so the same code path serves numeric and jet evaluation.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np

from .errors import DomainError

__all__ = [
    "Algebra",
    "algebra",
    "Jet",
    "JetValue",
    "contract",
    "stack",
    "value_of",
    "exp",
    "log",
    "sin",
    "cos",
    "tan",
    "sqrt",
    "arctan",
    "arccos",
    "power",
    "reciprocal",
]


def _group_monomials(nvars, cap):
    out = []
    for degree in range(cap + 1):
        for combo in itertools.combinations_with_replacement(range(nvars), degree):
            e = [0] * nvars
            for v in combo:
                e[v] += 1
            out.append(tuple(e))
    return out


class Algebra:
    """Monomial layout and product tables for a family of jets.

    Use :func:`algebra` to obtain instances; it caches them so that jets built
    from the same groups share one table.
    """

    def __init__(self, groups):
        self.groups = tuple((int(n), int(c)) for n, c in groups)
        if any(n < 0 or c < 0 for n, c in self.groups):
            raise ValueError("group sizes and caps must be non-negative")
        self.nvars = sum(n for n, _ in self.groups)
        self.degree = sum(c for n, c in self.groups if n > 0)
        per_group = [_group_monomials(n, c) for n, c in self.groups]
        self.monomials = [
            tuple(itertools.chain.from_iterable(parts))
            for parts in itertools.product(*per_group)
        ]
        self.size = len(self.monomials)
        self.index = {m: i for i, m in enumerate(self.monomials)}

        exps = np.array(self.monomials, dtype=np.int64).reshape(self.size, self.nvars)
        self.exponents = exps
        bounds = np.cumsum([0] + [n for n, _ in self.groups])
        self.group_slices = [slice(bounds[g], bounds[g + 1]) for g in range(len(self.groups))]
        gdeg = np.stack(
            [exps[:, s].sum(axis=1) for s in self.group_slices] or [np.zeros(self.size, np.int64)],
            axis=1,
        )
        caps = np.array([c for _, c in self.groups] or [0])
        ok = np.all(gdeg[:, None, :] + gdeg[None, :, :] <= caps, axis=2)
        left, right = np.nonzero(ok)
        target = np.array(
            [self.index[tuple(exps[i] + exps[j])] for i, j in zip(left, right)], dtype=np.int64
        )
        order = np.argsort(target, kind="stable")
        self._left = left[order]
        self._right = right[order]
        self._starts = np.searchsorted(target[order], np.arange(self.size))
        self.factorials = np.array(
            [math.prod(math.factorial(k) for k in m) for m in self.monomials], dtype=float
        )
        self._deriv_maps = {}

    def __repr__(self):
        return f"Algebra({list(self.groups)})"

    def var_monomial(self, var):
        e = [0] * self.nvars
        e[var] = 1
        return self.index[tuple(e)]

    def mul(self, a, b):
        prod = a[..., self._left] * b[..., self._right]
        return np.add.reduceat(prod, self._starts, axis=-1)

    def contract(self, subscripts, a, b):
        lhs, out = subscripts.replace(" ", "").split("->")
        sa, sb = lhs.split(",")
        prod = np.einsum(f"{sa}Z,{sb}Z->{out}Z", a[..., self._left], b[..., self._right])
        return np.add.reduceat(prod, self._starts, axis=-1)

    def sub_algebra(self, fixed_groups):
        keep = [g for g in range(len(self.groups)) if g not in fixed_groups]
        return algebra(tuple(self.groups[g] for g in keep)), keep

    def derivative_map(self, var):
        """Index pairs (source, target, factor) for d/dv of the stored polynomial."""
        if var not in self._deriv_maps:
            src, dst, fac = [], [], []
            for i, m in enumerate(self.monomials):
                if m[var] > 0:
                    lowered = list(m)
                    lowered[var] -= 1
                    src.append(i)
                    dst.append(self.index[tuple(lowered)])
                    fac.append(float(m[var]))
            self._deriv_maps[var] = (np.array(src, int), np.array(dst, int), np.array(fac))
        return self._deriv_maps[var]


@lru_cache(maxsize=None)
def algebra(groups):
    """Cached :class:`Algebra` for ``groups`` (a tuple of ``(nvars, cap)`` pairs)."""
    return Algebra(tuple(tuple(g) for g in groups))


def _coeffs_of(alg, other):
    if isinstance(other, Jet):
        if other.alg is not alg:
            raise ValueError(f"cannot combine jets from {alg} and {other.alg}")
        return other.c
    v = np.asarray(other, dtype=float)
    c = np.zeros(v.shape + (alg.size,))
    c[..., 0] = v
    return c


class Jet:
    """Tensor of truncated Taylor polynomials; see the module docstring."""

    __slots__ = ("alg", "c")
    __array_ufunc__ = None

    def __init__(self, alg, coeffs):
        self.alg = alg
        self.c = np.asarray(coeffs, dtype=float)
        if self.c.shape[-1:] != (alg.size,):
            raise ValueError(f"coefficient axis must have length {alg.size}")

    @classmethod
    def constant(cls, alg, value):
        return cls(alg, _coeffs_of(alg, value))

    @classmethod
    def variable(cls, alg, var, value=0.0):
        jet = cls.constant(alg, value)
        e = [0] * alg.nvars
        e[var] = 1
        # an order-0 group has no linear monomial
        if tuple(e) in alg.index:
            jet.c[..., alg.index[tuple(e)]] = 1.0
        return jet

    @property
    def shape(self):
        return self.c.shape[:-1]

    @property
    def ndim(self):
        return self.c.ndim - 1

    @property
    def value(self):
        v = self.c[..., 0]
        return float(v) if v.ndim == 0 else v.copy()

    def __len__(self):
        return self.shape[0]

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        if any(i is Ellipsis for i in idx):
            idx = idx + (slice(None),)
        return Jet(self.alg, self.c[idx])

    def __iter__(self):
        for i in range(self.shape[0]):
            yield self[i]

    def __repr__(self):
        return f"Jet(shape={self.shape}, {self.alg}, value={self.value!r})"

    # arithmetic ---------------------------------------------------------

    def __neg__(self):
        return Jet(self.alg, -self.c)

    def __pos__(self):
        return self

    def __add__(self, other):
        return Jet(self.alg, self.c + _coeffs_of(self.alg, other))

    __radd__ = __add__

    def __sub__(self, other):
        return Jet(self.alg, self.c - _coeffs_of(self.alg, other))

    def __rsub__(self, other):
        return Jet(self.alg, _coeffs_of(self.alg, other) - self.c)

    def __mul__(self, other):
        if isinstance(other, Jet):
            if other.alg is not self.alg:
                raise ValueError(f"cannot combine jets from {self.alg} and {other.alg}")
            return Jet(self.alg, self.alg.mul(self.c, other.c))
        return Jet(self.alg, self.c * np.asarray(other, dtype=float)[..., None])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * reciprocal(other)
        v = np.asarray(other, dtype=float)
        if np.any(v == 0):
            raise DomainError("division by zero")
        return Jet(self.alg, self.c / v[..., None])

    def __rtruediv__(self, other):
        return reciprocal(self) * other

    def __pow__(self, p):
        if isinstance(p, Jet):
            return exp(p * log(self))
        p = float(p)
        if p.is_integer():
            n = int(p)
            if n < 0:
                return reciprocal(self) ** (-n)
            result = Jet.constant(self.alg, np.ones(self.shape))
            base = self
            while n:
                if n & 1:
                    result = result * base
                n >>= 1
                if n:
                    base = base * base
            return result
        return power(self, p)

    def __rpow__(self, base):
        base = np.asarray(base, dtype=float)
        if np.any(base <= 0):
            raise DomainError("power with non-positive base and non-constant exponent")
        return exp(self * np.log(base))

    # coefficient access -------------------------------------------------

    def nilpotent(self):
        c = self.c.copy()
        c[..., 0] = 0.0
        return Jet(self.alg, c)

    def coefficient(self, exponents):
        """Taylor coefficient of the monomial with the given full exponent tuple."""
        v = self.c[..., self.alg.index[tuple(exponents)]]
        return float(v) if v.ndim == 0 else v

    def partial(self, *variables):
        """Mixed partial derivative; ``partial(0, 0)`` is d^2/dv0^2 (0-based)."""
        e = [0] * self.alg.nvars
        for v in variables:
            e[v] += 1
        idx = self.alg.index.get(tuple(e))
        if idx is None:
            raise KeyError(f"derivative {tuple(e)} exceeds the truncation")
        v = self.c[..., idx] * self.alg.factorials[idx]
        return float(v) if v.ndim == 0 else v

    def derivatives(self):
        """Mapping multi-index -> partial derivative (derivative normalization)."""
        d = self.c * self.alg.factorials
        return {m: (float(d[..., i]) if d.ndim == 1 else d[..., i]) for i, m in enumerate(self.alg.monomials)}

    def project(self, fixed):
        """Coefficient of a monomial in some groups, as a jet over the others.

        ``fixed`` maps group index -> exponent tuple for that group.  The
        result lives in the algebra of the remaining groups.
        """
        sub, keep = self.alg.sub_algebra(tuple(sorted(fixed)))
        idx = []
        for mono in sub.monomials:
            full = []
            pos = 0
            for g, (n, _) in enumerate(self.alg.groups):
                if g in fixed:
                    part = tuple(fixed[g])
                    if len(part) != n:
                        raise ValueError(f"group {g} needs {n} exponents")
                    full.extend(part)
                else:
                    full.extend(mono[pos:pos + n])
                    pos += n
            idx.append(self.alg.index.get(tuple(full), -1))
        idx = np.array(idx)
        c = np.where(idx >= 0, self.c[..., np.maximum(idx, 0)], 0.0)
        return Jet(sub, c)

    def differentiate(self, var):
        """d/dv of the truncated polynomial (loses the top-order coefficients)."""
        src, dst, fac = self.alg.derivative_map(var)
        c = np.zeros_like(self.c)
        c[..., dst] = self.c[..., src] * fac
        return Jet(self.alg, c)


JetValue = Jet


def value_of(x):
    return x.value if isinstance(x, Jet) else x


def contract(subscripts, a, b):
    """Two-operand einsum where either operand may be a Jet."""
    if isinstance(a, Jet) and isinstance(b, Jet):
        if a.alg is not b.alg:
            raise ValueError("cannot contract jets from different algebras")
        return Jet(a.alg, a.alg.contract(subscripts, a.c, b.c))
    lhs, out = subscripts.replace(" ", "").split("->")
    sa, sb = lhs.split(",")
    if isinstance(a, Jet):
        return Jet(a.alg, np.einsum(f"{sa}Z,{sb}->{out}Z", a.c, np.asarray(b, float)))
    if isinstance(b, Jet):
        return Jet(b.alg, np.einsum(f"{sa},{sb}Z->{out}Z", np.asarray(a, float), b.c))
    return np.einsum(subscripts, a, b)


def stack(items, axis=0):
    items = list(items)
    alg = next((x.alg for x in items if isinstance(x, Jet)), None)
    if alg is None:
        return np.stack([np.asarray(x, float) for x in items], axis=axis)
    cs = [_coeffs_of(alg, x) for x in items]
    return Jet(alg, np.stack(cs, axis=axis if axis >= 0 else axis - 1))


# elementary functions -----------------------------------------------------

def _falling(p, k):
    out = 1.0
    for j in range(k):
        out *= (p - j) / (j + 1)
    return out


def _series_reciprocal(w, n):
    # w: (..., m) polynomial coefficients; returns 1/w to n terms
    y = np.zeros(w.shape[:-1] + (n,))
    y[..., 0] = 1.0 / w[..., 0]
    for k in range(1, n):
        acc = np.zeros(w.shape[:-1])
        for j in range(1, min(k, w.shape[-1] - 1) + 1):
            acc = acc + w[..., j] * y[..., k - j]
        y[..., k] = -acc / w[..., 0]
    return y


def _series_power(w, p, n):
    y = np.zeros(w.shape[:-1] + (n,))
    y[..., 0] = w[..., 0] ** p
    for k in range(1, n):
        acc = np.zeros(w.shape[:-1])
        for j in range(1, min(k, w.shape[-1] - 1) + 1):
            acc = acc + ((p + 1) * j - k) * w[..., j] * y[..., k - j]
        y[..., k] = acc / (k * w[..., 0])
    return y


def _coeffs_exp(c0, d):
    e = np.exp(c0)
    return np.stack([e / math.factorial(k) for k in range(d + 1)], axis=-1)


def _coeffs_log(c0, d):
    if np.any(c0 <= 0):
        raise DomainError(f"log of non-positive value {float(np.min(c0)):g}")
    out = [np.log(c0)]
    for k in range(1, d + 1):
        out.append((-1.0) ** (k + 1) / (k * c0 ** k))
    return np.stack(out, axis=-1)


def _coeffs_sin(c0, d, phase=0):
    s, c = np.sin(c0), np.cos(c0)
    cycle = [s, c, -s, -c]
    return np.stack([cycle[(k + phase) % 4] / math.factorial(k) for k in range(d + 1)], axis=-1)


def _coeffs_cos(c0, d):
    return _coeffs_sin(c0, d, phase=1)


def _coeffs_tan(c0, d):
    if np.any(np.abs(np.cos(c0)) < 1e-300):
        raise DomainError("tan at a pole")
    f = [np.tan(c0)]
    for k in range(1, d + 1):
        acc = np.ones_like(c0) if k == 1 else np.zeros_like(c0)
        for j in range(k):
            acc = acc + f[j] * f[k - 1 - j]
        f.append(acc / k)
    return np.stack(f, axis=-1)


def _coeffs_power(c0, d, p):
    if np.any(c0 < 0) or (d > 0 and np.any(c0 == 0)) or (p < 0 and np.any(c0 == 0)):
        raise DomainError(f"non-integer power {p!r} of non-positive value {float(np.min(c0)):g}")
    return np.stack([_falling(p, k) * c0 ** (p - k) for k in range(d + 1)], axis=-1)


def _coeffs_sqrt(c0, d):
    if np.any(c0 < 0) or (d > 0 and np.any(c0 == 0)):
        raise DomainError(f"sqrt of non-positive value {float(np.min(c0)):g}")
    return np.stack([_falling(0.5, k) * c0 ** (0.5 - k) for k in range(d + 1)], axis=-1)


def _coeffs_reciprocal(c0, d):
    if np.any(c0 == 0):
        raise DomainError("division by zero")
    return np.stack([(-1.0) ** k / c0 ** (k + 1) for k in range(d + 1)], axis=-1)


def _coeffs_arctan(c0, d):
    f0 = np.arctan(c0)
    if d == 0:
        return f0[..., None]
    w = np.stack([1.0 + c0 ** 2, 2.0 * c0, np.ones_like(c0)], axis=-1)
    deriv = _series_reciprocal(w, d)
    rest = [deriv[..., k - 1] / k for k in range(1, d + 1)]
    return np.stack([f0] + rest, axis=-1)


def _coeffs_arccos(c0, d):
    if np.any(np.abs(c0) > 1) or (d > 0 and np.any(np.abs(c0) >= 1)):
        raise DomainError(f"arccos outside (-1, 1): {np.asarray(c0).ravel()[:4]}")
    f0 = np.arccos(c0)
    if d == 0:
        return f0[..., None]
    w = np.stack([1.0 - c0 ** 2, -2.0 * c0, -np.ones_like(c0)], axis=-1)
    deriv = -_series_power(w, -0.5, d)
    rest = [deriv[..., k - 1] / k for k in range(1, d + 1)]
    return np.stack([f0] + rest, axis=-1)


def _apply(x, coeffs):
    if not isinstance(x, Jet):
        v = coeffs(np.asarray(x, dtype=float), 0)[..., 0]
        return float(v) if v.ndim == 0 else v
    alg = x.alg
    f = coeffs(x.c[..., 0], alg.degree)
    n = x.c.copy()
    n[..., 0] = 0.0
    res = np.zeros(x.c.shape)
    res[..., 0] = f[..., alg.degree]
    for k in range(alg.degree - 1, -1, -1):
        res = alg.mul(res, n)
        res[..., 0] += f[..., k]
    return Jet(alg, res)


def exp(x):
    return _apply(x, _coeffs_exp)


def log(x):
    return _apply(x, _coeffs_log)


def sin(x):
    return _apply(x, _coeffs_sin)


def cos(x):
    return _apply(x, _coeffs_cos)


def tan(x):
    return _apply(x, _coeffs_tan)


def sqrt(x):
    return _apply(x, _coeffs_sqrt)


def arctan(x):
    return _apply(x, _coeffs_arctan)


def arccos(x):
    return _apply(x, _coeffs_arccos)


def reciprocal(x):
    return _apply(x, _coeffs_reciprocal)


def power(x, p):
    """x**p for real p; requires x > 0 (x >= 0 for plain values)."""
    p = float(p)
    return _apply(x, lambda c0, d: _coeffs_power(c0, d, p))
