"""Conformal geodesic equation, its residuals, integrators and reparametrization.

The state of a curve is ``(x, u, a)`` with u = dx/dt and the covariant
acceleration a = ∇_u u.  The third-order equation prescribes b = ∇_u a;
in coordinates the first-order system is::

    x' = u,    u' = a - Γ(u, u),    a' = b - Γ(u, a).

Two modes are supported.  ``parametrized`` integrates the full equation::

    b = 3 g(u,a) a/|u|^2 - 3|a|^2/(2|u|^2) u + |u|^2 P#u - 2 P(u,u) u

in which t is a projective parameter.  ``constrained`` integrates the same
unparametrized curves at unit speed (|u| = 1, g(u, a) = 0) with::

    b = -|a|^2 u + P#u - P(u,u) u

which is ``constrained_rhs`` plus the tangential term needed to keep both
constraints invariant.  The two fields have identical normal parts.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize
from scipy.interpolate import BPoly

from . import dsl, jets
from .errors import (
    ConstraintDrift,
    ConstraintViolated,
    InputError,
    NonMonotone,
    NullVelocity,
    StepFailure,
)
from .geometry import (
    coordinate_jets,
    covariant_jets,
    cross,
    gamma_apply,
    geometry_at,
    inner,
    norm2,
    schouten_sharp,
    schouten_uu,
)

MODES = ("parametrized", "constrained")
DRIFT_LIMIT = 1e-5
NULL_RTOL = 1e-12


def check_velocity(geom, u):
    """Raise :class:`NullVelocity` when |u|^2 vanishes relative to the scale of g and u."""
    n2 = norm2(geom, u)
    scale = np.linalg.norm(geom.g) * float(np.dot(u, u))
    if scale == 0.0 or abs(n2) <= NULL_RTOL * scale:
        raise NullVelocity(f"velocity is null (|u|^2 = {n2:.3e})")
    return n2


def conformal_rhs(geom, u, a):
    """b = ∇_u a prescribed by the conformal geodesic equation."""
    u = np.asarray(u, float)
    a = np.asarray(a, float)
    uu = check_velocity(geom, u)
    ua = inner(geom, u, a)
    aa = norm2(geom, a)
    return (
        3.0 * ua / uu * a
        - 1.5 * aa / uu * u
        + uu * schouten_sharp(geom, u)
        - 2.0 * schouten_uu(geom, u) * u
    )


def check_constraints(geom, u, a, tol=1e-6):
    errs = []
    uu = norm2(geom, u)
    ua = inner(geom, u, a)
    if abs(uu - 1.0) > tol:
        errs.append(f"|u|^2 - 1 = {uu - 1.0:.3e}")
    if abs(ua) > tol:
        errs.append(f"g(u, a) = {ua:.3e}")
    if errs:
        raise ConstraintViolated("unit-speed constraints violated: " + ", ".join(errs))


def constrained_rhs(geom, u, a, tol=1e-6):
    """b = -1/2 |a|^2 u + P#u, valid only at |u| = 1 and g(u, a) = 0."""
    u = np.asarray(u, float)
    a = np.asarray(a, float)
    check_velocity(geom, u)
    check_constraints(geom, u, a, tol)
    return -0.5 * norm2(geom, a) * u + schouten_sharp(geom, u)


def unit_speed_rhs(geom, u, a):
    """Constraint-preserving field -|a|^2 u + P#u - P(u,u) u (used by constrained mode).

    Equals :func:`constrained_rhs` with its u-component replaced so that
    d/dt |u|^2 = 0 and d/dt g(u, a) = 0 hold identically on the constraint set.
    """
    u = np.asarray(u, float)
    a = np.asarray(a, float)
    uu = check_velocity(geom, u)
    b4 = -0.5 * norm2(geom, a) * u + schouten_sharp(geom, u)
    return b4 - (norm2(geom, a) + inner(geom, u, b4)) / uu * u


def tangential_residual(geom, u, a, b):
    """g(u, b) - [3 g(u,a)^2/|u|^2 - 3/2 |a|^2 - |u|^2 P(u,u)]."""
    uu = check_velocity(geom, np.asarray(u, float))
    ua = inner(geom, u, a)
    return inner(geom, u, b) - (3.0 * ua ** 2 / uu - 1.5 * norm2(geom, a) - uu * schouten_uu(geom, u))


def normal_residual(geom, u, a, b):
    """u x b - 3 g(u,a)/|u|^2 u x a + |u|^2 (P#u x u), with the g-cross product."""
    uu = check_velocity(geom, np.asarray(u, float))
    ua = inner(geom, u, a)
    return cross(geom, u, b) - 3.0 * ua / uu * cross(geom, u, a) + uu * cross(geom, schouten_sharp(geom, u), u)


def rhs_for(mode):
    if mode == "parametrized":
        return conformal_rhs
    if mode == "constrained":
        return unit_speed_rhs
    raise InputError(f"unknown mode {mode!r}; expected one of {MODES}")


# states and trajectories ---------------------------------------------------

@dataclass(frozen=True)
class CurveState:
    t: float
    x: np.ndarray
    u: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        for name in ("x", "u", "a"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (3,):
                raise InputError(f"{name} must be a 3-vector")
            object.__setattr__(self, name, v)
        object.__setattr__(self, "t", float(self.t))


@dataclass(frozen=True)
class IntegratorConfig:
    """Integrator settings.

    Parameters
    ----------
    method : {'rk4-fixed', 'rkf45-adaptive'}
    step : float
        Step for rk4 (rounded down so it divides the interval) and initial
        step for rkf45.
    rtol, atol : float
        Local error tolerances for rkf45.
    max_steps : int
    constraint_projection : bool
        Constrained mode only: project back to |u| = 1, g(u, a) = 0 after
        every step.
    """

    method: str = "rkf45-adaptive"
    step: float = 0.01
    rtol: float = 1e-11
    atol: float = 1e-12
    max_steps: int = 200000
    constraint_projection: bool = True

    def __post_init__(self):
        if self.method not in ("rk4-fixed", "rkf45-adaptive"):
            raise InputError(f"unknown integrator method {self.method!r}")
        if not (self.step > 0 and self.rtol > 0 and self.atol > 0 and self.max_steps > 0):
            raise InputError("integrator step, tolerances and max_steps must be positive")


@dataclass
class Trajectory:
    """Samples of an integrated or sampled curve.

    Arrays have one row per sample; ``b`` is the covariant third jet attached
    to each sample, ``drift`` the constraint drift (zero outside constrained
    mode) and ``steps`` the step taken to reach each sample (0 for the first).
    """

    metric: dsl.MetricSpec
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    a: np.ndarray
    b: np.ndarray
    mode: str = "parametrized"
    drift: np.ndarray = None
    steps: np.ndarray = None

    def __post_init__(self):
        n = len(self.t)
        if self.drift is None:
            self.drift = np.zeros(n)
        if self.steps is None:
            self.steps = np.concatenate([[0.0], np.diff(self.t)])
        if n > 1 and np.any(np.diff(self.t) <= 0):
            raise InputError("trajectory parameter values must be strictly increasing")

    def __len__(self):
        return len(self.t)

    def state(self, i):
        return CurveState(self.t[i], self.x[i], self.u[i], self.a[i])

    def geometries(self):
        return [geometry_at(self.metric, p) for p in self.x]

    # export ---------------------------------------------------------------

    COLUMNS = ("t", "x1", "x2", "x3", "u1", "u2", "u3", "a1", "a2", "a3", "b1", "b2", "b3", "drift")

    def table(self):
        return np.column_stack([self.t, self.x, self.u, self.a, self.b, self.drift])

    def to_csv(self, extra=None):
        """CSV text; ``extra`` is an optional mapping of additional columns."""
        cols = list(self.COLUMNS)
        data = self.table()
        if extra:
            cols += list(extra)
            data = np.column_stack([data] + [np.asarray(v, float) for v in extra.values()])
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for row in data:
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    def to_dict(self, extra=None):
        d = {
            "schema": 1,
            "mode": self.mode,
            "metric": self.metric.to_dict(),
            "columns": list(self.COLUMNS),
        }
        for name, col in zip(self.COLUMNS, self.table().T):
            d[name] = col.tolist()
        if extra:
            d["columns"] += list(extra)
            for k, v in extra.items():
                d[k] = np.asarray(v, float).tolist()
        return d

    def to_json(self, extra=None):
        return json.dumps(self.to_dict(extra), indent=1, sort_keys=True)

    @classmethod
    def from_table(cls, metric, data, mode="parametrized"):
        data = np.asarray(data, float)
        if data.ndim != 2 or data.shape[1] < 14:
            raise InputError("trajectory table needs 14 columns t,x1..x3,u1..u3,a1..a3,b1..b3,drift")
        return cls(metric, data[:, 0], data[:, 1:4], data[:, 4:7], data[:, 7:10], data[:, 10:13], mode, data[:, 13])

    @classmethod
    def from_csv(cls, text, metric, mode="parametrized"):
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [c.strip() for c in rows[0][:14]] != list(cls.COLUMNS):
            raise InputError("CSV header must start with " + ",".join(cls.COLUMNS))
        try:
            data = [[float(v) for v in r[:14]] for r in rows[1:] if r]
        except ValueError as exc:
            raise InputError(f"bad number in trajectory CSV: {exc}") from None
        return cls.from_table(metric, data, mode)

    @classmethod
    def from_dict(cls, d, metric=None):
        if d.get("schema") != 1:
            raise InputError("unsupported trajectory schema")
        metric = metric or dsl.metric_from_mapping(d["metric"])
        data = np.column_stack([np.asarray(d[c], float) for c in cls.COLUMNS])
        return cls.from_table(metric, data, d.get("mode", "parametrized"))


# integration ---------------------------------------------------------------

def state_derivative(metric, mode, y):
    """Right-hand side of the first-order system; y = (x, u, a) flattened."""
    x, u, a = y[:3], y[3:6], y[6:9]
    geom = geometry_at(metric, x)
    b = rhs_for(mode)(geom, u, a)
    return np.concatenate([u, a - gamma_apply(geom, u, u), b - gamma_apply(geom, u, a)])


_RKF_A = (
    (),
    (1 / 4,),
    (3 / 32, 9 / 32),
    (1932 / 2197, -7200 / 2197, 7296 / 2197),
    (439 / 216, -8.0, 3680 / 513, -845 / 4104),
    (-8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40),
)
_RKF_C = (0.0, 1 / 4, 3 / 8, 12 / 13, 1.0, 1 / 2)
_RKF_B5 = (16 / 135, 0.0, 6656 / 12825, 28561 / 56430, -9 / 50, 2 / 55)
_RKF_B4 = (25 / 216, 0.0, 1408 / 2565, 2197 / 4104, -1 / 5, 0.0)


def _rkf45_step(f, t, y, h):
    k = []
    for c, row in zip(_RKF_C, _RKF_A):
        yi = y + h * sum((w * kk for w, kk in zip(row, k)), np.zeros_like(y))
        k.append(f(t + c * h, yi))
    y5 = y + h * sum(w * kk for w, kk in zip(_RKF_B5, k))
    y4 = y + h * sum(w * kk for w, kk in zip(_RKF_B4, k))
    return y5, y5 - y4


def _rk4_step(f, t, y, h):
    k1 = f(t, y)
    k2 = f(t + h / 2, y + h / 2 * k1)
    k3 = f(t + h / 2, y + h / 2 * k2)
    k4 = f(t + h, y + h * k3)
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _drift(metric, y):
    geom = geometry_at(metric, y[:3])
    u, a = y[3:6], y[6:9]
    return max(abs(norm2(geom, u) - 1.0), abs(inner(geom, u, a)))


def project_constraints(metric, y):
    """Normalize u, then remove the u-component of a."""
    geom = geometry_at(metric, y[:3])
    u, a = y[3:6], y[6:9]
    u = u / math.sqrt(norm2(geom, u))
    a = a - inner(geom, u, a) * u
    return np.concatenate([y[:3], u, a])


def integrate(metric, s0, t_end, cfg=None, mode="parametrized", output_every=1, t_eval=None):
    """Integrate the conformal geodesic equation from ``s0`` to ``t_end``.

    Parameters
    ----------
    metric : MetricSpec
    s0 : CurveState
    t_end : float
    cfg : IntegratorConfig, optional
    mode : {'parametrized', 'constrained'}
    output_every : int
        Keep every n-th accepted step (the endpoint is always kept).
    t_eval : array_like, optional
        rkf45 only: increasing output times in (s0.t, t_end]; steps are
        shortened to land on them and only these samples are kept.

    Returns
    -------
    Trajectory
    """
    cfg = cfg or IntegratorConfig()
    rhs = rhs_for(mode)
    if not t_end > s0.t:
        raise InputError("t_end must exceed the initial parameter")
    y = np.concatenate([s0.x, s0.u, s0.a])
    check_velocity(geometry_at(metric, s0.x), s0.u)
    if mode == "constrained":
        check_constraints(geometry_at(metric, s0.x), s0.u, s0.a)

    def f(t, yy):
        return state_derivative(metric, mode, yy)

    ts, ys, drifts, hs = [s0.t], [y], [_drift(metric, y) if mode == "constrained" else 0.0], [0.0]

    def accept(t, y, h, keep):
        d = 0.0
        if mode == "constrained":
            d = _drift(metric, y)
            if cfg.constraint_projection:
                y = project_constraints(metric, y)
            elif d > DRIFT_LIMIT:
                raise ConstraintDrift(f"constraint drift {d:.3e} exceeds {DRIFT_LIMIT:g} at t = {t:.6g}")
        if keep:
            ts.append(t)
            ys.append(y)
            drifts.append(d)
            hs.append(h)
        return y

    t = s0.t
    span = t_end - s0.t
    if cfg.method == "rk4-fixed":
        if t_eval is not None:
            raise InputError("t_eval is only supported by rkf45-adaptive; use output_every with rk4")
        n = max(1, math.ceil(span / cfg.step - 1e-9))
        if n > cfg.max_steps:
            raise StepFailure(f"{n} fixed steps exceed max_steps = {cfg.max_steps}")
        h = span / n
        for i in range(n):
            y = _rk4_step(f, t, y, h)
            t = s0.t + (i + 1) * h
            y = accept(t, y, h, keep=(i == n - 1 or (i + 1) % output_every == 0))
    else:
        if t_eval is None:
            targets, keep_all = [t_end], True
        else:
            targets = [float(v) for v in np.asarray(t_eval, float)]
            if any(b <= a for a, b in zip([s0.t] + targets, targets)) or targets[-1] > t_end:
                raise InputError("t_eval must increase strictly inside (t0, t_end]")
            if targets[-1] < t_end:
                targets.append(t_end)
            keep_all = False
        h = min(cfg.step, span)
        hmin = 1e-13 * max(1.0, abs(t_end))
        steps = 0
        accepted = 0
        for target in targets:
            while t < target:
                if steps >= cfg.max_steps:
                    raise StepFailure(f"max_steps = {cfg.max_steps} reached at t = {t:.6g}")
                last = t + h >= target - 1e-15 * max(1.0, abs(target))
                h_try = target - t if last else h
                y_new, err = _rkf45_step(f, t, y, h_try)
                scale = cfg.atol + cfg.rtol * np.maximum(np.abs(y), np.abs(y_new))
                enorm = float(np.max(np.abs(err) / scale)) if np.all(np.isfinite(y_new)) else np.inf
                steps += 1
                if enorm <= 1.0:
                    t = target if last else t + h_try
                    accepted += 1
                    keep = last or (keep_all and accepted % output_every == 0)
                    y = accept(t, y_new, h_try, keep)
                    factor = 5.0 if enorm == 0 else min(5.0, max(0.2, 0.9 * enorm ** -0.2))
                    h = max(h, h_try) * factor if last else h_try * factor
                else:
                    h = h_try * (max(0.1, 0.9 * enorm ** -0.25) if np.isfinite(enorm) else 0.1)
                    if h < hmin:
                        raise StepFailure(f"step size underflow at t = {t:.6g}")

    ts = np.array(ts)
    ys = np.array(ys)
    b = np.array([rhs(geometry_at(metric, yy[:3]), yy[3:6], yy[6:9]) for yy in ys])
    return Trajectory(metric, ts, ys[:, :3], ys[:, 3:6], ys[:, 6:9], b, mode, np.array(drifts), np.array(hs))


def reverse_state(s):
    """State of the same curve traversed backwards (u -> -u; a unchanged)."""
    return CurveState(0.0, s.x, -s.u, s.a)


def geodesic_residuals(traj):
    """Per-sample (|tangential|, ||normal|| / (||u|| ||b|| + 1)) in the trajectory's metric."""
    tan = np.empty(len(traj))
    nor = np.empty(len(traj))
    for i, geom in enumerate(traj.geometries()):
        u, a, b = traj.u[i], traj.a[i], traj.b[i]
        tan[i] = abs(tangential_residual(geom, u, a, b))
        nor[i] = np.linalg.norm(normal_residual(geom, u, a, b)) / (
            math.sqrt(abs(norm2(geom, u)) * abs(norm2(geom, b))) + 1.0
        )
    return tan, nor


# sampled curves ------------------------------------------------------------

def curve_trajectory(metric, components, t_values):
    """Exact covariant jets of the parametric curve t -> (c1(t), c2(t), c3(t)).

    ``components`` are expressions in the variable ``t``.
    """
    t_values = np.asarray(t_values, dtype=float)
    d = np.stack([dsl.eval_univariate(c, t_values, 3) for c in components], axis=-2)  # (N, 3, 4)
    x, xd1, xd2, xd3 = (d[..., k] for k in range(4))
    u = np.empty_like(x)
    a = np.empty_like(x)
    b = np.empty_like(x)
    for i in range(len(t_values)):
        geom = geometry_at(metric, x[i])
        u[i], a[i], b[i] = covariant_jets(geom, xd1[i], xd2[i], xd3[i])
    return Trajectory(metric, t_values, x, u, a, b, mode="curve")


# reparametrization ---------------------------------------------------------

def _invert(h, t_values):
    """s_i with h(s_i) = t_i for increasing h."""
    lo, hi = float(t_values[0]), float(t_values[-1])
    width = max(1.0, hi - lo)
    a, b = lo - width, hi + width
    for _ in range(60):
        if h(a) <= lo and h(b) >= hi:
            break
        a -= width
        b += width
        width *= 2
    else:
        raise NonMonotone("could not bracket the inverse of the reparametrization")
    return np.array([optimize.brentq(lambda s: h(s) - t, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps) for t in t_values])


def _h_derivatives(h_expr, s):
    d = dsl.eval_univariate(h_expr, s, 3)
    if np.any(d[..., 1] <= 0):
        raise NonMonotone("reparametrization derivative h' must be positive")
    return d


def reparametrize(traj, h, method="exact", s_values=None):
    """Resample ``traj`` along the new parameter s with t = h(s).

    Parameters
    ----------
    traj : Trajectory
    h : str or Expression
        Increasing map in the variable ``t`` (read as s).
    method : {'exact', 'interpolate'}
        ``exact`` evaluates at s_i = h^-1(t_i), so the points are the original
        samples and the new jets follow from the chain rule::

            u_s = h' u,  a_s = h'^2 a + h'' u,  b_s = h'^3 b + 3 h' h'' a + h''' u

        ``interpolate`` evaluates at arbitrary ``s_values`` using a Hermite
        interpolant of x through its first three derivatives at the samples.
    """
    h_expr = dsl.parse_expression(h, variables=("t",))

    def hfun(s):
        return float(dsl.eval_univariate(h_expr, s, 0)[0])

    metric = traj.metric
    if method == "exact":
        s = _invert(hfun, traj.t)
        # h' at the samples alone can miss a turning point between them
        _h_derivatives(h_expr, np.linspace(s[0], s[-1], 20 * len(s)))
        d = _h_derivatives(h_expr, s)
        h1, h2, h3 = (d[:, k][:, None] for k in (1, 2, 3))
        u = h1 * traj.u
        a = h1 ** 2 * traj.a + h2 * traj.u
        b = h1 ** 3 * traj.b + 3 * h1 * h2 * traj.a + h3 * traj.u
        return Trajectory(metric, s, traj.x.copy(), u, a, b, traj.mode, traj.drift.copy())
    if method != "interpolate":
        raise InputError(f"unknown reparametrization method {method!r}")
    if s_values is None:
        s_ends = _invert(hfun, traj.t[[0, -1]])
        s_values = np.linspace(s_ends[0], s_ends[1], len(traj))
    s_values = np.asarray(s_values, float)
    d = _h_derivatives(h_expr, s_values)
    tq = d[:, 0]
    if tq.min() < traj.t[0] - 1e-12 or tq.max() > traj.t[-1] + 1e-12:
        raise InputError("s_values map outside the trajectory parameter range")
    tq = np.clip(tq, traj.t[0], traj.t[-1])
    X = hermite_derivatives(traj, tq)  # (4, N, 3)
    h1, h2, h3 = (d[:, k][:, None] for k in (1, 2, 3))
    y1 = h1 * X[1]
    y2 = h2 * X[1] + h1 ** 2 * X[2]
    y3 = h3 * X[1] + 3 * h1 * h2 * X[2] + h1 ** 3 * X[3]
    u = np.empty_like(y1)
    a = np.empty_like(y1)
    b = np.empty_like(y1)
    for i in range(len(s_values)):
        geom = geometry_at(metric, X[0][i])
        u[i], a[i], b[i] = covariant_jets(geom, y1[i], y2[i], y3[i])
    return Trajectory(metric, s_values, X[0], u, a, b, traj.mode)


def hermite_derivatives(traj, tq):
    """x and its first three derivatives at ``tq`` from a degree-7 Hermite interpolant."""
    derivs = np.empty((len(traj), 3, 4))
    for i, geom in enumerate(traj.geometries()):
        x1, x2, x3 = coordinate_jets(geom, traj.u[i], traj.a[i], traj.b[i])
        derivs[i] = np.stack([traj.x[i], x1, x2, x3], axis=-1)
    out = np.empty((4, len(tq), 3))
    for k in range(3):
        poly = BPoly.from_derivatives(traj.t, derivs[:, k, :])
        for m in range(4):
            out[m, :, k] = poly.derivative(m)(tq) if m else poly(tq)
    return out


def unit_speed(traj):
    """Reparametrize ``traj`` (in its own metric) to unit speed, keeping the sample points.

    Uses the covariant chain rule with t' = 1/l, t'' = -g(u,a)/l^4,
    t''' = (4 g(u,a)^2/l^6 - (|a|^2 + g(u,b))/l^4)/l.  The new parameter is
    the arc length, integrated with the trapezoid rule on the samples
    (only its increments matter to the jets, which are exact pointwise).
    """
    geoms = traj.geometries()
    n = len(traj)
    u = np.empty((n, 3))
    a = np.empty((n, 3))
    b = np.empty((n, 3))
    speed = np.empty(n)
    for i, geom in enumerate(geoms):
        uu, aa, bb = traj.u[i], traj.a[i], traj.b[i]
        l2 = check_velocity(geom, uu)
        ell = math.sqrt(l2)
        ua = inner(geom, uu, aa)
        t1 = 1.0 / ell
        t2 = -ua / ell ** 4
        t3 = (4.0 * ua ** 2 / ell ** 6 - (norm2(geom, aa) + inner(geom, uu, bb)) / ell ** 4) / ell
        u[i] = t1 * uu
        a[i] = t1 ** 2 * aa + t2 * uu
        b[i] = t1 ** 3 * bb + 3 * t1 * t2 * aa + t3 * uu
        speed[i] = ell
    s = np.concatenate([[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * np.diff(traj.t))])
    return Trajectory(traj.metric, s + traj.t[0], traj.x.copy(), u, a, b, traj.mode, traj.drift.copy())
