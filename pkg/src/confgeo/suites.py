"""Verification suites behind ``confgeo verify``.

Every suite is a pure function of (metrics, seed, case count) returning a
JSON-ready report::

    {"schema": 1, "suite": ..., "metric": ..., "seed": ..., "n_cases": ...,
     "max_residual": ..., "tolerance": ..., "pass": ...,
     "checks": [{"name", "value", "tolerance", "kind", "pass"}, ...]}

``max_residual``/``tolerance`` repeat the suite's headline check.  A check
of kind ``"max"`` passes when value <= tolerance, kind ``"min"`` when
value >= tolerance.  Random cases draw from independent child seeds so the
report does not depend on evaluation order.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate

from . import conformal, frenet, geodesics, variational
from .dsl import builtin_metric
from .errors import InputError
from .geometry import geometry_at, inner, norm2

SUITES = (
    "el-onshell",
    "el-order",
    "el-rank",
    "torsion",
    "conformal-divergence",
    "conformal-image",
    "discrete-action",
    "flat-circles",
    "total-twist",
)


def corpus():
    """The five test metrics used by the sweeps."""
    return [
        builtin_metric("euclidean"),
        builtin_metric("diagonal", {"f1": "1", "f2": "exp(2*x1)", "f3": "1"}),
        builtin_metric("conformally_flat", {"phi": "0.2*sin(x1) + 0.1*x2"}),
        builtin_metric("sphere_stereographic", {"radius": 1}),
        builtin_metric("diagonal", {"f1": "1 + x3^2", "f2": "1", "f3": "1"}),
    ]


def _rngs(seed, n, salt=0):
    ss = np.random.SeedSequence([int(seed), int(salt)])
    return [np.random.default_rng(s) for s in ss.spawn(n)]


def _check(name, value, tol, kind="max"):
    value = float(value)
    ok = value <= tol if kind == "max" else value >= tol
    return {"name": name, "value": value, "tolerance": tol, "kind": kind, "pass": bool(ok and math.isfinite(value))}


def _report(suite, metrics, seed, n_cases, checks):
    head = checks[0]
    return {
        "schema": 1,
        "suite": suite,
        "metric": [m.name for m in metrics],
        "seed": int(seed),
        "n_cases": int(n_cases),
        "max_residual": head["value"],
        "tolerance": head["tolerance"],
        "pass": all(c["pass"] for c in checks),
        "checks": checks,
    }


def _hi_cfg():
    return geodesics.IntegratorConfig(rtol=1e-12, atol=1e-13)


def _random_unit_pair(rng, geom):
    u = rng.normal(size=3)
    u /= math.sqrt(norm2(geom, u))
    a = rng.normal(size=3)
    a -= inner(geom, u, a) * u
    return u, a


# flat circles -----------------------------------------------------------

def fit_circle(points):
    """Least-squares circle through 3D points: (center, radius, max residual).

    The plane comes from an SVD of the centered points; the in-plane fit is
    the algebraic (Kasa) fit refined by the geometric residual.
    """
    p = np.asarray(points, float)
    c0 = p.mean(axis=0)
    _, _, vt = np.linalg.svd(p - c0)
    e1, e2, nrm = vt
    q = np.column_stack([(p - c0) @ e1, (p - c0) @ e2])
    A = np.column_stack([2 * q, np.ones(len(q))])
    rhs = (q ** 2).sum(axis=1)
    sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    cq = sol[:2]
    r = math.sqrt(sol[2] + cq @ cq)
    center = c0 + cq[0] * e1 + cq[1] * e2
    radial = np.abs(np.linalg.norm(q - cq, axis=1) - r)
    planar = np.abs((p - c0) @ nrm)
    return center, r, float(max(radial.max(), planar.max()))


def flat_circles(cases=20, seed=0, metrics=None):
    flat = builtin_metric("euclidean")
    closure = fit = center_err = 0.0
    for rng in _rngs(seed, cases, 1):
        geom = geometry_at(flat, np.zeros(3))
        x0 = rng.uniform(-1, 1, size=3)
        u, a = _random_unit_pair(rng, geom)
        a *= rng.uniform(0.5, 2.0) / math.sqrt(norm2(geom, a))
        k = math.sqrt(norm2(geom, a))
        period = 2 * math.pi / k
        tr = geodesics.integrate(flat, geodesics.CurveState(0.0, x0, u, a), period, _hi_cfg(), mode="constrained")
        closure = max(closure, float(np.linalg.norm(tr.x[-1] - tr.x[0])))
        center, r, res = fit_circle(tr.x)
        fit = max(fit, res)
        center_err = max(center_err, float(np.linalg.norm(center - (x0 + a / k ** 2))), abs(r - 1 / k))
        # the parametrized form traces the same circle with a projective parameter
        trp = geodesics.integrate(flat, geodesics.CurveState(0.0, x0, 0.7 * u, 0.49 * a), 2.0, _hi_cfg())
        dist = np.abs(np.linalg.norm(trp.x - (x0 + a / k ** 2), axis=1) - 1 / k)
        fit = max(fit, float(dist.max()), float(np.abs((trp.x - x0) @ np.cross(u, a)).max() / np.linalg.norm(np.cross(u, a))))
    checks = [
        _check("closure after one period", closure, 1e-8),
        _check("best-fit circle residual", fit, 1e-7),
        _check("center and radius vs x + a/|a|^2, 1/|a|", center_err, 1e-7),
    ]
    return _report("flat-circles", [flat], seed, cases, checks)


# Euler-Lagrange sweeps ----------------------------------------------------

def _jets(metric, rng, onshell=True):
    x, u, a = variational.random_admissible_jet(metric, rng)
    if onshell:
        return variational.onshell_jetpoint(metric, x, u, a)
    # off-shell: push b off the equation by a g-unit vector normal to u
    geom = geometry_at(metric, x)
    n = rng.normal(size=3)
    n -= inner(geom, n, u) / norm2(geom, u) * u
    n /= math.sqrt(norm2(geom, n))
    b = geodesics.conformal_rhs(geom, u, a) + n
    return variational.jetpoint_from_covariant(metric, x, u, a, b)


def el_onshell(cases=50, seed=0, metrics=None):
    metrics = metrics or corpus()
    on = trunc = 0.0
    off_min = math.inf
    for mi, m in enumerate(metrics):
        for rng in _rngs(seed, cases, 10 + mi):
            jp = _jets(m, rng)
            on = max(on, variational.el_truncated(m, jp).relative)
            ext = jp.extended(list(rng.normal(size=(3, 3))))
            full = variational.el_full(m, ext)
            trunc = max(trunc, float(np.max(np.abs(full.normalized - variational.el_truncated(m, jp).normalized)) / full.scale))
            off = _jets(m, rng, onshell=False)
            off_min = min(off_min, variational.el_truncated(m, off).relative)
    checks = [
        _check("on-shell relative EL", on, 1e-7),
        _check("off-shell relative EL (negative control)", off_min, 1e-2, "min"),
        _check("el_full vs el_truncated on random 6-jet extensions", trunc, 1e-9),
    ]
    return _report("el-onshell", metrics, seed, cases * len(metrics), checks)


def el_order(cases=50, seed=0, metrics=None):
    metrics = metrics or corpus()
    worst = {4: 0.0, 5: 0.0, 6: 0.0}
    for mi, m in enumerate(metrics):
        for rng in _rngs(seed, cases, 20 + mi):
            jp = _jets(m, rng, onshell=bool(rng.integers(2)))
            jp = jp.extended(list(rng.normal(size=(3, 3))))
            for order in (4, 5, 6):
                M, scale = variational.order_probe(m, jp, order)
                worst[order] = max(worst[order], float(np.max(np.abs(M))) / scale)
    checks = [
        _check("max |dEL/dx^(5)| / scale", worst[5], 1e-8),
        _check("max |dEL/dx^(4)| / scale", worst[4], 1e-8),
        _check("max |dEL/dx^(6)| / scale", worst[6], 0.0),
    ]
    return _report("el-order", metrics, seed, cases * len(metrics), checks)


def el_rank(cases=50, seed=0, metrics=None):
    metrics = metrics or corpus()
    s3 = kern = tang = 0.0
    s2 = math.inf
    for mi, m in enumerate(metrics):
        for rng in _rngs(seed, cases, 30 + mi):
            jp = _jets(m, rng, onshell=bool(rng.integers(2)))
            res = variational.symbol_rank(m, jp)
            r2, r3 = res.ratios
            s3 = max(s3, r3)
            s2 = min(s2, r2)
            kern = max(kern, res.kernel_residual)
            val, scale = variational.tangential_identity(m, jp)
            tang = max(tang, abs(val) / scale)
    checks = [
        _check("sigma3/sigma1", s3, 1e-8),
        _check("sigma2/sigma1", s2, 1e-3, "min"),
        _check("|u^T dEL/db| / sigma1", kern, 1e-9),
        _check("|u^i EL_i| / scale", tang, 1e-9),
    ]
    return _report("el-rank", metrics, seed, cases * len(metrics), checks)


# torsion ------------------------------------------------------------------

def _reparam(u, a, b, h1, h2, h3):
    return h1 * u, h1 ** 2 * a + h2 * u, h1 ** 3 * b + 3 * h1 * h2 * a + h3 * u


def torsion(cases=100, seed=0, metrics=None, reparams=10):
    metrics = metrics or corpus()
    frenet_gap = rep_gap = 0.0
    rngs = _rngs(seed, cases, 40)
    for i, rng in enumerate(rngs):
        m = metrics[i % len(metrics)]
        x, u, a = variational.random_admissible_jet(m, rng, unit_speed=False)
        b = rng.normal(size=3)
        geom = geometry_at(m, x)
        tau = frenet.torsion(geom, u, a, b)
        tol_scale = max(1.0, abs(tau))
        frenet_gap = max(frenet_gap, abs(tau - frenet.frenet_torsion(m, x, u, a, b)) / tol_scale)
        for _ in range(reparams):
            h1 = rng.uniform(0.3, 3.0)
            h2, h3 = rng.normal(size=2)
            us, as_, bs = _reparam(u, a, b, h1, h2, h3)
            rep_gap = max(rep_gap, abs(frenet.torsion(geom, us, as_, bs) - tau) / tol_scale)
    ricci = ricci_remark(seed, metrics)
    checks = [
        _check("|V/A^2 - g(nabla_T N, B)| (relative)", frenet_gap, 1e-9),
        _check("torsion change under reparametrization (relative)", rep_gap, 1e-8),
        _check("|kappa tau - Ric(T,B)| along conformal geodesics", ricci, 1e-6),
    ]
    return _report("torsion", metrics, seed, cases, checks)


def corpus_geodesic(metric, rng, t_end=2.0, n=None):
    """A nondegenerate conformal geodesic of ``metric`` from a random unit-speed start."""
    x, u, a = variational.random_admissible_jet(metric, rng, spread=0.3)
    geom = geometry_at(metric, x)
    a = a * (0.8 / math.sqrt(abs(norm2(geom, a))))
    t_eval = None if n is None else np.linspace(0.0, t_end, n)[1:]
    return geodesics.integrate(metric, geodesics.CurveState(0.0, x, u, a), t_end, _hi_cfg(), t_eval=t_eval)


def ricci_remark(seed=0, metrics=None):
    metrics = metrics or corpus()
    worst = 0.0
    for mi, m in enumerate(metrics):
        rng = _rngs(seed, 1, 50 + mi)[0]
        tr = corpus_geodesic(m, rng)
        for geom, u, a, b in zip(tr.geometries(), tr.u, tr.a, tr.b):
            fr = frenet.frenet_at(geom, u, a, b)
            ric = float(fr.T @ geom.ricci @ fr.B)
            worst = max(worst, abs(fr.kappa * fr.tau - ric))
    return worst


# conformal -------------------------------------------------------------------

_PHIS = ("0.2*sin(x1)", "0.1*x1*x2 + 0.2*cos(x3)", "0.3*x2", "0.15*x1^2 - 0.1*x3", "0.2*sin(x1 + x2)*cos(x3)")
# helix-like curves: curvature stays away from zero so pi(a) never vanishes
_CURVES = (
    ("0.8*cos(t) + 0.1*t", "0.8*sin(t)", "0.3*t + 0.1*sin(2*t)"),
    ("0.6*sin(t)", "0.6*cos(t) - 0.6", "0.2*t + 0.05*t^2"),
)


def divergence_cases(seed=0, metrics=None):
    """Ten (metric, phi, curve) triples: conformal geodesics and two analytic non-geodesic curves."""
    metrics = metrics or corpus()
    cases = []
    for i, m in enumerate(metrics):
        rng = _rngs(seed, 1, 60 + i)[0]
        cases.append((m, _PHIS[i % len(_PHIS)], corpus_geodesic(m, rng)))
        curve = _CURVES[i % len(_CURVES)]
        cases.append((m, _PHIS[(i + 2) % len(_PHIS)], geodesics.curve_trajectory(m, curve, np.linspace(0.0, 2.0, 161))))
    return cases


def conformal_divergence(cases=None, seed=0, metrics=None):
    triples = divergence_cases(seed, metrics)
    if cases is not None:
        triples = triples[:cases]
    pointwise = angle = gap = 0.0
    for m, phi, tr in triples:
        prof = conformal.verify_divergence(m, phi, tr)
        pointwise = max(pointwise, prof.max_residual)
        gap = max(gap, prof.integrated_gap)
        angle = max(angle, float(conformal.angle_relation_residual(m, phi, tr).max()))
    checks = [
        _check("max |L_bar - L - dS/dt|", pointwise, 1e-6),
        _check("angle relation residual", angle, 1e-6),
        _check("|int (L_bar - L) - Delta S| (trapezoid)", gap, 1e-3),
    ]
    return _report("conformal-divergence", metrics or corpus(), seed, len(triples), checks)


def conformal_image(cases=None, seed=0, metrics=None):
    metrics = metrics or corpus()
    if cases is not None:
        metrics = metrics[:cases]
    img = law = 0.0
    neg = math.inf
    wrong_sign = math.inf
    for i, m in enumerate(metrics):
        rng = _rngs(seed, 1, 70 + i)[0]
        tr = corpus_geodesic(m, rng)
        phi = _PHIS[(i + 1) % len(_PHIS)]
        img = max(img, float(conformal.geodesic_image_residual(m, phi, tr).max()))
        neg = min(neg, float(conformal.geodesic_image_residual(m, "0.3*x2", tr, zero_schouten=True).max()))
        for p in rng.uniform(-0.4, 0.4, size=(3, 3)):
            law = max(law, conformal.schouten_law_residual(m, phi, p))
            wrong_sign = min(wrong_sign, conformal.schouten_law_residual(m, phi, p, f_sign=1.0))
    checks = [
        _check("gbar-normal residual of g-conformal geodesics", img, 1e-6),
        _check("residual with gbar-Schouten dropped (negative control)", neg, 1e-2, "min"),
        _check("Schouten law with f = -phi (relative)", law, 1e-8),
        _check("Schouten law with f = +phi (sign control)", wrong_sign, 1e-3, "min"),
    ]
    return _report("conformal-image", metrics, seed, len(metrics), checks)


# discrete action ------------------------------------------------------------

def _ratios(values):
    return [values[i] / values[i + 1] for i in range(len(values) - 1)]


def tilted_circle(n, span=2.0, radius=1.3):
    """Nodes of a circle in the plane normal to (1,1,1) (x' never parallel to e1)."""
    t = np.linspace(0.0, span, n)
    e1 = np.array([1.0, -1.0, 0.0]) / math.sqrt(2)
    e2 = np.array([1.0, 1.0, -2.0]) / math.sqrt(6)
    X = radius * (np.outer(np.cos(t), e1) + np.outer(np.sin(t), e2)) + np.array([0.2, 0.1, 0.0])
    return t, variational.DiscreteCurve(X, t[1] - t[0])


def helix_nodes(n, span=2.0):
    t = np.linspace(0.0, span, n)
    return t, variational.DiscreteCurve(np.stack([np.cos(t), np.sin(t), 0.5 * t], axis=1), t[1] - t[0])


MESHES = (65, 129, 257)
WINDOW = (0.5, 1.5)


def discrete_action(cases=None, seed=0, metrics=None):
    metrics = metrics or [corpus()[3], corpus()[4]]
    if cases is not None:
        metrics = metrics[:cases]
    flat = builtin_metric("euclidean")
    worst_ratio = math.inf
    for i, m in enumerate(metrics):
        rng = _rngs(seed, 1, 80 + i)[0]
        x, u, a = variational.random_admissible_jet(m, rng)
        a = a * (0.8 / math.sqrt(abs(norm2(geometry_at(m, x), a))))
        norms = []
        for n in MESHES:
            tt = np.linspace(0.0, 2.0, n)
            tr = geodesics.integrate(m, geodesics.CurveState(0.0, x, u, a), 2.0,
                                     geodesics.IntegratorConfig(rtol=1e-13, atol=1e-14), t_eval=tt[1:])
            c = variational.curve_from_trajectory(tr)
            norms.append(variational.gradient_norm(variational.action_gradient(m, c), tr.t, WINDOW))
        worst_ratio = min(worst_ratio, min(_ratios(norms)))
    helix = min(variational.gradient_norm(variational.action_gradient(flat, c), t, WINDOW)
                for t, c in (helix_nodes(n) for n in MESHES))
    orders = []
    for lag in ("flat_reduced", "flat_symmetric"):
        norms = [variational.gradient_norm(variational.action_gradient(flat, c, lagrangian=lag), t, WINDOW)
                 for t, c in (tilted_circle(n) for n in MESHES)]
        orders += [math.log2(r) for r in _ratios(norms)]
    checks = [
        _check("gradient reduction per mesh halving (geodesics)", worst_ratio, 3.5, "min"),
        _check("helix gradient plateau", helix, 1e-3, "min"),
        _check("observed order, flat second-order Lagrangians on circles", min(orders), 1.8, "min"),
    ]
    return _report("discrete-action", metrics, seed, len(metrics), checks)


# total twist -----------------------------------------------------------------

TWIST_CURVES = (
    (("(2 + cos(3*t))*cos(2*t)", "(2 + cos(3*t))*sin(2*t)", "sin(3*t)"), "0.3*sin(x1)"),
    (("(2 + cos(3*t))*cos(2*t)", "(2 + cos(3*t))*sin(2*t)", "sin(3*t)"), "0.1*x1 + 0.05*x2*x3"),
    (("cos(t)", "sin(t) + 0.3*cos(2*t)", "0.5*sin(2*t)"), "0.3*sin(x1)"),
    (("cos(t) + 0.2*cos(3*t)", "sin(t)", "0.4*sin(2*t)"), "0.2*x3^2 - 0.1*x1"),
    (("1.5*cos(t)", "sin(t)", "0.3*cos(t) + 0.6*sin(3*t)"), "0.25*cos(x2)"),
)

HELICES = ((1.0, 0.5), (0.7, 1.2), (2.0, 0.3))


def helix_twist_gap(radius, pitch, span=4.0, n=801):
    """|int T omega - int tau ds| on a helix segment (t in [0, span])."""
    comps = (f"{radius!r}*cos(t)", f"{radius!r}*sin(t)", f"{pitch!r}*t")
    t = np.linspace(0.0, span, n)
    inv = frenet.flat_invariants(comps, t)
    T, omega = frenet.conformal_torsion_omega(inv["kappa"], inv["tau"], inv["kappa_s"], inv["kappa_ss"], inv["tau_s"])
    ds = inv["speed"]
    lhs = integrate.trapezoid(T * omega * ds, t)
    rhs = integrate.trapezoid(inv["tau"] * ds, t)
    return abs(lhs - rhs)


def total_twist(cases=None, seed=0, metrics=None, n=1201):
    flat = builtin_metric("euclidean")
    pairs = TWIST_CURVES if cases is None else TWIST_CURVES[:cases]
    worst = 0.0
    t = np.linspace(0.0, 2 * math.pi, n)
    for comps, phi in pairs:
        tr = geodesics.curve_trajectory(flat, comps, t)
        conformal.check_admissible(tr)
        _, _, dist, _ = conformal.twist_change(tr, phi)
        worst = max(worst, dist)
    helix = max(helix_twist_gap(r, c) for r, c in HELICES)
    checks = [
        _check("closed-curve twist change distance to 2 pi Z", worst, 1e-4),
        _check("|int T omega - int tau ds| on helices", helix, 1e-5),
    ]
    return _report("total-twist", [flat], seed, len(pairs), checks)


RUNNERS = {
    "el-onshell": el_onshell,
    "el-order": el_order,
    "el-rank": el_rank,
    "torsion": torsion,
    "conformal-divergence": conformal_divergence,
    "conformal-image": conformal_image,
    "discrete-action": discrete_action,
    "flat-circles": flat_circles,
    "total-twist": total_twist,
}


def run_suite(name, seed=0, cases=None, metric=None):
    """Run one suite (or ``"all"``) and return its report."""
    metrics = None if metric is None else [metric]
    if name == "all":
        reports = [run_suite(s, seed, cases, metric) for s in SUITES]
        return {
            "schema": 1,
            "suite": "all",
            "seed": int(seed),
            "pass": all(r["pass"] for r in reports),
            "reports": reports,
        }
    if name not in RUNNERS:
        raise InputError(f"unknown suite {name!r}; expected one of {SUITES + ('all',)}")
    kwargs = {"seed": seed, "metrics": metrics}
    if cases is not None:
        kwargs["cases"] = cases
    return RUNNERS[name](**kwargs)


def format_table(report):
    """Human-readable lines for a report."""
    reports = report.get("reports", [report])
    lines = []
    for r in reports:
        lines.append(f"{r['suite']}: {'PASS' if r['pass'] else 'FAIL'}")
        for c in r["checks"]:
            op = "<=" if c["kind"] == "max" else ">="
            flag = "ok" if c["pass"] else "FAIL"
            lines.append(f"  [{flag}] {c['name']}: {c['value']:.3e} {op} {c['tolerance']:.1e}")
    return "\n".join(lines)
