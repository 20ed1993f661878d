"""Run configuration files.

A run config uses the same ``key = value`` grammar as metric files (one
entry per line, ``#`` starts a comment, duplicate keys are an error).

Recognized keys
---------------
metric
    ``euclidean``, ``diagonal``, ``conformally_flat``,
    ``sphere_stereographic``, ``corpus`` (verification suites only) or a
    path to a metric file.  Builtin parameters are given as ``f1``, ``f2``,
    ``f3``, ``phi`` or ``radius``.  Alternatively the components
    ``g11`` ... ``g33`` may be written directly in the config.
x, u, a
    Initial state as three comma-separated numbers (defaults 0,0,0 /
    1,0,0 / 0,1,0).
mode
    ``parametrized`` (default) or ``constrained``.
t_end, method, step, rtol, atol, max_steps, projection, output_every
    Integrator settings; ``projection`` is ``true`` or ``false``.
trajectory
    Input trajectory (CSV or JSON) for ``invariants`` and ``twist``.
phi
    Conformal factor for ``twist`` (also the ``conformally_flat`` parameter).
seed, cases
    Verification sweep seed (default 0) and an optional case-count override.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dsl
from .errors import InputError, MetricFileError
from .geodesics import IntegratorConfig, Trajectory

BUILTINS = ("euclidean", "diagonal", "conformally_flat", "sphere_stereographic")
_BUILTIN_PARAMS = ("f1", "f2", "f3", "radius")
_RUN_KEYS = {
    "metric", "x", "u", "a", "mode", "t_end", "method", "step", "rtol", "atol",
    "max_steps", "projection", "output_every", "trajectory", "phi", "seed", "cases",
    "suite", "format",
}
_METRIC_KEYS = set(dsl.COMPONENT_KEYS) | {"g21", "g31", "g32", "signature", "name"}


def _vector(text, key):
    try:
        v = [float(s) for s in text.replace(" ", "").strip("()[]").split(",")]
    except ValueError:
        raise InputError(f"{key} must be three comma-separated numbers") from None
    if len(v) != 3:
        raise InputError(f"{key} must have three components")
    return np.array(v)


def _bool(text, key):
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise InputError(f"{key} must be true or false")


def _number(d, key, default, kind=float):
    if key not in d:
        return default
    try:
        value = kind(d[key])
    except ValueError:
        raise InputError(f"{key} must be a number, got {d[key]!r}") from None
    if kind is float and not math.isfinite(value):
        raise InputError(f"{key} must be finite")
    return value


@dataclass
class RunConfig:
    metric_name: str = "euclidean"
    metric: dsl.MetricSpec | None = None
    x: np.ndarray = field(default_factory=lambda: np.zeros(3))
    u: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    a: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))
    mode: str = "parametrized"
    t_end: float = 2 * math.pi
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    output_every: int = 1
    trajectory: str | None = None
    phi: str | None = None
    seed: int = 0
    cases: int | None = None
    base_dir: Path = field(default_factory=Path.cwd)

    def resolved_metric(self):
        if self.metric is None:
            return dsl.builtin_metric("euclidean")
        return self.metric

    def load_trajectory(self, path=None):
        path = path or self.trajectory
        if path is None:
            raise InputError("no trajectory file given")
        return load_trajectory(self._path(path), self.metric)

    def _path(self, p):
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p


def parse_config(text, base_dir=None):
    d = dsl.parse_keyvalue(text)
    unknown = sorted(set(d) - _RUN_KEYS - _METRIC_KEYS - set(_BUILTIN_PARAMS))
    if unknown:
        raise InputError(f"unknown config keys {unknown}")
    cfg = RunConfig(base_dir=Path(base_dir) if base_dir else Path.cwd())
    cfg.phi = d.get("phi")
    if any(k in d for k in _METRIC_KEYS - {"signature", "name"}):
        if "metric" in d:
            raise InputError("give either 'metric' or explicit g components, not both")
        cfg.metric = dsl.metric_from_mapping({k: v for k, v in d.items() if k in _METRIC_KEYS})
        cfg.metric_name = cfg.metric.name
    elif "metric" in d:
        name = d["metric"]
        cfg.metric_name = name
        if name == "corpus":
            cfg.metric = None
        elif name in BUILTINS:
            params = {k: d[k] for k in _BUILTIN_PARAMS if k in d}
            if "phi" in d:
                params["phi"] = d["phi"]
            cfg.metric = dsl.builtin_metric(name, params)
        else:
            path = cfg._path(name)
            if not path.exists():
                raise MetricFileError(f"metric {name!r} is neither a builtin nor an existing file")
            cfg.metric = dsl.load_metric(path)
    else:
        cfg.metric_name = "default"
    for key in ("x", "u", "a"):
        if key in d:
            setattr(cfg, key, _vector(d[key], key))
    cfg.mode = d.get("mode", cfg.mode)
    if cfg.mode not in ("parametrized", "constrained"):
        raise InputError(f"unknown mode {cfg.mode!r}")
    cfg.t_end = _number(d, "t_end", cfg.t_end)
    defaults = IntegratorConfig()
    cfg.integrator = IntegratorConfig(
        method=d.get("method", defaults.method),
        step=_number(d, "step", defaults.step),
        rtol=_number(d, "rtol", defaults.rtol),
        atol=_number(d, "atol", defaults.atol),
        max_steps=_number(d, "max_steps", defaults.max_steps, int),
        constraint_projection=_bool(d["projection"], "projection") if "projection" in d else True,
    )
    cfg.output_every = _number(d, "output_every", 1, int)
    if cfg.output_every < 1:
        raise InputError("output_every must be at least 1")
    cfg.trajectory = d.get("trajectory")
    cfg.seed = _number(d, "seed", 0, int)
    cfg.cases = _number(d, "cases", None, int)
    if cfg.cases is not None and cfg.cases < 1:
        raise InputError("cases must be positive")
    return cfg


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read config {str(path)!r}: {exc.strerror}") from None
    return parse_config(text, base_dir=path.parent)


def load_trajectory(path, metric=None):
    """Read a trajectory written by ``confgeo integrate`` (CSV or JSON).

    JSON files carry their metric; CSV files need ``metric``.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read trajectory {str(path)!r}: {exc.strerror}") from None
    if text.lstrip().startswith("{"):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InputError(f"bad trajectory JSON: {exc}") from None
        return Trajectory.from_dict(d, metric)
    if metric is None:
        raise InputError("a CSV trajectory needs a metric in the config")
    return Trajectory.from_csv(text, metric)
