"""Command-line front end.

::

    confgeo integrate  [--config PATH] [--out PATH] [--format csv|json]
    confgeo invariants [TRAJECTORY] [--config PATH] [--out PATH] [--format csv|json]
    confgeo verify     [SUITE|all] [--config PATH] [--seed N] [--out PATH]
    confgeo twist      [TRAJECTORY] [--phi EXPR] [--config PATH] [--out PATH] [--format csv|json]

Exit codes: 0 success / all checks pass, 1 verification failure, 2 input
error, 3 numerical abort.  Errors are reported as one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .conformal import rescale_trajectory
from .errors import ConfgeoError, InputError
from .frenet import distance_to_2pi_multiple, invariants, total_twist
from .geodesics import CurveState, integrate
from .suites import SUITES, format_table, run_suite

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    """Reports usage errors as JSON on stderr with the input-error exit code."""

    def error(self, message):
        sys.stderr.write(json.dumps({"error": "UsageError", "message": message, "exit_code": EXIT_INPUT}) + "\n")
        sys.exit(EXIT_INPUT)


def _parser():
    p = _Parser(prog="confgeo", description="Conformal geodesics and the torsion Lagrangian.")
    p.add_argument("--version", action="version", version=f"confgeo {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, fmt=True):
        sp.add_argument("--config", metavar="PATH", help="run configuration (key = value file)")
        sp.add_argument("--seed", type=int, default=None, metavar="N", help="random seed (default 0)")
        sp.add_argument("--out", metavar="PATH", help="output file (default: standard output)")
        if fmt:
            sp.add_argument("--format", choices=("csv", "json"), default=None)

    common(sub.add_parser("integrate", help="integrate a conformal geodesic"))
    sp = sub.add_parser("invariants", help="append kappa, tau, L, ... to a trajectory")
    sp.add_argument("trajectory", nargs="?", help="trajectory file (CSV or JSON)")
    common(sp)
    sp = sub.add_parser("verify", help="run verification suites")
    sp.add_argument("suite", nargs="?", default="all", choices=SUITES + ("all",))
    common(sp, fmt=False)
    sp.add_argument("--format", choices=("json", "csv"), default="json", help="report format (csv gives one row per check)")
    sp = sub.add_parser("twist", help="total twist of a trajectory, optionally after a conformal change")
    sp.add_argument("trajectory", nargs="?", help="trajectory file (CSV or JSON)")
    sp.add_argument("--phi", help="conformal factor phi of gbar = exp(-2 phi) g")
    common(sp)
    return p


def _emit(text, out):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _format(args, default="csv"):
    if args.format:
        return args.format
    if args.out and Path(args.out).suffix.lower() == ".json":
        return "json"
    return default


def _config(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def cmd_integrate(args):
    cfg = _config(args)
    metric = cfg.resolved_metric()
    state = CurveState(0.0, cfg.x, cfg.u, cfg.a)
    traj = integrate(metric, state, cfg.t_end, cfg.integrator, mode=cfg.mode, output_every=cfg.output_every)
    _emit(traj.to_json() + "\n" if _format(args) == "json" else traj.to_csv(), args.out)
    return EXIT_OK


def _trajectory(args, cfg):
    return cfg.load_trajectory(Path(args.trajectory).resolve() if args.trajectory else None)


def cmd_invariants(args):
    cfg = _config(args)
    traj = _trajectory(args, cfg)
    cols = invariants(traj)
    _emit(traj.to_json(cols) + "\n" if _format(args) == "json" else traj.to_csv(cols), args.out)
    return EXIT_OK


def cmd_twist(args):
    cfg = _config(args)
    traj = _trajectory(args, cfg)
    phi = args.phi or cfg.phi
    closed = bool(np.linalg.norm(traj.x[-1] - traj.x[0]) < 1e-6)
    result = {"schema": 1, "closed": closed, "twist": total_twist(traj), "twist_raw": total_twist(traj, reduce=False)}
    if phi:
        bar = rescale_trajectory(traj, phi)
        result["phi"] = phi
        result["twist_bar"] = total_twist(bar)
        result["twist_bar_raw"] = total_twist(bar, reduce=False)
        dist, k = distance_to_2pi_multiple(result["twist_bar_raw"] - result["twist_raw"])
        result["change_distance_to_2pi_multiple"] = dist
        result["change_multiple"] = k
    if _format(args, "json") == "json":
        text = json.dumps(result, indent=1, sort_keys=True) + "\n"
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(result))
        w.writerow([result[k] for k in result])
        text = buf.getvalue()
    _emit(text, args.out)
    return EXIT_OK


def cmd_verify(args):
    cfg = _config(args)
    report = run_suite(args.suite, seed=cfg.seed, cases=cfg.cases, metric=cfg.metric)
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["suite", "check", "value", "kind", "tolerance", "pass"])
        for r in report.get("reports", [report]):
            for c in r["checks"]:
                w.writerow([r["suite"], c["name"], repr(c["value"]), c["kind"], c["tolerance"], c["pass"]])
        text = buf.getvalue()
    else:
        text = json.dumps(report, indent=1, sort_keys=True) + "\n"
    _emit(text, args.out)
    if args.out:
        print(format_table(report))
    return EXIT_OK if report["pass"] else EXIT_FAIL


COMMANDS = {
    "integrate": cmd_integrate,
    "invariants": cmd_invariants,
    "verify": cmd_verify,
    "twist": cmd_twist,
}


def _error(exc, code):
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    sub = getattr(exc, "subexpression", None)
    if sub:
        payload["subexpression"] = sub
    pos = getattr(exc, "position", None)
    if pos is not None:
        payload["position"] = pos
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
    return code


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except InputError as exc:
        return _error(exc, EXIT_INPUT)
    except ConfgeoError as exc:
        return _error(exc, EXIT_NUMERIC)
    except BrokenPipeError:
        # downstream closed the pipe (e.g. `| head`); silence the flush at exit
        sys.stdout = open(os.devnull, "w")
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
