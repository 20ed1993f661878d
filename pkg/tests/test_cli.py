import csv
import io
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from confgeo.cli import main
from confgeo.config import parse_config
from confgeo.errors import InputError


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_integrate_straight_line(tmp_path, capsys):
    cfg = write(tmp_path, "run.cfg", "metric = euclidean\nx = 1, 2, 3\nu = 0.6, 0.8, 0\na = 0, 0, 0\nmode = constrained\nt_end = 2\n")
    code, out, _ = run(["integrate", "--config", str(cfg)], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert list(rows[0])[:14] == ["t", "x1", "x2", "x3", "u1", "u2", "u3", "a1", "a2", "a3", "b1", "b2", "b3", "drift"]
    for r in rows:
        t = float(r["t"])
        assert abs(float(r["x1"]) - (1 + 0.6 * t)) <= 1e-12
        assert abs(float(r["x2"]) - (2 + 0.8 * t)) <= 1e-12
        assert float(r["drift"]) <= 1e-12


def test_integrate_json_and_out(tmp_path, capsys):
    out = tmp_path / "traj.json"
    code, stdout, _ = run(["integrate", "--out", str(out)], capsys)
    assert code == 0 and stdout == ""
    d = json.loads(out.read_text())
    assert d["schema"] == 1 and d["metric"]["g11"] == "1"
    # default run is the unit circle through the origin
    x = np.column_stack([d["x1"], d["x2"], d["x3"]])
    np.testing.assert_allclose(np.linalg.norm(x - [0, 1, 0], axis=1), 1, atol=1e-8)


def test_invariants_and_twist(tmp_path, capsys):
    traj = tmp_path / "traj.json"
    cfg = write(tmp_path, "run.cfg", "metric = sphere_stereographic\nradius = 1\nu = 0.5, 0, 0\na = 0, 0.3, 0.1\nt_end = 1\n")
    assert main(["integrate", "--config", str(cfg), "--out", str(traj)]) == 0
    code, out, _ = run(["invariants", str(traj)], capsys)
    assert code == 0
    header = out.splitlines()[0].split(",")
    assert header[-6:] == ["kappa", "tau", "L", "ell", "A", "V"]
    code, out, _ = run(["twist", str(traj), "--phi", "0.2*x1"], capsys)
    d = json.loads(out)
    assert code == 0 and d["closed"] is False
    assert d["twist"] == d["twist_raw"]
    assert set(d) >= {"twist_bar", "change_distance_to_2pi_multiple", "change_multiple"}


def test_twist_of_closed_circle(tmp_path, capsys):
    traj = tmp_path / "circle.json"
    cfg = write(tmp_path, "run.cfg", "mode = constrained\nrtol = 1e-12\natol = 1e-13\n")
    assert main(["integrate", "--config", str(cfg), "--out", str(traj)]) == 0
    capsys.readouterr()
    code, out, _ = run(["twist", str(traj), "--format", "csv"], capsys)
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and rows[0]["closed"] == "True"
    assert abs(float(rows[0]["twist"])) <= 1e-12 or abs(float(rows[0]["twist"]) - 2 * math.pi) <= 1e-12


def test_csv_trajectory_needs_metric(tmp_path, capsys):
    traj = tmp_path / "traj.csv"
    assert main(["integrate", "--out", str(traj)]) == 0
    capsys.readouterr()
    cfg = write(tmp_path, "inv.cfg", f"metric = euclidean\ntrajectory = {traj.name}\n")
    code, out, _ = run(["invariants", "--config", str(cfg)], capsys)
    assert code == 0 and "kappa" in out.splitlines()[0]


def test_verify_flat_circles(capsys):
    code, out, _ = run(["verify", "flat-circles", "--seed", "0"], capsys)
    report = json.loads(out)
    assert code == 0 and report["pass"] and report["schema"] == 1
    assert report["checks"][0]["value"] <= 1e-8


def test_verify_is_deterministic(capsys):
    _, first, _ = run(["verify", "total-twist", "--seed", "3"], capsys)
    _, second, _ = run(["verify", "total-twist", "--seed", "3"], capsys)
    assert first == second


def test_verify_csv_and_table(tmp_path, capsys):
    out = tmp_path / "report.csv"
    code, stdout, _ = run(["verify", "total-twist", "--format", "csv", "--out", str(out)], capsys)
    assert code == 0
    assert "total-twist" in stdout
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    assert {r["pass"] for r in rows} == {"True"}


def test_verify_reports_failure(tmp_path, capsys, monkeypatch):
    from confgeo import cli

    def failing(name, seed, cases, metric):
        return {"suite": name, "pass": False, "checks": []}

    monkeypatch.setattr(cli, "run_suite", failing)
    code, _, _ = run(["verify", "flat-circles"], capsys)
    assert code == 1


def error_payload(err):
    return json.loads(err.strip().splitlines()[-1])


def test_bad_metric_is_input_error(tmp_path, capsys):
    cfg = write(tmp_path, "bad.cfg", "metric = nonexistent.metric\n")
    code, _, err = run(["integrate", "--config", str(cfg)], capsys)
    assert code == 2 and error_payload(err)["exit_code"] == 2


def test_syntax_error_reports_position(tmp_path, capsys):
    cfg = write(tmp_path, "bad.cfg", "g11 = exp(2*sin(x1)\ng22 = 1\ng33 = 1\n")
    code, _, err = run(["integrate", "--config", str(cfg)], capsys)
    payload = error_payload(err)
    assert code == 2
    assert payload["error"] == "ExpressionSyntaxError" and payload["position"] == len("exp(2*sin(x1)")


def test_numerical_abort(tmp_path, capsys):
    cfg = write(tmp_path, "null.cfg", "u = 0, 0, 0\n")
    code, _, err = run(["integrate", "--config", str(cfg)], capsys)
    assert code == 3 and error_payload(err)["error"] == "NullVelocity"
    cfg = write(tmp_path, "log.cfg", "g11 = 1 + log(x1)\ng22 = 1\ng33 = 1\n")
    code, _, err = run(["integrate", "--config", str(cfg)], capsys)
    payload = error_payload(err)
    assert code == 3 and payload["subexpression"] == "log(x1)"


def test_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["verify", "no-such-suite"])
    assert exc.value.code == 2
    assert error_payload(capsys.readouterr().err)["error"] == "UsageError"


def test_config_rejects_unknown_keys():
    with pytest.raises(InputError):
        parse_config("metric = euclidean\ncolour = red\n")
    with pytest.raises(InputError):
        parse_config("u = 1, 2\n")
    cfg = parse_config("metric = conformally_flat\nphi = 0.1*x1\nseed = 4\n")
    assert cfg.seed == 4 and cfg.metric.name.startswith("conformally_flat")


def test_console_script():
    proc = subprocess.run([sys.executable, "-m", "confgeo.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("confgeo ")
