import csv
import io
import json

import pytest

from iccopf.cli import (EXIT_INVALID, EXIT_OK, EXIT_PARSE, SweepSpec, ValidationError, digest, main)
from iccopf.data import bundled

SMALL_SWEEP = {"pair": ["branch:4-9", "branch:5-6"], "tau_grid": [0.5, 2.0], "beta0_list": [0.95]}


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def write(tmp_path, name, obj):
    path = tmp_path / name
    path.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return str(path)


def rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_parse_bundled(capsys):
    code, out, _ = run(capsys, "parse", "case14")
    report = json.loads(out)
    assert code == EXIT_OK
    assert (report["buses"], report["branches"], report["generators"]) == (14, 20, 5)
    assert report["valid"] is True


def test_parse_missing_file(capsys, tmp_path):
    code, out, err = run(capsys, "parse", str(tmp_path / "nope.m"))
    assert code == EXIT_PARSE and out == "" and "nope.m" in err


def test_parse_corrupted_file(capsys, tmp_path):
    text = bundled("case14.m").read_text().replace("mpc.bus = [", "mpc.bus = [ 1 2 @", 1)
    code, out, err = run(capsys, "parse", write(tmp_path, "bad.m", text))
    assert code == EXIT_PARSE and out == ""
    assert "line" in err and "column" in err


def test_parse_semantic_error(capsys, tmp_path):
    text = bundled("case14.m").read_text().replace("\t2\t2\t21.7", "\t2\t3\t21.7", 1)
    code, _, err = run(capsys, "parse", write(tmp_path, "two_ref.m", text))
    assert code == EXIT_INVALID and "reference" in err


def test_iccopf_case14(capsys, tmp_path):
    trace = tmp_path / "trace.csv"
    code, out, _ = run(capsys, "iccopf", "--scenario", "case14_scenario", "--direction", "case14_direction",
                       "--trace", str(trace), "--verify")
    report = json.loads(out)
    assert code == EXIT_OK
    assert report["termination"] == "converged"
    assert report["beta_max"] == pytest.approx(0.0669694650931, abs=1e-9)
    assert report["boundary"] == {"below_feasible": True, "above_infeasible": True, "delta": 1e-5}
    body = rows(trace.read_text())
    assert body[0] == ["iter", "beta", "snorm", "d_beta", "eta", "accepted"]
    assert 2 <= len(body) - 1 <= 51
    assert body[-1][5] == "true"
    manifest = json.loads((tmp_path / "trace.csv.manifest.json").read_text())
    assert manifest["command"] == "iccopf" and manifest["seed"] == 0
    assert manifest["settings"]["eps_s"] == 1e-6 and manifest["settings"]["max_iter"] == 50


def test_manifest_digest_stable(capsys, tmp_path):
    digests = []
    for i in range(2):
        target = tmp_path / f"m{i}.json"
        run(capsys, "curve", "--scenario", "case14_scenario", "--direction", "case14_direction",
            "--beta-min", "0.02", "--beta-max", "0.02", "--points", "1", "--manifest", str(target))
        digests.append(json.loads(target.read_text())["digest"])
    assert digests[0] == digests[1]


def test_iccopf_zero_direction(capsys, tmp_path):
    d = write(tmp_path, "d.json", {"u": {"branch:4-9": 0, "branch:5-6": 0}, "beta0": 0.95})
    code, out, err = run(capsys, "iccopf", "--scenario", "case14_scenario", "--direction", d, "--trace", "-")
    assert code == EXIT_INVALID and out == "" and "nonzero" in err


def test_iccopf_unknown_row(capsys, tmp_path):
    d = write(tmp_path, "d.json", {"u": {"branch:99-1": 1}})
    code, _, err = run(capsys, "iccopf", "--scenario", "case14_scenario", "--direction", d, "--trace", "-")
    assert code == EXIT_INVALID and "branch:99-1" in err


def test_iccopf_feasible_to_cap(capsys, tmp_path):
    d = write(tmp_path, "d.json", {"u": {"gen:1": 1}, "beta0": 0.95})
    code, out, _ = run(capsys, "iccopf", "--scenario", "case14_scenario", "--direction", d,
                       "--trace", str(tmp_path / "t.csv"))
    assert code == EXIT_OK
    assert json.loads(out)["termination"] == "direction_feasible_at_cap"


def test_iccopf_iteration_cap(capsys, tmp_path):
    code, out, _ = run(capsys, "iccopf", "--scenario", "case14_scenario", "--direction", "case14_direction",
                       "--max-iter", "2", "--trace", str(tmp_path / "t.csv"))
    assert code == 3 and json.loads(out)["termination"] == "iteration_cap"


def test_bad_json(capsys, tmp_path):
    d = write(tmp_path, "d.json", "{not json")
    code, _, err = run(capsys, "iccopf", "--scenario", "case14_scenario", "--direction", d, "--trace", "-")
    assert code == EXIT_PARSE and "line 1" in err


def test_bad_scenario(capsys, tmp_path):
    s = write(tmp_path, "s.json", {"case": "case14", "load_scale": -1, "flow_limit_fraction": 0.1,
                                   "renewable_buses": [1]})
    code, _, _ = run(capsys, "sensitivity", "--scenario", s, "--direction", "case14_direction", "--beta", "0")
    assert code == EXIT_INVALID


def test_sensitivity_interior(capsys):
    code, out, _ = run(capsys, "sensitivity", "--scenario", "case14_scenario", "--direction", "case14_direction",
                       "--beta", "0.01")
    report = json.loads(out)
    assert code == EXIT_OK
    assert report["analytic"] == 0.0 and report["finite_difference"] == 0.0
    assert "interior" in report["note"]


def test_sensitivity_step_out_of_domain(capsys):
    code, out, _ = run(capsys, "sensitivity", "--scenario", "case14_scenario", "--direction", "case14_direction",
                       "--beta", "0.07", "--fd-step", "0.01")
    assert code == EXIT_INVALID and out == ""


def test_sweep_small(capsys, tmp_path):
    spec = write(tmp_path, "w.json", SMALL_SWEEP)
    out_csv = tmp_path / "sweep.csv"
    code, _, _ = run(capsys, "sweep", "--scenario", "case14_scenario", "--spec", spec, "--output", str(out_csv))
    assert code == EXIT_OK
    body = rows(out_csv.read_text())
    assert body[0] == ["tau", "beta0", "beta_max", "beta_k1_max", "beta_k2_max", "iterations", "termination"]
    assert [r[0] for r in body[1:]] == ["0.5", "2"]
    assert all(r[6] == "converged" for r in body[1:])
    # 12 significant digits
    assert all(len(r[2].replace(".", "").lstrip("0")) <= 12 for r in body[1:])
    manifest = json.loads((tmp_path / "sweep.csv.manifest.json").read_text())
    assert manifest["command"] == "sweep" and len(manifest["digest"]) == 64


def test_sweep_deterministic_and_parallel(capsys, tmp_path):
    spec = write(tmp_path, "w.json", SMALL_SWEEP)
    bodies = []
    for workers in ("1", "1", "2"):
        code, out, _ = run(capsys, "sweep", "--scenario", "case14_scenario", "--spec", spec, "--workers", workers)
        assert code == EXIT_OK
        bodies.append(out)
    assert bodies[0] == bodies[1] == bodies[2]


def test_sweep_empty_grid(capsys, tmp_path):
    spec = write(tmp_path, "w.json", {**SMALL_SWEEP, "tau_grid": []})
    code, out, err = run(capsys, "sweep", "--scenario", "case14_scenario", "--spec", spec)
    assert code == EXIT_INVALID and out == "" and "non-empty" in err


def test_sweep_spec_direction():
    spec = SweepSpec.from_dict(SMALL_SWEEP)
    u = spec.direction(4, 0, 2, 1.0)
    assert u.tolist() == pytest.approx([2 ** -0.5, 0, 2 ** -0.5, 0])
    with pytest.raises(ValidationError):
        SweepSpec.from_dict({**SMALL_SWEEP, "tau_grid": [0.0]})
    with pytest.raises(ValidationError):
        SweepSpec.from_dict({**SMALL_SWEEP, "pair": ["a", "a"]})


def test_curve(capsys):
    code, out, _ = run(capsys, "curve", "--scenario", "case14_scenario", "--direction", "case14_direction",
                       "--beta-min", "0.03", "--beta-max", "0.0707", "--points", "40")
    body = rows(out)
    assert code == EXIT_OK and body[0] == ["beta", "snorm", "d_beta"] and len(body) == 41
    snorm = [float(r[1]) for r in body[1:]]
    d = [float(r[2]) for r in body[1:]]
    assert all(b >= a - 1e-9 for a, b in zip(snorm, snorm[1:]))
    assert d[0] == 0.0 and d[-1] > 0.0


def test_curve_below_boundary(capsys):
    code, out, _ = run(capsys, "curve", "--scenario", "case14_scenario", "--direction", "case14_direction",
                       "--beta-min", "0", "--beta-max", "0.05", "--points", "5")
    assert code == EXIT_OK
    assert all(float(r[1]) <= 1e-6 for r in rows(out)[1:])


def test_curve_single_point(capsys):
    code, out, _ = run(capsys, "curve", "--scenario", "case14_scenario", "--direction", "case14_direction",
                       "--beta-min", "0.02", "--beta-max", "0.02", "--points", "1")
    assert code == EXIT_OK and len(rows(out)) == 2


def test_curve_out_of_domain(capsys):
    code, out, _ = run(capsys, "curve", "--scenario", "case14_scenario", "--direction", "case14_direction",
                       "--beta-min", "0", "--beta-max", "0.2", "--points", "3")
    assert code == EXIT_INVALID and out == ""


def test_digest_deterministic():
    assert digest({"a": 1, "b": [1, 2]}, "x") == digest({"b": [1, 2], "a": 1}, "x")
    assert digest({"a": 1}) != digest({"a": 2})
