import json
import os
import subprocess
import sys
from pathlib import Path

import jsonschema
import pytest

from fbms.cli import load_schema, main
from fbms.mesh import save_obj
from fbms.reference import make_reference
from fbms.solver import perturbed_disk

GOLDEN = Path(__file__).parent / "golden" / "classifier_table.txt"

# JSON documents for the rows of the golden table, in order
GOLDEN_DOMAINS = [
    {"kind": "quadric", "n": 3, "a": [1, 1, 0], "b": 1, "c": 0},
    {"kind": "quadric", "n": 3, "a": [1, 1, -1], "b": 0, "c": 0},
    {"kind": "quadric", "n": 3, "a": [1, 1, 0], "b": 0, "c": 0},
    {"kind": "quadric", "n": 3, "a": [1, 1, -1], "b": 0, "c": 1},
    {"kind": "quadric", "n": 3, "a": [1, 0, -1], "b": 0, "c": 1},
    {"kind": "profile", "family": "cone", "interval": [0, 1], "f0": 1, "slope": 1},
    {"kind": "profile", "family": "catenoid", "interval": [0, 2], "scale": 1},
]


def golden_rows():
    return [l for l in GOLDEN.read_text(encoding="utf-8").splitlines() if l and not l.startswith("#")]


def write(tmp_path, name, doc):
    p = tmp_path / name
    p.write_text(doc if isinstance(doc, str) else json.dumps(doc))
    return str(p)


def run_cli(tmp_path, *argv, out="out"):
    code = main([*argv[:1], *argv[1:], "--out", str(tmp_path / out)])
    manifest = json.loads((tmp_path / out / "manifest.json").read_text())
    jsonschema.validate(manifest, load_schema("manifest"))
    assert manifest["exit_code"] == code
    return code, tmp_path / out


@pytest.fixture(scope="module")
def ball_json(tmp_path_factory):
    return write(tmp_path_factory.mktemp("dom"), "ball.json", {"kind": "ball"})


@pytest.fixture(scope="module")
def catenoid_obj(tmp_path_factory):
    d = tmp_path_factory.mktemp("cat")
    m, _ = make_reference("critical-catenoid", 64)
    save_obj(m, d / "catenoid.obj")
    return str(d / "catenoid.obj")


def test_classifier_golden_table(tmp_path):
    rows = golden_rows()
    assert len(rows) == len(GOLDEN_DOMAINS)
    for k, (doc, row) in enumerate(zip(GOLDEN_DOMAINS, rows)):
        code, out = run_cli(tmp_path, "classify", write(tmp_path, f"d{k}.json", doc), out=f"o{k}")
        assert code == 0
        v = json.loads((out / "verdict.json").read_text(encoding="utf-8"))
        _, outcome, desc, cite = (s.strip() for s in row.split("|"))
        assert (v["outcome"], v["description"], v["citation"]) == (outcome, desc, cite), row


def test_classify_examples(tmp_path, capsys):
    code, _ = run_cli(tmp_path, "classify", write(tmp_path, "q.json", {"a": [1, 1, 0], "b": 1, "c": 0}))
    assert code == 0
    assert "NoExistence" in capsys.readouterr().out
    code, out = run_cli(tmp_path, "classify", write(tmp_path, "e.json", {"kind": "ellipsoid", "a": 2, "b": 1}), out="e")
    assert json.loads((out / "verdict.json").read_text())["outcome"] == "Unconstrained"


@pytest.mark.parametrize("doc", ["{not json", '{"kind": "quadric", "a": [1, 2, 0]}', '{"kind": "torus"}'])
def test_classify_bad_input(tmp_path, doc, capsys):
    code, _ = run_cli(tmp_path, "classify", write(tmp_path, "bad.json", doc))
    assert code == 2
    assert capsys.readouterr().err.strip()


def test_solve(tmp_path, ball_json):
    m0 = perturbed_disk(16, seed=0)
    save_obj(m0, tmp_path / "init.obj")
    code, out = run_cli(tmp_path, "solve", str(tmp_path / "init.obj"), ball_json)
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["converged"] and (out / "final.obj").exists()
    code, out = run_cli(tmp_path, "solve", str(tmp_path / "init.obj"), ball_json, "--max-iters", "10", out="capped")
    assert code == 3
    assert (out / "final.obj").exists()
    assert not json.loads((out / "report.json").read_text())["converged"]


def test_solve_missing_file(tmp_path, ball_json, capsys):
    code, _ = run_cli(tmp_path, "solve", str(tmp_path / "nope.obj"), ball_json)
    assert code == 2
    assert "nope.obj" in capsys.readouterr().err


def test_reference_catenoid(tmp_path):
    code, out = run_cli(tmp_path, "reference", "--kind", "critical-catenoid", "--resolution", "64")
    assert code == 0
    side = json.loads((out / "critical-catenoid-64.json").read_text())
    assert 1.1996 < side["s0"] < 1.1997
    assert (out / "critical-catenoid-64.obj").exists()


def test_verify_minkowski(tmp_path, ball_json):
    code, out = run_cli(tmp_path, "reference", "--kind", "equatorial-disk", "--resolution", "12", out="ref")
    code, out = run_cli(tmp_path, "verify", str(out / "equatorial-disk-12.obj"), ball_json,
                        "--identity", "minkowski", "--levels", "3")
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["estimated_order"] >= 1.5
    assert (out / "report.csv").read_text().count("\n") >= 4


def test_gap_ball_catenoid(tmp_path, ball_json, catenoid_obj, capsys):
    code, out = run_cli(tmp_path, "gap", catenoid_obj, ball_json, "--check", "ball-gap", "--csv")
    assert code == 3
    rep = json.loads((out / "report.json").read_text())
    assert rep["max_value"] == pytest.approx(9.43, rel=5e-2)
    assert "predicate false" in capsys.readouterr().err
    assert (out / "values.csv").exists()


def test_gap_hypothesis_unmet_message(tmp_path, ball_json, capsys):
    from fbms.reference import spherical_cap

    save_obj(spherical_cap(8, 0.6), tmp_path / "cap.obj")
    code, _ = run_cli(tmp_path, "gap", str(tmp_path / "cap.obj"), ball_json, "--check", "ball-gap")
    assert code == 3
    assert "hypothesis unmet" in capsys.readouterr().err


def test_deterministic(tmp_path, ball_json, catenoid_obj):
    outs = []
    for k in range(2):
        code, out = run_cli(tmp_path, "gap", catenoid_obj, ball_json, "--check", "boundary-principal", out=f"r{k}")
        outs.append((out / "report.json").read_bytes())
    assert outs[0] == outs[1]


def test_module_entry_point_and_threads(tmp_path, ball_json):
    env = dict(os.environ, FBMS_THREADS="1")
    p = subprocess.run([sys.executable, "-m", "fbms", "classify", ball_json, "--out", str(tmp_path / "o")],
                       capture_output=True, text=True, env=env)
    assert p.returncode == 0, p.stderr
    assert "Unconstrained" in p.stdout
    assert json.loads((tmp_path / "o" / "manifest.json").read_text())["command"] == "classify"
