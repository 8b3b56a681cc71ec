import json
import math

import numpy as np
import pytest

from mfspin.cli import main


def run(args):
    return main(args)


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def test_pressure_csv(tmp_path):
    out = tmp_path / "t.csv"
    code = run(["pressure", "--model", "builtin:ising-af", "--n", "1..8",
                "--out", str(out)])
    assert code == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "N,p,p_tilde,bound,bound_ok"
    assert len(lines) == 9
    row2 = lines[2].split(",")
    assert int(row2[0]) == 2
    assert float(row2[1]) == pytest.approx(3.6536, abs=1e-4)
    assert float(row2[2]) == pytest.approx(1.6625, abs=1e-4)
    assert all(line.endswith("true") for line in lines[1:])


def test_pressure_json(tmp_path):
    out = tmp_path / "t.json"
    code = run(["pressure", "--model", "builtin:ising-af", "--n", "1..4",
                "--format", "json", "--out", str(out)])
    assert code == 0
    doc = read_json(out)
    assert doc["schema_version"] == 1
    rows = doc["pressure_table"]["rows"]
    assert rows[0]["p"] is None  # below the body count
    assert rows[1]["p"] == pytest.approx(3.6536, abs=1e-4)
    assert "created_at" in doc["meta"]


def test_empty_range_exits_4(tmp_path):
    out = tmp_path / "t.csv"
    assert run(["pressure", "--model", "builtin:ising-af", "--n", "5..3",
                "--out", str(out)]) == 4
    assert not out.exists()


def test_unknown_suite_exits_4():
    assert run(["verify", "--model", "builtin:ising-af", "--suite", "nosuch"]) == 4


def test_invalid_model_exits_3(tmp_path):
    assert run(["pressure", "--model", "file:/does/not/exist.json"]) == 3
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({
        "name": "bad", "n": 2,
        "space": {"type": "ising"},
        "phi": {"type": "kernel", "id": "neg-sq"},
        "shape_hint": "concave",
    }))
    assert run(["pressure", "--model", str(bad)]) == 3


def test_cap_exceeded_exits_2(tmp_path):
    out = tmp_path / "t.csv"
    assert run(["pressure", "--model", "builtin:ising-af", "--n", "1..9",
                "--occupancy-cap", "5", "--out", str(out)]) == 2


def test_solve_both_cross_check(tmp_path):
    out = tmp_path / "s.json"
    code = run(["solve", "--model", "builtin:ising-af", "--principle", "both",
                "--out", str(out)])
    assert code == 0
    doc = read_json(out)
    cc = doc["cross_check"]
    assert cc["evp_value"] == pytest.approx(2.0, abs=1e-6)
    assert cc["gdfp_value"] == pytest.approx(2.0, abs=1e-6)
    assert abs(cc["evp_value"] - cc["gdfp_value"]) <= 1e-6
    assert cc["extrapolated_p"] == pytest.approx(2.0, abs=2e-2)
    assert cc["max_abs_disagreement"] <= 5e-2


def test_solve_gdfp_attractive(tmp_path):
    out = tmp_path / "g.json"
    code = run(["solve", "--model", "builtin:ising-f", "--principle", "gdfp",
                "--out", str(out)])
    assert code == 0
    doc = read_json(out)
    assert doc["gdfp"]["fixed_point_count"] == 3
    assert doc["gdfp"]["value"] == pytest.approx(-0.69281, abs=1e-5)
    assert len(doc["gdfp"]["optimal_set"]) == 2


def test_solve_evp_with_cap(tmp_path):
    model = tmp_path / "hardcore.json"
    model.write_text(json.dumps({
        "name": "hardcore", "n": 2,
        "space": {"type": "ising"},
        "phi": {"type": "kernel", "id": "neg-sq", "diag_shift": 100.0},
        "shape_hint": "convex",
    }))
    out = tmp_path / "e.json"
    code = run(["solve", "--model", f"file:{model}", "--principle", "evp",
                "--cap", "8", "--out", str(out)])
    assert code == 0
    doc = read_json(out)
    assert doc["evp"]["cap_exponent"] == 8.0
    assert doc["evp"]["value"] == pytest.approx(-48.0, abs=1e-6)


def test_verify_all_passes(tmp_path):
    out = tmp_path / "v.json"
    code = run(["verify", "--model", "builtin:ising-af", "--suite", "all",
                "--out", str(out)])
    assert code == 0
    doc = read_json(out)
    assert doc["all_passed"] is True
    assert set(doc["suites"]) == {"additivity", "bounds", "entropy", "cavity", "duality"}


def test_verify_single_suite(tmp_path):
    out = tmp_path / "v.json"
    code = run(["verify", "--model", "builtin:ising-f", "--suite", "cavity",
                "--out", str(out)])
    assert code == 0
    doc = read_json(out)
    names = [c["name"] for c in doc["suites"]["cavity"]]
    assert "cavity_optimizer_mixtures" in names


def test_deterministic_output(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for out in (a, b):
        assert run(["solve", "--model", "builtin:ising-f", "--principle", "gdfp",
                    "--seed", "0", "--out", str(out)]) == 0
    da, db = read_json(a), read_json(b)
    da.pop("meta")
    db.pop("meta")
    assert json.dumps(da, sort_keys=True) == json.dumps(db, sort_keys=True)
