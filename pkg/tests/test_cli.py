import csv
import json

import jsonschema
import pytest
from hypothesis import given, strategies as st

from spdelab.cli import format_value, main
from spdelab.config import SCHEMA, ConfigError, expand_range, parse_config


def write(tmp_path, name, cfg):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


PHASE = {
    "experiment": "PhaseDiagram",
    "params": {"alpha": {"start": 0, "stop": 1, "step": 0.5}, "beta": {"start": 0, "stop": 1, "step": 0.5}, "p": {"values": [1.25, 2, 4]}},
    "initial": {"kind": "GaussianWidth", "delta": 1.0},
}

MOMENTS = {
    "experiment": "MomentVsTime",
    "params": {"alpha": 0, "beta": 1, "p": 2},
    "times": {"values": [0.5, 0.9, 1.0, 1.5]},
    "initial": {"kind": "GaussianWidth", "delta": 1.0},
    "numerics": {"N": 128},
    "output": {"format": "csv+json"},
}


def test_schema_command(capsys):
    assert main(["schema"]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed == SCHEMA
    jsonschema.Draft202012Validator.check_schema(printed)


def test_validate(tmp_path, capsys):
    assert main(["validate", str(write(tmp_path, "ok.json", PHASE))]) == 0
    bad = dict(PHASE, extra=1)
    assert main(["validate", str(write(tmp_path, "bad.json", bad))]) == 2
    assert "extra" in capsys.readouterr().err
    assert main(["validate", str(tmp_path / "missing.json")]) == 2
    (tmp_path / "broken.json").write_text("{not json")
    assert main(["validate", str(tmp_path / "broken.json")]) == 2
    assert main(["frobnicate"]) == 2


@pytest.mark.parametrize(
    "patch",
    [
        {"params": {"alpha": {"start": 1, "stop": 0, "step": 0.1}, "beta": 0}},
        {"params": {"alpha": {"start": 0, "stop": 1, "step": 0}, "beta": 0}},
        {"params": {"alpha": 0, "beta": 0, "p": 1.0}},
        {"params": {"alpha": 0, "beta": 0, "gamma": 1}},
        {"numerics": {"paths": 500}},
        {"numerics": {"N": 4}, "initial": {"kind": "SingleMode", "n": 9}},
        {"initial": {"kind": "GaussianWidth", "delta": -1}},
        {"experiment": "Everything"},
    ],
)
def test_invalid_configs(tmp_path, patch):
    cfg = dict(PHASE, **patch)
    with pytest.raises(ConfigError):
        parse_config(cfg, tmp_path)
    assert main(["run", str(write(tmp_path, "c.json", cfg)), "--out", str(tmp_path / "o")]) == 2


def test_phase_diagram(tmp_path):
    assert main(["run", str(write(tmp_path, "p.json", PHASE)), "--out", str(tmp_path / "out")]) == 0
    rows = read_rows(tmp_path / "out" / "results.csv")
    assert len(rows) == 27
    assert list(rows[0]) == [
        "alpha", "beta", "p", "classical", "classical_margin", "lp", "lp_margin",
        "parabolicity", "integrability", "blow_up_time", "status",
    ]
    by = {(r["alpha"], r["beta"], r["p"]): r for r in rows}
    # beta = 1 is outside the classical region but inside the L^p one for p = 1.25
    assert by[("0.0", "1.0", "1.25")]["classical"] == "false"
    assert by[("0.0", "1.0", "1.25")]["lp"] == "true"
    assert by[("0.0", "1.0", "1.25")]["blow_up_time"] == "inf"
    assert by[("0.0", "1.0", "2.0")]["blow_up_time"] == "1.0"
    # shrinking p enlarges the well-posed region
    count = {p: sum(r["lp"] == "true" for r in rows if r["p"] == p) for p in ("1.25", "2.0", "4.0")}
    assert count["1.25"] >= count["2.0"] >= count["4.0"]
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["workers"] == 1 and manifest["config"]["params"]["p"]["values"] == [1.25, 2.0, 4.0]
    assert {"numpy", "scipy", "python", "spdelab"} <= set(manifest["versions"])


def test_moment_vs_time_and_json_mirror(tmp_path):
    cfg = write(tmp_path, "m.json", MOMENTS)
    assert main(["run", str(cfg), "--out", str(tmp_path / "a")]) == 0
    rows = read_rows(tmp_path / "a" / "results.csv")
    assert [r["status"] for r in rows] == ["ok", "ok", "diverged", "diverged"]
    assert rows[2]["moment"] == "inf" and float(rows[1]["moment"]) > float(rows[0]["moment"])
    mirror = json.loads((tmp_path / "a" / "results.json").read_text())
    assert mirror["rows"][3]["moment"] == "inf" and mirror["rows"][0]["mc_estimate"] is None


def test_determinism_across_threads(tmp_path):
    cfg = dict(MOMENTS, params={"alpha": {"values": [0, 0.2]}, "beta": {"values": [0.3, 0.4]}, "p": 2},
               times={"values": [0.25, 0.5]}, numerics={"N": 32, "paths": 500, "seed": 4})
    path = write(tmp_path, "d.json", cfg)
    assert main(["run", str(path), "--out", str(tmp_path / "one"), "--threads", "1"]) == 0
    assert main(["run", str(path), "--out", str(tmp_path / "four"), "--threads", "4"]) == 0
    for name in ("results.csv", "results.json"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "four" / name).read_bytes()
    manifest = json.loads((tmp_path / "four" / "manifest.json").read_text())
    assert manifest["workers"] == 4 and manifest["seed"] == 4
    assert main(["run", str(path), "--out", str(tmp_path / "s"), "--seed", "5"]) == 0
    assert (tmp_path / "s" / "results.csv").read_bytes() != (tmp_path / "one" / "results.csv").read_bytes()


def test_output_directory_precedence(tmp_path, monkeypatch):
    cfg = dict(PHASE, output={"path": "from_config"})
    path = write(tmp_path, "p.json", cfg)
    assert main(["run", str(path)]) == 0
    assert (tmp_path / "from_config" / "results.csv").exists()
    monkeypatch.setenv("SPDELAB_OUT", str(tmp_path / "from_env"))
    assert main(["run", str(path)]) == 0
    assert (tmp_path / "from_env" / "results.csv").exists()
    assert main(["run", str(path), "--out", str(tmp_path / "from_flag")]) == 0
    assert (tmp_path / "from_flag" / "results.csv").exists()


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", str(write(tmp_path, "p.json", PHASE)), "--out", str(blocker / "sub")]) == 2


def test_nonconvergence_exit_code(tmp_path):
    cfg = {
        "experiment": "SchemeConvergence",
        "params": {"alpha": 0.1, "beta": 0.2},
        "times": 1.0,
        "initial": {"kind": "SingleMode", "n": 1},
        "numerics": {"N": 16, "paths": 100, "seed": 0, "steps": 64, "levels": 2},
    }
    assert main(["run", str(write(tmp_path, "s.json", cfg)), "--out", str(tmp_path / "o")]) == 3
    rows = read_rows(tmp_path / "o" / "results.csv")
    assert rows[0]["status"] == "nonconverged" and rows[0]["em_error"] == ""
    assert float(rows[0]["exact_error"]) < 1e-12


def test_scheme_convergence(tmp_path):
    cfg = {
        "experiment": "SchemeConvergence",
        "params": {"alpha": 0.2, "beta": 0.3},
        "times": 1.0,
        "initial": {"kind": "SingleMode", "n": 2},
        "numerics": {"N": 4, "paths": 100, "seed": 1, "steps": 64, "levels": 3},
    }
    assert main(["run", str(write(tmp_path, "s.json", cfg)), "--out", str(tmp_path / "o")]) == 0
    rows = read_rows(tmp_path / "o" / "results.csv")
    errors = [float(r["em_error"]) for r in rows]
    assert errors[0] > errors[1] > errors[2]
    assert all(float(r["exact_error"]) < 1e-12 for r in rows)


def test_fourth_order(tmp_path):
    cfg = {
        "experiment": "FourthOrder",
        "params": {"alpha": 0, "beta": 0.6, "p": {"values": [1.5, 4]}},
        "times": {"start": 0.25, "stop": 1, "step": 0.25},
        "numerics": {"N": 24},
    }
    assert main(["run", str(write(tmp_path, "f.json", cfg)), "--out", str(tmp_path / "o")]) == 0
    rows = read_rows(tmp_path / "o" / "results.csv")
    low = [r for r in rows if r["p"] == "1.5"]
    high = [r for r in rows if r["p"] == "4.0"]
    assert all(r["status"] == "ok" and r["divergence_time"] == "inf" for r in low)
    assert float(high[0]["divergence_time"]) == pytest.approx(1 / 1.16)
    assert high[-1]["status"] == "diverged"


def test_multiplier_report(tmp_path):
    cfg = {
        "experiment": "MultiplierReport",
        "params": {"alpha": 0.2, "beta": {"values": [0.3, 1.0]}, "p": 2},
        "times": {"values": [0.5]},
        "numerics": {"N": 16, "paths": 100, "seed": 2},
    }
    assert main(["run", str(write(tmp_path, "m.json", cfg)), "--out", str(tmp_path / "o")]) == 0
    ok, bad = read_rows(tmp_path / "o" / "results.csv")
    assert ok["status"] == "ok" and float(ok["zeta_max_level"]) <= float(ok["zeta_bound"])
    assert float(ok["mq_norm_m3"]) <= 1.0 + 1e-12
    assert bad["status"] == "diverged" and bad["K_m3"] == ""


def test_blow_up_curve_and_custom_file(tmp_path):
    (tmp_path / "coeffs.json").write_text(json.dumps({"coeffs": [[0.5, 0], [0, 0], [0.5, 0]]}))
    cfg = {
        "experiment": "BlowUpCurve",
        "params": {"alpha": 0, "beta": 1, "p": 2},
        "initial": {"kind": "CustomCoeffFile", "path": "coeffs.json"},
    }
    assert main(["run", str(write(tmp_path, "b.json", cfg)), "--out", str(tmp_path / "o")]) == 0
    (row,) = read_rows(tmp_path / "o" / "results.csv")
    # finite-support data never blows up even though the formula gives a finite tau
    assert row["blow_up_time"] == "1.0" and row["divergence_time"] == "inf"
    (tmp_path / "coeffs.json").write_text(json.dumps({"coeffs": [[1, 0], [2, 0]]}))
    assert main(["validate", str(tmp_path / "b.json")]) == 2


@given(st.floats(-5, 5), st.floats(0.01, 2), st.integers(0, 50))
def test_expand_range(start, step, count):
    stop = start + count * step
    vals = expand_range({"start": start, "stop": stop, "step": step})
    assert len(vals) in (count, count + 1)
    assert vals[0] == pytest.approx(start, abs=1e-11)
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_format_value():
    assert format_value(float("inf")) == "inf"
    assert format_value(float("nan")) == ""
    assert format_value(True) == "true"
    assert format_value(None) == ""
    assert format_value(0.1) == "0.1"
    assert format_value(3) == "3"
