import csv
import json

import numpy as np
import pytest

from mincoplan import cli


def run_cli(capsys, argv):
    """Invoke the CLI in process, returning (exit_code, captured stdout)."""
    capsys.readouterr()
    code = cli.main(argv)
    return code, capsys.readouterr().out


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh)


def box_dict(lo, hi):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    rows = []
    for k in range(3):
        e = np.zeros(3)
        e[k] = 1.0
        rows.append(list(e) + [hi[k]])
        rows.append(list(-e) + [-lo[k]])
    return {"halfspaces": rows}


def free_box_config(tmp_path, name="run.json", **extra):
    cfg = {
        "corridor": {
            "kind": "polytope",
            "elements": [box_dict([-4, -2, -2], [4, 2, 2])],
        },
        "start": [-2.0, 0.0, 0.0],
        "goal": [2.0, 0.5, 0.0],
        "v_max": 4.0,
        "a_max": 8.0,
        "seed": 0,
    }
    cfg.update(extra)
    path = tmp_path / name
    write_json(path, cfg)
    return str(path)


def test_gen_corridor_then_validate(tmp_path, capsys):
    cor = tmp_path / "cor.json"
    code, _ = run_cli(capsys, ["gen-corridor", "--seed", "0", "--count", "4",
                               "--out", str(cor)])
    assert code == 0
    payload = read_json(cor)
    assert payload["kind"] in ("polytope", "ball")
    assert len(payload["elements"]) == 4
    assert "start" in payload and "goal" in payload

    code, out = run_cli(capsys, ["validate", str(cor)])
    assert code == 0
    report = json.loads(out)
    assert report["valid"] is True and report["failures"] == []


def test_validate_flags_broken_chain(tmp_path, capsys):
    cor = tmp_path / "broken.json"
    write_json(cor, {
        "kind": "polytope",
        "elements": [box_dict([0, 0, 0], [1, 1, 1]),
                     box_dict([5, 5, 5], [6, 6, 6])],
        "start": [0.5, 0.5, 0.5],
        "goal": [5.5, 5.5, 5.5],
    })
    code, out = run_cli(capsys, ["validate", str(cor)])
    assert code == 1
    report = json.loads(out)
    assert report["valid"] is False
    assert any(f[0] == "overlap" for f in report["failures"])


def test_optimize_writes_outputs(tmp_path, capsys):
    cfg = free_box_config(tmp_path)
    out = tmp_path / "plan"
    code, _ = run_cli(capsys, ["optimize", "--config", cfg,
                               "--out", str(out)])
    assert code == 0
    summary = read_json(tmp_path / "plan.json")
    assert summary["converged"] is True
    assert summary["cost"] == pytest.approx(
        summary["effort"] + summary["penalty"] + summary["time_cost"],
        rel=1e-12)
    assert max(summary["violations"].values()) <= 1e-3
    assert summary["total_duration"] == pytest.approx(
        sum(summary["durations"]))

    with open(tmp_path / "plan.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "px", "py", "pz", "vx", "vy", "vz",
                       "ax", "ay", "az", "jx", "jy", "jz"]
    assert len(rows) == 1002  # header + default 1000 intervals
    first, last = rows[1], rows[-1]
    assert [float(v) for v in first[1:4]] == pytest.approx([-2.0, 0.0, 0.0],
                                                           abs=1e-8)
    assert [float(v) for v in last[1:4]] == pytest.approx([2.0, 0.5, 0.0],
                                                          abs=1e-8)
    assert (tmp_path / "plan.traj.json").exists()


def test_optimize_is_byte_reproducible(tmp_path, capsys):
    cfg = free_box_config(tmp_path, jitter=1e-3)
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_cli(capsys, ["optimize", "--config", cfg,
                            "--out", str(a)])[0] == 0
    assert run_cli(capsys, ["optimize", "--config", cfg,
                            "--out", str(b)])[0] == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    sa = read_json(tmp_path / "a.json")
    sb = read_json(tmp_path / "b.json")
    for key in ("wall_time", "samples", "trajectory"):  # timing/output paths
        sa.pop(key), sb.pop(key)
    assert sa == sb


def test_optimize_flag_overrides_config(tmp_path, capsys):
    cfg = free_box_config(tmp_path)
    out = tmp_path / "fixed"
    code, _ = run_cli(capsys, ["optimize", "--config", cfg, "--out", str(out),
                               "--fixed-time", "6.0"])
    assert code == 0
    summary = read_json(tmp_path / "fixed.json")
    assert summary["total_duration"] == pytest.approx(6.0, abs=1e-9)
    assert summary["time_cost"] == 0.0


def test_optimize_rejects_unknown_config_key(tmp_path, capsys):
    cfg = free_box_config(tmp_path, not_a_key=1)
    code, out = run_cli(capsys, ["optimize", "--config", cfg])
    assert code == 2
    err = json.loads(out)
    assert err["error"] == "input" and "not_a_key" in err["detail"]


def test_error_taxonomy(tmp_path, capsys):
    code, out = run_cli(capsys, ["optimize", "--config",
                                 str(tmp_path / "missing.json")])
    assert code == 2 and json.loads(out)["error"] == "io"

    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, out = run_cli(capsys, ["optimize", "--config", str(bad)])
    assert code == 2 and json.loads(out)["error"] == "parse"

    empty = tmp_path / "empty.json"
    write_json(empty, {"start": [0, 0, 0]})
    code, out = run_cli(capsys, ["optimize", "--config", str(empty)])
    assert code == 2 and json.loads(out)["error"] == "input"


def test_export_round_trip(tmp_path, capsys):
    cfg = free_box_config(tmp_path)
    out = tmp_path / "plan"
    assert run_cli(capsys, ["optimize", "--config", cfg,
                            "--out", str(out)])[0] == 0
    total = read_json(tmp_path / "plan.json")["total_duration"]

    exp = tmp_path / "resampled.csv"
    code, _ = run_cli(capsys, ["export", str(tmp_path / "plan.traj.json"),
                               "--out", str(exp), "--dt", "0.01"])
    assert code == 0
    with open(exp) as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:4] == ["t", "px", "py", "pz"]
    assert len(rows) - 1 == round(total / 0.01) + 1
    assert float(rows[-1][0]) == pytest.approx(total, rel=1e-12)

    # Without --out the table goes to stdout.
    code, text = run_cli(capsys, ["export", str(tmp_path / "plan.traj.json"),
                                  "--dt", "0.5"])
    assert code == 0
    assert text.startswith("t,px,py,pz")


def test_se3_pipeline_and_columns(tmp_path, capsys):
    cfg = {
        "corridor": {
            "kind": "polytope",
            "elements": [box_dict([-4, -2, -2], [4, 2, 2])],
        },
        "start": [-2.0, 0.0, 0.0],
        "goal": [2.0, 0.5, 0.0],
        "pieces_per_primitive": 2,
        "v_max": 6.5,
        "a_max": None,
        "f_min": 5.0,
        "f_max": 18.5,
        "omega_max": 5.2,
        "shape_radii": [0.5, 0.5, 0.1],
        "seed": 0,
    }
    path = tmp_path / "se3.json"
    write_json(path, cfg)
    out = tmp_path / "se3run"
    code, _ = run_cli(capsys, ["optimize-se3", "--config", str(path),
                               "--out", str(out)])
    assert code == 0
    summary = read_json(tmp_path / "se3run.json")
    for key in ("thrust", "body_rate", "ellipsoid"):
        assert key in summary["violations"]
    # An explicit null must disable the acceleration bound entirely.
    assert "accel" not in summary["violations"]

    with open(tmp_path / "se3run.csv") as fh:
        header = fh.readline().strip().split(",")
    assert header[:13] == ["t", "px", "py", "pz", "vx", "vy", "vz",
                           "ax", "ay", "az", "jx", "jy", "jz"]
    assert header[13:] == ["f_spec", "wx", "wy", "wz",
                           "R00", "R01", "R02", "R10", "R11", "R12",
                           "R20", "R21", "R22"]


def test_gradcheck_passes(capsys):
    code, out = run_cli(capsys, ["gradcheck", "--instances", "5"])
    assert code == 0
    assert "gradcheck passed" in out
    for layer in ("minco.dq", "minco.dT", "ball", "polytope",
                  "penalty.dc", "penalty.dT", "flatness", "objective"):
        assert layer in out


def test_gradcheck_detects_injected_sign_bug(capsys):
    code, out = run_cli(capsys, ["gradcheck", "--instances", "3",
                                 "--inject-fault", "minco.dT"])
    assert code == 1
    assert "gradcheck FAILED" in out and "minco.dT" in out


def test_gradcheck_rejects_unknown_layer(capsys):
    code, out = run_cli(capsys, ["gradcheck", "--inject-fault", "nope"])
    assert code == 2
    assert json.loads(out)["error"] == "input"


def test_bench_structure(tmp_path, capsys):
    out = tmp_path / "bench.csv"
    code, _ = run_cli(capsys, ["bench", "--sizes", "200,400", "--seed", "1",
                               "--out", str(out)])
    assert code == 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4  # two sizes x s in (3, 4), current backend
    for row in rows:
        assert float(row["construct_s"]) > 0.0
        assert float(row["total_s"]) >= float(row["construct_s"])
    ms = sorted({int(r["M"]) for r in rows})
    assert ms == [200, 400]
