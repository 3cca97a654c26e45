from __future__ import annotations

import json

import numpy as np
import yaml

from hmentropy.cli import main
from hmentropy.maps import constant_profile, dumps_map, hinge_curve, loads_map


def test_flow_command(tmp_path):
    src = tmp_path / "curve.json"
    src.write_text(dumps_map(hinge_curve(0.1, 64)))
    rc = main(["flow", "--input", str(src), "--max-time", "0.05", "--trace", str(tmp_path / "t.csv"), "--output", str(tmp_path / "f.json")])
    assert rc == 0
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0].startswith("time,energy")
    E = [float(l.split(",")[1]) for l in lines[1:]]
    assert all(b < a for a, b in zip(E, E[1:]))
    final = json.loads((tmp_path / "f.json").read_text())
    assert final["time"] >= 0.05 - 1e-12


def test_entropy_command_on_constant(tmp_path):
    src = tmp_path / "c.json"
    src.write_text(dumps_map(constant_profile(3, 200, 10.0)))
    rc = main(["entropy", "--input", str(src), "--basepoint-grid", "5x5", "--output", str(tmp_path / "e.json")])
    assert rc == 0
    rep = json.loads((tmp_path / "e.json").read_text())
    assert rep["lambda"] == 0.0 and rep["status"] == "CONVERGED"


def test_shoot_and_stability_commands(tmp_path):
    out = tmp_path / "sol.json"
    assert main(["soliton-shoot", "--m", "3", "--J", "1000", "--output", str(out), "--fit", str(tmp_path / "fit.json")]) == 0
    prof = loads_map(out.read_text())
    assert prof.m == 3 and prof.J == 1000 and np.max(prof.psi) > 1
    assert json.loads((tmp_path / "fit.json").read_text())["residual_weighted"] <= 1e-6
    rc = main(["stability", "--input", str(out), "--fields", "dilation", "--output", str(tmp_path / "s.json")])
    assert rc == 0
    rep = json.loads((tmp_path / "s.json").read_text())
    assert abs(rep["named_eigen_residuals"]["position_field"]) <= 1e-3
    assert main(["stability", "--input", str(out), "--fields", "bogus"]) == 2


def test_shoot_m2_fails_cleanly(tmp_path):
    assert main(["soliton-shoot", "--m", "2", "--J", "400", "--output", str(tmp_path / "x.json")]) == 1


def test_experiment_exit_codes(tmp_path):
    cfg = {"experiment": "hinge_curve", "params": {"eps": 0.0, "N": 64, "max_time": 0.05}}
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump(cfg))
    assert main(["experiment", "hinge_curve", "--config", str(path), "--output-dir", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "manifest.json").exists()
    assert main(["experiment", "soliton_pipeline", "--config", str(path)]) == 2
    cfg["params"]["nonsense"] = 3
    path.write_text(yaml.safe_dump(cfg))
    assert main(["experiment", "hinge_curve", "--config", str(path)]) == 2


def test_failed_verdict_exit_code(tmp_path):
    # a hinge run too short to reach the great circle fails its max|x3| check
    cfg = {"experiment": "hinge_curve", "params": {"eps": 0.1, "N": 64, "max_time": 0.01, "hinge_c": 0.05, "hinge_kappa": 200.0}}
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump(cfg))
    assert main(["experiment", "hinge_curve", "--config", str(path), "--output-dir", str(tmp_path / "o")]) == 1
