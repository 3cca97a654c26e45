from __future__ import annotations

import json

import numpy as np
import pytest
import yaml

from hmentropy.errors import ConfigError
from hmentropy.experiments import (
    PipelineParams,
    config_from_dict,
    load_config,
    pipeline_checks,
    run_experiment,
    soliton_bundle,
    verify_manifest,
)


def _hinge(eps=0.1, **extra):
    params = {"eps": eps, "N": 64, "max_time": 0.2, "hinge_c": 0.05, "hinge_kappa": 200.0, "hinge_axes": [1, 2]}
    params.update(extra)
    return config_from_dict({"experiment": "hinge_curve", "seed": 0, "params": params})


def _outputs(root):
    files = {}
    for p in sorted(root.rglob("*")):
        if p.is_file():
            data = p.read_bytes()
            if p.name == "manifest.json":
                man = json.loads(data)
                man.pop("wall_time_s")
                data = json.dumps(man, sort_keys=True).encode()
            files[str(p.relative_to(root))] = data
    return files


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        config_from_dict({"experiment": "hinge_curve", "params": {"eps": 0.1, "bogus": 1}})
    with pytest.raises(ConfigError):
        config_from_dict({"experiment": "hinge_curve", "extra": 1})
    with pytest.raises(ConfigError):
        config_from_dict({"experiment": "nope"})


def test_out_of_range_and_type_errors():
    with pytest.raises(ConfigError):
        config_from_dict({"experiment": "hinge_curve", "params": {"eps": 2.0}})
    with pytest.raises(ConfigError):
        config_from_dict({"experiment": "hinge_curve", "params": {"N": 64.5}})
    with pytest.raises(ConfigError):
        config_from_dict({"experiment": "hemisphere_longtime", "params": {"eps": 1.0}})
    with pytest.raises(ConfigError):
        config_from_dict({"experiment": "hinge_curve", "seed": -1})


def test_shipped_configs_parse(tmp_path):
    from pathlib import Path

    root = Path(__file__).resolve().parents[1] / "configs"
    names = {load_config(p).experiment for p in root.glob("*.yaml")}
    assert names == {"hinge_curve", "hemisphere_longtime", "soliton_pipeline", "stability_sweep"}
    bad = tmp_path / "bad.yaml"
    bad.write_text("experiment: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_manifest_lists_and_hashes_outputs(tmp_path):
    res = run_experiment(_hinge(), tmp_path)
    man = json.loads((tmp_path / "manifest.json").read_text())
    listed = {e["path"] for e in man["files"]}
    assert listed == {"trace.csv", "final_curve.json", "verdict.json"}
    assert verify_manifest(tmp_path)
    assert man["config"]["params"]["eps"] == 0.1 and "numpy" in man["versions"]
    (tmp_path / "trace.csv").write_text("tampered\n")
    assert not verify_manifest(tmp_path)
    assert "checks" in res


def test_trace_csv_header(tmp_path):
    run_experiment(_hinge(), tmp_path)
    assert (tmp_path / "trace.csv").read_text().startswith("time,energy,")


def test_repeat_runs_identical(tmp_path):
    run_experiment(_hinge(), tmp_path / "a")
    run_experiment(_hinge(), tmp_path / "b")
    assert _outputs(tmp_path / "a") == _outputs(tmp_path / "b")


def test_flat_hinge_is_stationary(tmp_path):
    res = run_experiment(_hinge(eps=0.0), tmp_path)
    assert res["passed"] and res["max_abs_x3"] == 0.0
    assert res["energy_final"] == pytest.approx(res["energy_initial"], rel=1e-12)


def test_hemisphere_constant_base_converges_instantly(tmp_path):
    cfg = config_from_dict({"experiment": "hemisphere_longtime", "params": {"eps": 0.5, "base": "constant", "N": 64}})
    res = run_experiment(cfg, tmp_path)
    assert res["passed"] and res["steps"] == 0


def test_blowup_is_recorded(tmp_path, monkeypatch):
    from hmentropy import flow

    monkeypatch.setattr(flow._CurveKernel, "advance", lambda self, f, dt: np.full_like(f, np.nan))
    res = run_experiment(_hinge(), tmp_path)
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert not res["passed"] and man["failure"]["type"] == "BlowupDetected"


def test_m2_pipeline_is_trivial():
    bundle, _ = soliton_bundle(PipelineParams(m=2, J=400, rho_points=5, logt_points=5, starts=2, budget=100))
    checks = pipeline_checks(bundle)
    assert checks.get("trivial_only") is True
    assert all(checks.values())


def test_one_cell_sweep_matches_pipeline(tmp_path):
    common = {"J": 1000, "rho_points": 5, "logt_points": 5}
    sweep = config_from_dict({"experiment": "stability_sweep", "params": {"ms": [3], "workers": 1, **common}})
    run_experiment(sweep, tmp_path / "s")
    pipe = config_from_dict({"experiment": "soliton_pipeline", "params": {"m": 3, "starts": 5, "budget": 500, **common}})
    run_experiment(pipe, tmp_path / "p")
    cell = json.loads(next((tmp_path / "s").glob("cell_*.json")).read_text())
    bundle = json.loads((tmp_path / "p" / "bundle.json").read_text())
    assert cell["entropy"]["lambda"] == bundle["entropy"]["lambda"]
    assert cell["stability"]["verdict"] == bundle["stability"]["verdict"]
