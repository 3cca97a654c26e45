"""Named experiments: configs, runners and hashed manifests.

Every runner writes its artifacts into ``output_dir`` and returns a dict with
the verdict checks. Artifacts are byte-reproducible for a fixed config; only
the manifest's wall time varies between runs.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .entropy import EntropyConfig, entropy, landscape_strict_max_scan
from .errors import BlowupDetected, ConfigError, HMError
from .flow import (
    HINGE_ISOMETRY,
    FlowState,
    StopRule,
    diameter,
    hemisphere_perturb,
    run_until,
    symmetry_drift,
)
from .maps import constant_curve, dumps_map, equator_curve, hinge_curve, profile_to_grid
from .quadrature import Basepoint
from .solitons import (
    ShootingProblem,
    extend_profile,
    gap_theorem_check,
    shoot_or_constant,
    weighted_identity_suite,
)
from .sphere import HeightFunction, HingeConvexFunction
from .stability import (
    conformal_certificates,
    entropy_bound_audit,
    mu1_estimate,
    perpendicular_conformal_test,
    stability_report,
)

log = logging.getLogger(__name__)

EXPERIMENTS = ("hinge_curve", "hemisphere_longtime", "soliton_pipeline", "stability_sweep")


# ---------------------------------------------------------------------------
# configs


@dataclass(frozen=True)
class HingeParams:
    eps: float = 0.1
    N: int = 512
    cfl: float = 0.2
    max_time: float = 2.0
    gradient_below: float | None = None
    cadence: int = 100
    hinge_c: float = 0.05
    hinge_kappa: float = 200.0
    hinge_axes: tuple = (1, 2)
    x3_tol: float = 0.01
    symmetry_tol: float = 1e-8

    def validate(self):
        _require(0 <= self.eps < np.pi / 2, "eps must lie in [0, pi/2)")
        _require(self.N >= 16 and self.N % 4 == 0, "N must be a multiple of 4, at least 16")
        _require(0 < self.cfl <= 0.25, "cfl must lie in (0, 0.25]")
        _require(self.max_time > 0 and self.cadence >= 1, "max_time and cadence must be positive")
        _require(0 < self.hinge_c < 1 and self.hinge_kappa > 0, "hinge function needs 0 < c < 1, kappa > 0")


@dataclass(frozen=True)
class HemisphereParams:
    eps: float = 0.05
    base: str = "hinge"
    base_eps: float = 0.1
    N: int = 128
    cfl: float = 0.2
    max_time: float = 40.0
    energy_below: float = 1e-10
    diameter_tol: float = 1e-4
    monotone_tol: float = 1e-8
    cadence: int = 100

    def validate(self):
        _require(0 < self.eps < 1, "eps must lie in (0, 1)")
        _require(self.base in ("hinge", "equator", "constant"), "base must be hinge, equator or constant")
        _require(self.N >= 16 and self.N % 4 == 0, "N must be a multiple of 4, at least 16")
        _require(0 < self.cfl <= 0.25, "cfl must lie in (0, 0.25]")
        _require(self.max_time > 0 and self.energy_below > 0, "max_time and energy_below must be positive")


@dataclass(frozen=True)
class PipelineParams:
    m: int = 3
    J: int = 2000
    r_max: float | None = None
    entropy_r_max: float = 24.0
    wind: float = 1.0
    sector: str = "equivariant"
    grid_N: int = 17
    sharp: bool = False
    exclusion: float = 0.5
    rho_points: int = 21
    logt_points: int = 21
    starts: int = 5
    budget: int = 500
    lift: bool = True

    def validate(self):
        _require(2 <= self.m <= 8, "m must lie in [2, 8]")
        _require(self.J >= 64 and self.J % 2 == 0, "J must be even and at least 64")
        _require(self.wind > 0, "wind must be positive")
        _require(self.sector in ("equivariant", "grid"), "sector must be equivariant or grid")
        _require(self.sector == "equivariant" or self.m == 3, "the grid sector needs m = 3")
        _require(self.exclusion > 0, "exclusion radius must be positive")
        _require(self.entropy_r_max >= (self.r_max or 0.0), "entropy_r_max must not shrink the grid")


@dataclass(frozen=True)
class SweepParams:
    ms: tuple = (3,)
    sectors: tuple = ("equivariant",)
    thresholds: tuple = ("standard",)
    workers: int = 1
    J: int = 2000
    entropy_r_max: float = 24.0
    rho_points: int = 21
    logt_points: int = 21

    def validate(self):
        _require(all(2 <= int(m) <= 8 for m in self.ms), "m values must lie in [2, 8]")
        _require(all(s in ("equivariant", "grid") for s in self.sectors), "sectors must be equivariant or grid")
        _require(all(t in ("standard", "sharp") for t in self.thresholds), "thresholds must be standard or sharp")
        _require(1 <= self.workers <= 16, "workers must lie in [1, 16]")


PARAMS = {
    "hinge_curve": HingeParams,
    "hemisphere_longtime": HemisphereParams,
    "soliton_pipeline": PipelineParams,
    "stability_sweep": SweepParams,
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    params: object
    seed: int = 0
    output_dir: str = "out"

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "seed": self.seed, "output_dir": self.output_dir, "params": _plain(asdict(self.params))}


def _require(ok: bool, msg: str) -> None:
    if not ok:
        raise ConfigError(msg)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _build_params(cls, raw: dict):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("params must be a mapping")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(names))
    if unknown:
        raise ConfigError(f"unknown parameter(s) for {cls.__name__}: {', '.join(unknown)}")
    kw = {}
    for k, v in raw.items():
        default = names[k].default
        if isinstance(default, tuple) and isinstance(v, list):
            v = tuple(v)
        elif isinstance(default, float) and isinstance(v, int) and not isinstance(v, bool):
            v = float(v)
        elif isinstance(default, bool) and not isinstance(v, bool):
            raise ConfigError(f"{k} must be a boolean")
        elif isinstance(default, int) and not isinstance(default, bool) and not isinstance(v, int):
            raise ConfigError(f"{k} must be an integer")
        elif default is None and v is not None and (isinstance(v, bool) or not isinstance(v, (int, float))):
            raise ConfigError(f"{k} must be a number or null")
        kw[k] = v
    p = cls(**kw)
    p.validate()
    return p


def config_from_dict(d: dict) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise ConfigError("config must be a mapping")
    unknown = sorted(set(d) - {"experiment", "params", "seed", "output_dir"})
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    name = d.get("experiment")
    if name not in PARAMS:
        raise ConfigError(f"experiment must be one of {', '.join(EXPERIMENTS)}")
    seed = d.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed must be a nonnegative integer")
    return ExperimentConfig(name, _build_params(PARAMS[name], d.get("params")), seed, str(d.get("output_dir", "out")))


def load_config(path) -> ExperimentConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return config_from_dict(data)


# ---------------------------------------------------------------------------
# artifact writing


class Outputs:
    """Collects written files so the manifest can hash them."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.files = []

    def text(self, name: str, content: str) -> Path:
        p = self.root / name
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(content)
        if name not in self.files:
            self.files.append(name)
        return p

    def json(self, name: str, obj) -> Path:
        return self.text(name, json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")

    def csv(self, name: str, header, rows) -> Path:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
        return self.text(name, buf.getvalue())


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, Basepoint):
        return {"x0": obj.x0.tolist(), "t0": obj.t0}
    if dataclasses.is_dataclass(obj):
        return _jsonable(asdict(obj))
    return obj


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: Outputs, cfg: ExperimentConfig, wall: float, result: dict) -> dict:
    manifest = {
        "config": cfg.to_dict(),
        "versions": {
            "artifact": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pyyaml": yaml.__version__,
        },
        "wall_time_s": round(wall, 3),
        "passed": bool(result.get("passed", False)),
        "failure": result.get("failure"),
        "files": [{"path": f, "sha256": sha256_file(out.root / f)} for f in out.files],
    }
    (out.root / "manifest.json").write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")
    return manifest


def verify_manifest(root) -> bool:
    root = Path(root)
    man = json.loads((root / "manifest.json").read_text())
    return all((root / e["path"]).exists() and sha256_file(root / e["path"]) == e["sha256"] for e in man["files"])


# ---------------------------------------------------------------------------
# runners


def run_hinge_curve(p: HingeParams, out: Outputs, seed: int = 0) -> dict:
    curve = hinge_curve(p.eps, p.N)
    F = HingeConvexFunction(p.hinge_c, p.hinge_kappa, tuple(p.hinge_axes))
    state = FlowState(curve, dt=p.cfl * curve.ds**2)
    mons = {
        "max_abs_x3": lambda f: float(np.max(np.abs(f.samples[:, 2]))),
        "symmetry_drift": lambda f: symmetry_drift(f, HINGE_ISOMETRY),
    }
    final, trace = run_until(state, StopRule(p.max_time, gradient_below=p.gradient_below), mons, p.cadence, convex=F)
    E = trace.column("energy")
    x3 = float(trace.column("max_abs_x3")[-1])
    drift = float(np.max(trace.column("symmetry_drift")))
    exits = [e for e in trace.events if e["event"] == "OutOfDomain"]
    out.text("trace.csv", trace.to_csv())
    out.text("final_curve.json", dumps_map(final.map) + "\n")
    moving = p.eps > 0
    checks = {
        "max_abs_x3": x3 <= p.x3_tol,
        "energy_decreasing": bool(np.all(np.diff(E) < 0)) if moving else bool(np.all(np.diff(E) <= 1e-12)),
        "symmetry_drift": drift <= p.symmetry_tol,
    }
    if moving:
        checks["domain_exit"] = bool(exits)
    verdict = {
        "max_abs_x3": x3,
        "energy_initial": float(E[0]),
        "energy_final": float(E[-1]),
        "symmetry_drift": drift,
        "domain_exit": exits[0] if exits else None,
        "final_time": final.time,
        "steps": final.step_count,
        "checks": checks,
        "passed": all(checks.values()),
    }
    out.json("verdict.json", verdict)
    return verdict


def _hemisphere_base(p: HemisphereParams):
    if p.base == "hinge":
        return hinge_curve(p.base_eps, p.N)
    if p.base == "equator":
        return equator_curve(p.N)
    return constant_curve(p.N)


def run_hemisphere_longtime(p: HemisphereParams, out: Outputs, seed: int = 0) -> dict:
    lifted = hemisphere_perturb(_hemisphere_base(p), p.eps)
    axis = np.eye(lifted.n + 1)[-1]
    F = HeightFunction(axis)
    state = FlowState(lifted, dt=p.cfl * lifted.ds**2)
    mons = {"min_height": lambda f: float(np.min(f.samples[:, -1])), "diameter": diameter}
    final, trace = run_until(state, StopRule(p.max_time, energy_below=p.energy_below), mons, p.cadence, convex=F)
    sup_phi = trace.column("convex_sup")
    inc = float(np.max(np.diff(sup_phi))) if len(sup_phi) > 1 else 0.0
    min_h = trace.column("min_height")
    E = float(trace.column("energy")[-1])
    diam = float(trace.column("diameter")[-1])
    out.text("trace.csv", trace.to_csv())
    out.text("final_curve.json", dumps_map(final.map) + "\n")
    checks = {
        "sup_minus_height_nonincreasing": inc <= p.monotone_tol,
        "height_floor": bool(np.min(min_h) >= p.eps * (1 - p.monotone_tol)),
        "final_energy": E <= p.energy_below,
        "final_diameter": diam <= p.diameter_tol,
    }
    verdict = {
        "max_increase_sup_minus_height": inc,
        "min_height": float(np.min(min_h)),
        "energy_final": E,
        "diameter_final": diam,
        "final_time": final.time,
        "steps": final.step_count,
        "checks": checks,
        "passed": all(checks.values()),
    }
    out.json("verdict.json", verdict)
    return verdict


def soliton_bundle(p: PipelineParams, seed: int = 0) -> tuple[dict, dict]:
    """The pipeline's computations; returns (bundle, side tables) without touching disk."""
    prob = ShootingProblem(m=p.m, r_max=p.r_max, J=p.J)
    prof, fit, nontrivial = shoot_or_constant(prob)
    warnings = [] if nontrivial else [f"no nontrivial soliton for m = {p.m}; constant pipeline"]
    if p.wind != 1.0:
        prof = prof.replace(p.wind * prof.psi)
        warnings.append(f"synthetic: profile wound by a factor {p.wind:g}; not a soliton")
    bundle = {"m": p.m, "n": prof.n, "nontrivial": nontrivial, "warnings": warnings, "fit": asdict(fit)}
    is_soliton = nontrivial and p.wind == 1.0
    if is_soliton:
        bundle["identities"] = weighted_identity_suite(prof)
        bundle["gap"] = asdict(gap_theorem_check(prof))
    big = extend_profile(prof, p.entropy_r_max, polish=is_soliton)
    ecfg = EntropyConfig(
        starts=p.starts, budget=p.budget, rho_points=p.rho_points, logt_points=p.logt_points, seed=seed
    )
    rep = entropy(big, ecfg)
    bundle["entropy"] = {k: v for k, v in rep.to_dict().items() if k != "landscape"}
    scan = landscape_strict_max_scan(big, p.exclusion, ecfg, report=rep)
    bundle["strict_max_scan"] = asdict(scan)
    bp = rep.argmax
    stab = stability_report(prof, basepoint=Basepoint(bp.x0, bp.t0), sharp=p.sharp)
    if p.sector == "grid":
        g = mu1_estimate(profile_to_grid(prof, N=p.grid_N, R_max=min(prof.R_max, 6.0)))
        stab.details["grid_sector"] = {"mu": g.value, "converged": g.converged, "label": g.label}
        if g.converged and g.value < stab.mu1_estimate:
            stab.mu1_estimate = g.value
    bundle["stability"] = asdict(stab)
    conf = conformal_certificates(prof, basepoint=Basepoint(bp.x0, bp.t0), sharp=p.sharp)
    bundle["conformal"] = asdict(conf)
    if prof.n >= 3:
        bundle["audit"] = asdict(entropy_bound_audit(prof, stab, rep))
    else:
        bundle["audit"] = None
        warnings.append("entropy bound needs n >= 3; audit skipped")
    if p.lift and prof.n == prof.m:
        lifted = prof.lifted(1)
        perp = perpendicular_conformal_test(lifted, np.eye(lifted.n + 1)[-1])
        bundle["perpendicular"] = asdict(perp)
    tables = {"landscape": rep.landscape, "profile": dumps_map(prof)}
    return bundle, tables


def pipeline_checks(bundle: dict) -> dict:
    checks = {}
    if bundle["audit"] is not None:
        checks["audit_consistent"] = bool(bundle["audit"]["consistent"])
    if bundle["m"] == 2:
        # two-dimensional sources admit no nontrivial solitons
        checks["trivial_only"] = not bundle["nontrivial"]
    if bundle["nontrivial"] and not any("synthetic" in w for w in bundle["warnings"]):
        named = bundle["stability"]["named_eigen_residuals"]
        checks["position_field_rayleigh"] = named.get("position_field", np.inf) <= 1e-3
        checks["trace_identity"] = bundle["conformal"]["trace_residual"] <= 1e-3
        checks["strict_max"] = bundle["strict_max_scan"]["verdict"] == "STRICT"
        checks["gap"] = bundle["gap"]["verdict"] == "NONTRIVIAL"
        if "perpendicular" in bundle:
            checks["perpendicular"] = bundle["perpendicular"]["verdict"] == "UNSTABLE_OR_CONSTANT"
    return checks


def run_soliton_pipeline(p: PipelineParams, out: Outputs, seed: int = 0) -> dict:
    bundle, tables = soliton_bundle(p, seed)
    checks = pipeline_checks(bundle)
    bundle["checks"] = checks
    bundle["passed"] = all(checks.values())
    out.json("bundle.json", bundle)
    out.text("profile.json", tables["profile"] + "\n")
    rows = [(float(np.linalg.norm(e["x0"])), e["t0"], e["xi"]) for e in tables["landscape"]]
    out.csv("landscape.csv", ["rho", "t0", "xi"], rows)
    return bundle


def _sweep_cell(args):
    m, sector, threshold, sp, seed = args
    p = PipelineParams(
        m=m, J=sp.J, sector=sector, sharp=threshold == "sharp", entropy_r_max=sp.entropy_r_max,
        rho_points=sp.rho_points, logt_points=sp.logt_points,
    )
    try:
        p.validate()
        bundle, _ = soliton_bundle(p, seed)
        return {"ok": True, "bundle": bundle}
    except (HMError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        return {"ok": False, "error": f"{type(exc).__name__}: {exc}"}


def run_stability_sweep(p: SweepParams, out: Outputs, seed: int = 0) -> dict:
    cells = [(int(m), s, t, p, seed) for m in p.ms for s in p.sectors for t in p.thresholds]
    if p.workers > 1:
        with ProcessPoolExecutor(max_workers=p.workers) as pool:
            results = list(pool.map(_sweep_cell, cells))
    else:
        results = [_sweep_cell(c) for c in cells]
    rows, failures = [], 0
    for (m, s, t, _, _), res in zip(cells, results):
        name = f"cell_m{m}_{s}_{t}"
        if res["ok"]:
            b = res["bundle"]
            out.json(f"{name}.json", b)
            st = b["stability"]
            rows.append((m, s, t, b["entropy"]["lambda"], st["mu1_estimate"], min(st["conformal_rayleighs"]), st["verdict"], ""))
        else:
            failures += 1
            rows.append((m, s, t, "", "", "", "FAILED", res["error"]))
    out.csv("summary.csv", ["m", "sector", "threshold", "lambda", "mu1_upper_bound", "min_conformal_rayleigh", "verdict", "error"], rows)
    return {"cells": len(cells), "failures": failures, "checks": {"cells_completed": failures == 0}, "passed": failures == 0}


RUNNERS = {
    "hinge_curve": run_hinge_curve,
    "hemisphere_longtime": run_hemisphere_longtime,
    "soliton_pipeline": run_soliton_pipeline,
    "stability_sweep": run_stability_sweep,
}


def run_experiment(cfg: ExperimentConfig, output_dir=None) -> dict:
    """Run, write artifacts and the manifest; failures are recorded, not raised."""
    out = Outputs(output_dir or cfg.output_dir)
    t = time.perf_counter()
    try:
        result = RUNNERS[cfg.experiment](cfg.params, out, cfg.seed)
    except BlowupDetected as exc:
        log.error("flow blowup: %s", exc)
        result = {"passed": False, "failure": {"type": "BlowupDetected", "message": str(exc)}}
        if exc.trace is not None:
            out.text("trace.csv", exc.trace.to_csv())
    manifest = write_manifest(out, cfg, time.perf_counter() - t, result)
    result["manifest"] = manifest
    return result
