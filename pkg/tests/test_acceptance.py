"""One test per acceptance criterion; each prints a PASS/FAIL line to the terminal."""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np
import pytest

from hmentropy.entropy import (
    EntropyConfig,
    entropy,
    entropy_monotonicity_check,
    landscape_strict_max_scan,
    monotonicity_audit,
)
from hmentropy.experiments import PipelineParams, config_from_dict, load_config, run_experiment, soliton_bundle
from hmentropy.flow import FlowState, sample_flow
from hmentropy.maps import constant_profile
from hmentropy.sections import ModeSection
from hmentropy.solitons import (
    ShootingProblem,
    bumped_profile,
    extend_profile,
    gap_theorem_check,
    resample_profile,
    shoot_or_constant,
    weighted_identity_suite,
)
from hmentropy.sphere import ConformalField, SpherePoint, TangentVector, conformal_sum_checks, random_orthonormal, random_points, random_tangents
from hmentropy.stability import (
    conformal_certificates,
    conformal_quotient_parts,
    fpp_certificate,
    fpp_grid_search,
    mu1_estimate,
    rayleigh_quotient,
)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture
def verdict(capsys):
    def emit(label: str, ok: bool, detail: str = "") -> None:
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
        assert ok, f"{label}: {detail}"

    return emit


def _files(root: Path) -> dict:
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file():
            data = p.read_bytes()
            if p.name == "manifest.json":
                man = json.loads(data)
                man.pop("wall_time_s")  # the only field that legitimately varies
                data = json.dumps(man, sort_keys=True).encode()
            out[str(p.relative_to(root))] = data
    return out


def test_c01_conformal_algebra(verdict):
    rng = np.random.default_rng(1)
    t = time.perf_counter()
    worst = 0.0
    for n in (2, 3, 4, 5):
        basis = [ConformalField(w) for w in random_orthonormal(rng, n + 1)]
        P = random_points(rng, n, 1000)
        V = random_tangents(rng, P)
        for p, v in zip(P, V):
            sp = SpherePoint(p)
            worst = max(worst, *conformal_sum_checks(basis, sp, TangentVector(sp, v)))
    wall = time.perf_counter() - t
    verdict("C1 conformal algebra", worst <= 1e-12 and wall < 1.0, f"max residual {worst:.2e}, {wall:.2f} s")


def test_c02_exact_eigenpairs(soliton3, soliton3_coarse, verdict):
    t = time.perf_counter()
    errs = []
    for prof, _ in (soliton3_coarse, soliton3):
        errs.append(
            (
                abs(rayleigh_quotient(prof, ModeSection.translation(prof, np.eye(3)[0])) + 0.5),
                abs(rayleigh_quotient(prof, ModeSection.tau(prof)) + 1.0),
            )
        )
    (z1, t1), (z2, t2) = errs
    wall = time.perf_counter() - t
    ok = z2 <= 1e-3 and t2 <= 1e-3 and z1 / z2 >= 3.5 and t1 / t2 >= 3.5
    verdict(
        "C2 exact eigenpairs",
        ok,
        f"|R(zeta)+1/2| {z2:.2e} (ratio {z1 / z2:.2f}), |R(tau)+1| {t2:.2e} (ratio {t1 / t2:.2f})",
    )


def test_c03_soliton_identities(soliton3, verdict):
    t = time.perf_counter()
    res = weighted_identity_suite(soliton3[0])
    bad = weighted_identity_suite(bumped_profile(soliton3[0]), strict=False)["a"]
    wall = time.perf_counter() - t
    worst = max(res.values())
    ok = worst <= 1e-3 and bad > 10 * max(res["a"], 1e-300) and wall < 30
    verdict("C3 soliton identities", ok, f"max residual {worst:.2e}, bumped (a) {bad:.2e} vs {res['a']:.2e}, {wall:.1f} s")


def test_c04_trace_identity(soliton3, verdict):
    rep = conformal_certificates(soliton3[0])
    rng = np.random.default_rng(4)
    worst = 0.0
    for n, m in ((3, 3), (4, 2), (5, 4)):
        f = random_points(rng, n, 500)
        Tf = np.stack([random_tangents(rng, f) for _ in range(m)], 1)
        Gw = rng.uniform(0, 1, 500)
        num, _, energy = conformal_quotient_parts(f, Tf, Gw, random_orthonormal(rng, n + 1))
        worst = max(worst, abs(num.sum() - (2 - n) * energy) / max(1.0, abs(energy)))
    ok = rep.trace_residual <= 1e-3 and worst <= 1e-12
    verdict("C4 trace identity", ok, f"soliton {rep.trace_residual:.2e}, injections {worst:.2e}")


def test_c05_entropy_bound_pipeline(tmp_path, verdict):
    cfg = load_config(CONFIGS / "stability_sweep.yaml")
    run_experiment(cfg, tmp_path / "sweep")
    rows = []
    for cell in sorted((tmp_path / "sweep").glob("cell_*.json")):
        b = json.loads(cell.read_text())
        rows.append((b["m"], b["entropy"]["lambda"], b["audit"]["bound"], b["stability"]["verdict"], b["audit"]["consistent"]))
    # synthetic high-entropy map: the m = 3 profile wound six times
    wound, _ = soliton_bundle(PipelineParams(m=3, wind=6.0))
    rows.append(("3 wound", wound["entropy"]["lambda"], wound["audit"]["bound"], wound["stability"]["verdict"], wound["audit"]["consistent"]))
    above = [r for r in rows if r[1] > r[2]]
    ok = len(rows) == 5 and all(r[4] for r in rows) and above and all(r[3] == "UNSTABLE" for r in above)
    ok = ok and min(wound["stability"]["conformal_rayleighs"]) < -1.5
    detail = "; ".join(f"m={r[0]} lambda={r[1]:.4f} bound={r[2]} {r[3]}" for r in rows)
    verdict("C5 entropy-bound audit", bool(ok), detail)


def test_c06_monotonicity(soliton3_wide, verdict):
    t = time.perf_counter()
    start = bumped_profile(resample_profile(extend_profile(soliton3_wide, 16.0), 1600), amp=0.05)
    times, maps = sample_flow(FlowState(start, time=-1.0), -0.5, 200)
    audit = monotonicity_audit(times, maps, np.zeros(3), 0.0)
    mono = entropy_monotonicity_check(maps)
    wall = time.perf_counter() - t
    ok = len(maps) == 201 and audit.nonincreasing and mono.verdict == "PASS" and wall < 300
    ok = ok and audit.derivative_error <= 10 * (max(np.diff(times)) + maps[0].spacing ** 2)
    verdict(
        "C6 monotonicity",
        ok,
        f"F max increase {audit.max_increase:.2e}, derivative error {audit.derivative_error:.2e} "
        f"(constant {audit.error_constant:.3f}), lambda max increase {mono.max_increase:.2e}, {wall:.0f} s",
    )


def test_c07_strict_maximum(soliton3_wide, verdict):
    cfg = EntropyConfig(rho_points=21, logt_points=21)
    scan = landscape_strict_max_scan(soliton3_wide, 0.5, cfg)
    verdict("C7 strict maximum", scan.verdict == "STRICT" and scan.margin > 0, f"margin {scan.margin:.5f}, lambda {scan.lam:.8f}")


def test_c08_hinge(tmp_path, verdict):
    t = time.perf_counter()
    res = run_experiment(load_config(CONFIGS / "hinge_curve.yaml"), tmp_path)
    wall = time.perf_counter() - t
    ok = res["passed"] and res["domain_exit"] is not None and wall < 120
    exit_t = res["domain_exit"]["time"] if res["domain_exit"] else None
    verdict(
        "C8 hinge curve",
        ok,
        f"max|x3| {res['max_abs_x3']:.2e}, drift {res['symmetry_drift']:.1e}, exit at t={exit_t}, {wall:.1f} s",
    )


def test_c09_hemisphere(tmp_path, verdict):
    t = time.perf_counter()
    res = run_experiment(load_config(CONFIGS / "hemisphere_longtime.yaml"), tmp_path)
    wall = time.perf_counter() - t
    ok = res["passed"] and wall < 120
    verdict(
        "C9 hemisphere",
        ok,
        f"sup(-height) max increase {res['max_increase_sup_minus_height']:.1e}, energy {res['energy_final']:.1e}, "
        f"diameter {res['diameter_final']:.1e}, {wall:.1f} s",
    )


def test_c10_rigidity_negatives(soliton3, verdict):
    _, _, found2 = shoot_or_constant(ShootingProblem(m=2))
    sups = {}
    for m in (3, 4, 5):
        prof, _, found = shoot_or_constant(ShootingProblem(m=m))
        if found:
            sups[m] = gap_theorem_check(prof).sup_tf2
    const = constant_profile(3, 2000, 10.0)
    lam = entropy(const).lam
    mu = mu1_estimate(const)
    ok = not found2 and sups and all(s > 1 for s in sups.values()) and lam == 0.0 and abs(mu.value) <= 1e-3
    detail = f"m=2 nontrivial={found2}, sup|Tf|^2 {', '.join(f'm={k}: {v:.2f}' for k, v in sups.items())}, constant lambda={lam}, mu1={mu.value:.1e}"
    verdict("C10 rigidity negatives", bool(ok), detail)


def test_c11_fpp(soliton3, verdict):
    prof = soliton3[0]
    rng = np.random.default_rng(11)
    r = prof.r
    worst = 0.0
    for _ in range(20):
        c = rng.normal(size=5)
        env = np.exp(-(r**2) / 8)
        zeta = rng.normal(size=3)
        X = ModeSection.build(
            prof,
            phi=(c[0] * r + c[1] * r**3) * env,
            A=np.outer(zeta, (c[2] + c[3] * r**2) * env),
            B=np.outer(zeta, (c[2] + c[4] * r**2) * env),
        )
        a, b = fpp_certificate(prof, X), fpp_grid_search(prof, X)
        worst = max(worst, abs(a.value - b.value) / max(1.0, abs(a.value)))
    inv = []
    for X in (ModeSection.tau(prof), *(ModeSection.translation(prof, e) for e in np.eye(3))):
        c = fpp_certificate(prof, X)
        inv.append(abs(c.value) / c.norm2)
    ok = worst <= 1e-6 and max(inv) <= 2e-3
    verdict("C11 F'' certificates", ok, f"closed form vs search {worst:.1e}, invariance directions max {max(inv):.1e} |X|^2")


def test_c12_determinism(tmp_path, verdict):
    cfg = load_config(CONFIGS / "hinge_curve.yaml")
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    a, b = _files(tmp_path / "a"), _files(tmp_path / "b")
    sweep = config_from_dict({"experiment": "stability_sweep", "params": {"ms": [3], "J": 1000, "rho_points": 7, "logt_points": 7}})
    run_experiment(sweep, tmp_path / "c")
    run_experiment(sweep, tmp_path / "d")
    c, d = _files(tmp_path / "c"), _files(tmp_path / "d")
    ok = a == b and c == d and len(a) == 4
    verdict("C12 determinism", ok, f"hinge: {len(a)} files identical={a == b}; sweep: {len(c)} files identical={c == d}")
