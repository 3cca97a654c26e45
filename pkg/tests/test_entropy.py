from __future__ import annotations

import numpy as np
import pytest

from hmentropy.entropy import (
    EntropyConfig,
    dissipation_integrand,
    entropy,
    entropy_monotonicity_check,
    f_functional,
    landscape_strict_max_scan,
    monotonicity_audit,
)
from hmentropy.errors import PreconditionFailed
from hmentropy.maps import CylindricalMap, constant_curve, constant_profile
from hmentropy.quadrature import Basepoint

SMALL = EntropyConfig(rho_points=7, logt_points=7, starts=3, budget=300)


@pytest.fixture(scope="module")
def wide_report(soliton3_wide):
    return entropy(soliton3_wide, EntropyConfig())


def test_constant_map_entropy_zero():
    for fmap in (constant_profile(3, 400, 10.0), constant_curve(64)):
        rep = entropy(fmap)
        assert rep.lam == 0.0 and rep.status == "CONVERGED"
    assert f_functional(constant_profile(3, 400, 10.0), Basepoint(np.array([0.5, 0, 0]), 0.7)) == 0.0


def test_soliton_argmax_at_own_basepoint(wide_report, soliton3_wide):
    bp = wide_report.argmax
    assert np.linalg.norm(bp.x0) <= 1e-2 and abs(bp.t0 - 1.0) <= 1e-2
    assert wide_report.status == "CONVERGED"
    assert wide_report.lam == pytest.approx(f_functional(soliton3_wide, bp), rel=1e-12)


def test_f_functional_resolution_independent(soliton3, soliton3_coarse):
    fine, coarse = soliton3[0], soliton3_coarse[0]
    for x0, t0 in [((0, 0, 0), 1.0), ((0.5, 0, 0), 0.7), ((0.0, 1.0, 0.0), 0.5)]:
        bp = Basepoint(np.array(x0, float), t0)
        a, b = f_functional(fine, bp), f_functional(coarse, bp)
        assert abs(a - b) <= 1e-4 * max(abs(a), 1.0)


def test_cylindrical_landscape_flat_and_nonstrict(soliton3_wide):
    cyl = CylindricalMap(soliton3_wide)
    rep = entropy(cyl, SMALL)
    rows = {}
    for e in rep.landscape:
        rows.setdefault(round(np.log(e["t0"]), 9), []).append(e["xi"])
    for vals in rows.values():
        assert max(vals) - min(vals) <= 1e-6
    scan = landscape_strict_max_scan(cyl, config=SMALL, report=rep)
    assert scan.verdict == "NONSTRICT"


def test_constant_scan_is_degenerate():
    scan = landscape_strict_max_scan(constant_profile(3, 400, 10.0), config=SMALL)
    assert scan.verdict == "DEGENERATE" and scan.margin == 0.0


def test_monotonicity_negative_control():
    assert entropy_monotonicity_check([0.3, 0.31, 0.32]).verdict == "FAIL"
    assert entropy_monotonicity_check([0.3, 0.3, 0.2]).verdict == "PASS"


def test_constant_flow_is_monotone():
    maps = [constant_profile(3, 400, 10.0)] * 3
    audit = monotonicity_audit([-1.0, -0.9, -0.8], maps, np.zeros(3), 0.0)
    assert audit.values == [0.0, 0.0, 0.0] and audit.nonincreasing
    assert entropy_monotonicity_check(maps, SMALL).verdict == "PASS"


def test_soliton_dissipation_vanishes(soliton3):
    assert dissipation_integrand(soliton3[0], np.zeros(3), 1.0) <= 1e-12
    with pytest.raises(PreconditionFailed):
        dissipation_integrand(soliton3[0], np.ones(3), 1.0)


def test_audit_rejects_curves():
    with pytest.raises(PreconditionFailed):
        monotonicity_audit([-1.0], [constant_curve(64)], np.zeros(1), 0.0)


def test_entropy_deterministic(soliton3):
    a = entropy(soliton3[0], SMALL).to_json()
    b = entropy(soliton3[0], SMALL).to_json()
    assert a == b
