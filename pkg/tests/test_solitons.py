from __future__ import annotations

import numpy as np
import pytest
from scipy.integrate import solve_bvp

from hmentropy.errors import NoSolutionInBracket, OutOfDomain, UnsupportedDimension
from hmentropy.maps import constant_profile, profile_from_function
from hmentropy.quadrature import Basepoint
from hmentropy.solitons import (
    ShootingProblem,
    bumped_profile,
    conformal_metric_check,
    convex_supporting_rigidity_check,
    gap_theorem_check,
    shoot_equivariant_soliton,
    shoot_or_constant,
    soliton_residual,
    transport,
    weighted_identity_suite,
)

# Slope from the boundary-value oracle below (frozen; R = 10 far-field Robin condition).
BVP_SLOPE_M3 = 2.738753125894009


def _bvp_slope(m: int = 3, r0: float = 1e-3, R: float = 10.0) -> float:
    """Collocation solve of the reduced soliton ODE with the slope as an unknown parameter."""

    def rhs(r, y, p):
        psi, d = y
        return np.vstack([d, -((m - 1) / r - r / 2) * d + (m - 1) * np.sin(2 * psi) / (2 * r * r)])

    def bc(ya, yb, p):
        a = p[0]
        b = (a / 2 - (m - 1) * (2 / 3) * a**3) / (6 + 2 * (m - 1))
        return np.array([ya[0] - (a * r0 + b * r0**3), ya[1] - (a + 3 * b * r0**2), yb[1] + (m - 1) * np.sin(2 * yb[0]) / R**3])

    r = np.linspace(r0, R, 400)
    guess = np.vstack([1.5 * np.tanh(2 * r), 3 / np.cosh(2 * r) ** 2])
    sol = solve_bvp(rhs, bc, r, guess, p=[2.0], tol=1e-10, max_nodes=200000)
    assert sol.status == 0
    return float(sol.p[0])


def test_bvp_oracle_frozen():
    assert _bvp_slope() == pytest.approx(BVP_SLOPE_M3, rel=1e-8)


def test_shooting_slope_matches_oracle(soliton3):
    _, fit = soliton3
    assert fit.slope == pytest.approx(BVP_SLOPE_M3, rel=1e-5)


def test_shooting_residuals(soliton3):
    prof, fit = soliton3
    assert fit.residual_weighted <= 1e-6
    assert fit.residual_sup <= 1e-6
    assert fit.residual_weighted >= 0 and fit.residual_sup >= 0


def test_slope_zero_is_constant():
    prof, fit = shoot_equivariant_soliton(ShootingProblem(m=3, slope=0.0, J=400))
    assert np.all(prof.psi == 0) and fit.residual_sup == 0 and fit.residual_weighted == 0


def test_m2_has_only_trivial_solutions():
    with pytest.raises(NoSolutionInBracket):
        shoot_equivariant_soliton(ShootingProblem(m=2, J=400))
    prof, fit, found = shoot_or_constant(ShootingProblem(m=2, J=400))
    assert not found and np.all(prof.psi == 0)


def test_identity_suite_on_soliton(soliton3):
    res = weighted_identity_suite(soliton3[0])
    assert set(res) >= {"a", "b", "c", "d", "e", "lemma_position", "lemma_constant", "lemma_cubic", "lemma_directional"}
    assert max(res.values()) <= 1e-3


def test_identity_suite_constant_map():
    assert all(v == 0 for v in weighted_identity_suite(constant_profile(3, 400, 10.0)).values())


def test_bumped_map_breaks_identity_a(soliton3):
    good = weighted_identity_suite(soliton3[0])["a"]
    bad = weighted_identity_suite(bumped_profile(soliton3[0]), strict=False)["a"]
    assert bad > 10 * max(good, 1e-12)


def test_transport_covariance(soliton3):
    prof = soliton3[0]
    x0, t0 = np.array([0.5, -0.25, 0.0]), 2.0
    moved = transport(prof, x0, t0)
    a = soliton_residual(prof)
    b = soliton_residual(moved, Basepoint(x0, t0))
    assert b.residual_weighted * t0 == pytest.approx(a.residual_weighted, abs=1e-12)
    assert b.sup_energy_density * t0 == pytest.approx(a.sup_energy_density, rel=1e-12)


def test_conformal_metric_check(soliton3):
    assert conformal_metric_check(soliton3[0]) <= 1e-12
    assert conformal_metric_check(constant_profile(3, 200, 10.0)) == 0
    with pytest.raises(UnsupportedDimension):
        conformal_metric_check(constant_profile(2, 200, 10.0))


def test_gap_theorem(soliton3):
    rep = gap_theorem_check(soliton3[0])
    assert rep.verdict == "NONTRIVIAL" and rep.sup_tf2 > 1
    assert gap_theorem_check(constant_profile(3, 200, 10.0)).verdict == "TRIVIAL"


def test_gap_negative_control():
    # energy parked where the Gaussian is negligible: small residual, sup |Tf|^2 = 0.5
    shape = lambda r: np.exp(-((r - 9) ** 2) / 0.5)
    p = profile_from_function(lambda r: 0.1 * shape(r), 3, 2000, 10.0)
    A = 0.1 * np.sqrt(0.5 / (2 * p.energy_density().max()))
    p = profile_from_function(lambda r: A * shape(r), 3, 2000, 10.0)
    rep = gap_theorem_check(p)
    assert rep.sup_tf2 == pytest.approx(0.5, abs=1e-3)
    assert rep.verdict == "INCONSISTENT"


def test_rigidity_checks(soliton3):
    assert convex_supporting_rigidity_check(constant_profile(3, 400, 10.0)).verdict == "CONSTANT"
    cap = profile_from_function(lambda r: 0.5 * np.arctan(r), 3, 1000, 10.0)
    assert convex_supporting_rigidity_check(cap).verdict == "NOT_A_SOLITON"
    assert np.max(soliton3[0].psi) > np.pi / 2
    with pytest.raises(OutOfDomain):
        convex_supporting_rigidity_check(soliton3[0])
