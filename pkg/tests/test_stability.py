from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hmentropy.entropy import EntropyReport
from hmentropy.errors import DegenerateSection, InvalidBasis, PreconditionFailed, UnsupportedDimension
from hmentropy.maps import constant_profile, profile_from_function
from hmentropy.sections import ModeSection
from hmentropy.sphere import random_points, random_tangents
from hmentropy.stability import (
    PolyField,
    StabilityReport,
    apply_Lf,
    apply_Lf_general_zeta,
    conformal_certificates,
    conformal_quotient_parts,
    entropy_bound,
    entropy_bound_audit,
    fpp_certificate,
    fpp_grid_search,
    mu1_estimate,
    perpendicular_conformal_test,
    rayleigh_quotient,
    sector_forms,
    two_path_check,
    weighted_norm2,
)


def _random_section(profile, rng, scale: float = 8.0) -> ModeSection:
    r = profile.r
    env = np.exp(-(r**2) / scale)
    c = rng.normal(size=5)
    zeta = rng.normal(size=profile.m)
    return ModeSection.build(
        profile,
        phi=(c[0] * r + c[1] * r**3) * env,
        A=np.outer(zeta, (c[2] + c[3] * r**2) * env),
        B=np.outer(zeta, (c[2] + c[4] * r**2) * env),
    )


@pytest.fixture(scope="module")
def small_profile():
    return profile_from_function(lambda r: 2 * np.arctan(r / 1.3), 3, 400, 10.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_forms_are_symmetric(small_profile, seed):
    rng = np.random.default_rng(seed)
    F = sector_forms(small_profile)
    X, Y = _random_section(small_profile, rng), _random_section(small_profile, rng)
    a, b = F.pair(X, Y), F.pair(Y, X)
    assert abs(a - b) <= 1e-10 * max(1.0, abs(a))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_ou_operator_is_nonnegative(seed):
    rng = np.random.default_rng(seed)
    c = constant_profile(3, 400, 10.0)
    assert rayleigh_quotient(c, _random_section(c, rng)) >= -1e-10


def test_zero_section_has_no_quotient(small_profile):
    with pytest.raises(DegenerateSection):
        rayleigh_quotient(small_profile, ModeSection.zeros(small_profile))


def test_exact_eigenpairs_and_refinement(soliton3, soliton3_coarse):
    errs = []
    for prof, _ in (soliton3_coarse, soliton3):
        tau = ModeSection.tau(prof)
        zeta = ModeSection.translation(prof, np.eye(3)[0])
        errs.append((abs(rayleigh_quotient(prof, tau) + 1.0), abs(rayleigh_quotient(prof, zeta) + 0.5)))
    (t1, z1), (t2, z2) = errs
    assert t2 <= 1e-3 and z2 <= 1e-3
    assert t1 / t2 >= 3.5 and z1 / z2 >= 3.5


def test_constant_field_is_eigenvector(soliton3):
    prof = soliton3[0]
    X = ModeSection.translation(prof, np.array([0.0, 1.0, 0.0]))
    LX = apply_Lf(prof, X)
    resid = LX + X * 0.5
    F = sector_forms(prof)
    # the two outermost nodes carry the free-boundary flux
    v = F._ab(resid.A[1], resid.B[1])[:-4]
    err = np.sqrt(np.sum(F.M1[:-4] * v * v))
    assert err <= 1e-3 * np.sqrt(weighted_norm2(prof, X))


def test_two_path_agreement(soliton3):
    prof = soliton3[0]
    fields = [
        PolyField((0.0,), (1.0,), (0.0,), (1.0, 0.0, 0.0)),
        PolyField((0.5,), (0.0,), (0.0,), (1.0, 0.0, 0.0)),
        PolyField((0.0, 0.1), (0.2,), (0.05,), (0.0, 1.0, 0.0)),
    ]
    for z in fields:
        assert two_path_check(prof, z) <= 1e-3


def test_constant_zeta_closed_form_reduces(soliton3):
    prof = soliton3[0]
    fs, out = apply_Lf_general_zeta(prof, PolyField((0.0,), (1.0,), (0.0,), (0.0, 0.0, 1.0)))
    expected = -0.5 * fs.Tf[:, 2, :]
    assert np.max(np.abs(out - expected)) <= 1e-12


def test_trace_identity_on_soliton(soliton3):
    rep = conformal_certificates(soliton3[0])
    assert rep.trace_residual <= 1e-3


@pytest.mark.parametrize("n,m", [(2, 2), (3, 3), (5, 3)])
def test_trace_identity_exact_on_injections(n, m, rng):
    P = 300
    f = random_points(rng, n, P)
    Tf = np.stack([random_tangents(rng, f) for _ in range(m)], axis=1)
    Gw = rng.uniform(0, 1, P)
    Q, _ = np.linalg.qr(rng.normal(size=(n + 1, n + 1)))
    num, _, energy = conformal_quotient_parts(f, Tf, Gw, Q)
    assert abs(num.sum() - (2 - n) * energy) <= 1e-12 * max(1.0, abs(energy))


def test_constant_map_conformal():
    rep = conformal_certificates(constant_profile(3, 400, 10.0))
    assert all(r == 0 for r in rep.rayleighs)
    assert rep.trace_target == 0 and rep.trace_closed == 0
    with pytest.raises(InvalidBasis):
        conformal_certificates(constant_profile(3, 400, 10.0), poles=np.ones((4, 4)))


def test_fpp_closed_form_matches_search(soliton3, rng):
    prof = soliton3[0]
    worst = 0.0
    for _ in range(20):
        X = _random_section(prof, rng)
        a, b = fpp_certificate(prof, X), fpp_grid_search(prof, X)
        assert b.value <= a.value + 1e-12 * max(1.0, abs(a.value))
        worst = max(worst, abs(a.value - b.value) / max(1.0, abs(a.value)))
    assert worst <= 1e-6


def test_fpp_invariance_directions(soliton3):
    prof = soliton3[0]
    for X in (ModeSection.tau(prof), *(ModeSection.translation(prof, e) for e in np.eye(3))):
        c = fpp_certificate(prof, X)
        assert abs(c.value) <= 2e-3 * c.norm2


def test_perpendicular_pole(soliton3):
    lifted = soliton3[0].lifted(1)
    res = perpendicular_conformal_test(lifted, np.eye(5)[4])
    assert res.quotient < 0 and res.verdict == "UNSTABLE_OR_CONSTANT"
    const = constant_profile(3, 400, 10.0).lifted(1)
    assert perpendicular_conformal_test(const, np.eye(5)[4]).verdict == "CONSTANT"
    with pytest.raises(PreconditionFailed):
        perpendicular_conformal_test(lifted, np.eye(5)[0])


def test_mu1_constant_map_is_ou_bottom():
    res = mu1_estimate(constant_profile(3, 2000, 10.0))
    assert res.converged and abs(res.value) <= 1e-3


def test_mu1_soliton_below_minus_one(soliton3):
    res = mu1_estimate(soliton3[0])
    assert res.value <= -1.0 + 1e-6


def test_entropy_bounds():
    assert entropy_bound(3) == 2.25 and entropy_bound(4) == 1.5 and entropy_bound(5) == 1.25
    with pytest.raises(UnsupportedDimension):
        entropy_bound(2)


def _report(verdict, rayleighs):
    return StabilityReport(-1.0, True, {}, rayleighs, [], verdict)


def test_audit_logic():
    prof = constant_profile(3, 100, 10.0)
    assert entropy_bound_audit(prof, _report("STABLE_CANDIDATE", [0.0]), 0.5).consistent
    assert not entropy_bound_audit(prof, _report("STABLE_CANDIDATE", [0.0]), 2.3).consistent
    assert entropy_bound_audit(prof, _report("UNSTABLE", [-2.0]), 2.3).consistent
    assert not entropy_bound_audit(prof, _report("UNSTABLE", [-1.2]), 2.3).consistent
    rep = EntropyReport(2.4, {"x0": [0.0] * 3, "t0": 1.0}, [], [], "CONVERGED", 0, False)
    assert not entropy_bound_audit(prof, _report("STABLE_CANDIDATE", [0.0]), rep).consistent
