from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from hmentropy.entropy import f_functional
from hmentropy.errors import TruncationError
from hmentropy.maps import GridMap, constant_profile, equator_curve
from hmentropy.quadrature import Basepoint, GaussianWeight, gaussian_quadrature, tail_mass


class _FlatDensity(GridMap):
    """A lattice map whose energy density is replaced by a constant (integrand injection)."""

    level = 0.0

    def energy_density(self):
        return np.full(self.values.shape[:-1], 0.5 * self.level)


def _flat(level: float, m: int = 2) -> _FlatDensity:
    g = _FlatDensity(np.broadcast_to(np.eye(3)[2], (241,) * m + (3,)), 20.0)
    g.level = level
    return g


@pytest.mark.parametrize("m", [2, 3, 5])
def test_profile_gaussian_mass_is_one(m):
    p = constant_profile(m, 3000, 15.0)
    val = gaussian_quadrature(p, GaussianWeight(Basepoint.origin(m, 1.0)), np.ones(p.J + 1))
    assert val == pytest.approx(1.0, abs=1e-8)
    assert gaussian_quadrature(p, GaussianWeight(Basepoint.origin(m, 1.0)), np.zeros(p.J + 1)) == 0.0


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 3.0), st.floats(0.3, 2.0))
def test_offcenter_mass_is_one(rho, t0):
    p = constant_profile(3, 4000, 20.0)
    x0 = np.array([rho, 0.0, 0.0])
    val = gaussian_quadrature(p, GaussianWeight(Basepoint(x0, t0)), np.ones(p.J + 1))
    assert val == pytest.approx(1.0, abs=1e-7)


@pytest.mark.parametrize("m,t0", [(2, 1.0), (3, 0.5), (4, 2.0)])
def test_second_moment(m, t0):
    p = constant_profile(m, 4000, 20.0)
    val = gaussian_quadrature(p, GaussianWeight(Basepoint.origin(m, t0)), p.r**2)
    # oracle: radial integral with scipy quad
    from hmentropy.quadrature import sphere_area

    dens = lambda r: sphere_area(m) * r ** (m + 1) * np.exp(-r * r / (4 * t0)) / (4 * np.pi * t0) ** (m / 2)
    oracle = integrate.quad(dens, 0, np.inf, epsabs=1e-13)[0]
    assert oracle == pytest.approx(2 * m * t0, rel=1e-10)
    assert val == pytest.approx(oracle, rel=1e-7)


def test_lattice_and_curve_mass():
    g = _flat(1.0)
    val = gaussian_quadrature(g, GaussianWeight(Basepoint(np.array([0.3, -0.2]), 1.5)), np.ones((241, 241)))
    assert val == pytest.approx(1.0, abs=1e-8)
    c = equator_curve(512)
    assert gaussian_quadrature(c, GaussianWeight(Basepoint(np.array([np.pi]), 0.1)), np.ones(512)) == pytest.approx(1.0, abs=1e-8)


def test_truncation_error():
    p = constant_profile(3, 200, 2.0)
    with pytest.raises(TruncationError):
        gaussian_quadrature(p, GaussianWeight(Basepoint.origin(3, 1.0)), np.ones(201))


def test_truncation_radius_meets_budget():
    for m in (2, 3, 4, 6):
        w = GaussianWeight(Basepoint.origin(m, 1.0))
        R = w.truncation_radius
        assert tail_mass(constant_profile(m, 100, R), w) <= 1.0001e-10
        assert tail_mass(constant_profile(m, 100, 0.95 * R), w) > 1e-10


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 5.0), st.floats(0.2, 3.0))
def test_flat_density_f_functional(c, t0):
    g = _flat(c)
    assert f_functional(g, Basepoint(np.zeros(2), t0)) == pytest.approx(c * t0 / 2, abs=1e-8)
