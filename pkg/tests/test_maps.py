from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hmentropy.errors import GridTooCoarse
from hmentropy.maps import (
    CurveMap,
    EquivariantProfile,
    GridMap,
    constant_curve,
    constant_profile,
    dumps_map,
    equator_curve,
    hinge_curve,
    loads_map,
    profile_from_function,
    profile_to_grid,
    tension,
)


def _curve_tension_error(N: int, eps: float = 0.3) -> float:
    """Sup error of the discrete tension of the hinge curve against a symbolic oracle."""
    import sympy as sp

    s = sp.symbols("s")
    phi = sp.pi / 2 + eps * sp.cos(2 * s)
    f = sp.Matrix([sp.cos(s) * sp.sin(phi), sp.sin(s) * sp.sin(phi), sp.cos(phi)])
    d1, d2 = f.diff(s), f.diff(s, 2)
    tau = d2 + (d1.dot(d1)) * f
    fn = sp.lambdify(s, [tau[0], tau[1], tau[2]], "numpy")
    c = hinge_curve(eps, N)
    exact = np.stack(fn(c.s), -1)
    return float(np.max(np.abs(c.tension_vectors() - exact)))


def test_equator_is_unit_speed_and_harmonic():
    c = equator_curve(512)
    tf = np.linalg.norm(c.differential()[:, 0, :], axis=-1)
    assert np.max(np.abs(tf - 1)) <= 2 * c.ds**2
    assert np.max(np.abs(c.energy_density() - 0.5)) <= 2 * c.ds**2
    assert np.max(np.abs(tension(c).vectors)) <= 2 * c.ds**2


def test_constant_maps_vanish():
    for fmap in (constant_curve(64), constant_profile(3, 200, 5.0)):
        assert np.all(fmap.differential() == 0)
        assert np.all(fmap.energy_density() == 0)
    assert np.all(tension(constant_curve(64)).vectors == 0)
    g = GridMap(np.broadcast_to([0.0, 0.0, 1.0], (9, 9, 3)), 1.0)
    assert np.all(g.energy_density() == 0)


def test_profile_energy_density_closed_form():
    errs = []
    for J in (200, 400):
        p = profile_from_function(lambda r: r, 3, J, 2.0)
        r = p.r
        exact = np.ones_like(r)
        exact[1:] += 2 * np.sin(r[1:]) ** 2 / r[1:] ** 2
        exact[0] = 3.0
        errs.append(np.max(np.abs(2 * p.energy_density() - exact)))
    assert errs[0] <= 1e-3
    assert errs[1] < errs[0]


def test_profile_tension_matches_grid_tension():
    p = profile_from_function(lambda r: 2 * np.arctan(r / 1.5), 3, 2000, 10.0)
    g = profile_to_grid(p, N=81, R_max=2.0)
    tv = g.tension_vectors()
    c = g.N // 2
    k = c + 10  # x = (0.5, 0, 0)
    r = g.axis[k]
    j = int(round(r / p.dr))
    psi = p.psi[j]
    e_psi = np.array([np.cos(psi), 0.0, 0.0, -np.sin(psi)])
    tau_grid = tv[k, c, c]
    tau_prof = p.reduced_tension()[j] * e_psi
    assert np.max(np.abs(tau_grid - tau_prof)) <= 5e-3


def test_outputs_are_tangent(rng):
    c = hinge_curve(0.1, 256)
    assert np.max(np.abs(np.einsum("ni,ni->n", c.tension_vectors(), c.samples))) <= 1e-10
    assert np.max(np.abs(np.einsum("nai,ni->na", c.differential(), c.samples))) <= 1e-10
    p = profile_from_function(lambda r: 2 * np.arctan(r), 3, 400, 4.0)
    g = profile_to_grid(p, N=17, R_max=2.0)
    assert np.max(np.abs(np.einsum("...ai,...i->...a", g.differential(), g.values))) <= 1e-10
    assert np.max(np.abs(np.einsum("...i,...i->...", g.tension_vectors(), g.values))) <= 1e-10


def test_hinge_tension_resolved_at_default_grid():
    ref = np.max(np.linalg.norm(hinge_curve(0.01, 4096).tension_vectors(), axis=-1))
    val = np.max(np.linalg.norm(hinge_curve(0.01, 512).tension_vectors(), axis=-1))
    assert abs(val - ref) <= 0.01 * ref


def test_tension_self_convergence_second_order():
    e1, e2 = _curve_tension_error(64), _curve_tension_error(128)
    assert 3.5 <= e1 / e2 <= 4.5


def test_grid_tension_self_convergence_second_order():
    def fn(x):
        return np.stack([np.sin(x[..., 0]) * np.cos(x[..., 1]), np.sin(x[..., 1]), np.ones(x.shape[:-1]) * 2.0], -1)

    ref = GridMap.from_function(fn, 2, 257, 1.0).tension_vectors()
    errs = []
    for N in (33, 65):
        g = GridMap.from_function(fn, 2, N, 1.0).tension_vectors()
        step = (257 - 1) // (N - 1)
        errs.append(np.max(np.abs(g[1:-1, 1:-1] - ref[::step, ::step][1:-1, 1:-1])))
    assert 3.5 <= errs[0] / errs[1] <= 4.5


@settings(max_examples=25, deadline=None)
@given(st.integers(8, 40), st.integers(0, 2**31 - 1))
def test_json_round_trip_bit_exact(half, seed):
    r = np.random.default_rng(seed)
    v = r.normal(size=(2 * half, 3))
    c = CurveMap(v / np.linalg.norm(v, axis=-1, keepdims=True))
    back = loads_map(dumps_map(c))
    assert np.array_equal(back.samples, c.samples)
    p = EquivariantProfile(np.concatenate([[0.0], r.uniform(-3, 3, size=half)]), 3, r.uniform(1, 10))
    back = loads_map(dumps_map(p))
    assert np.array_equal(back.psi, p.psi) and back.R_max == p.R_max and back.m == p.m


def test_grid_round_trip():
    p = profile_from_function(lambda r: 2 * np.arctan(r), 2, 100, 3.0)
    g = profile_to_grid(p, N=16, R_max=2.0)
    back = loads_map(dumps_map(g))
    assert np.array_equal(back.values, g.values) and back.R_max == g.R_max


def test_coarse_grids_rejected():
    with pytest.raises(GridTooCoarse):
        equator_curve(8)
    with pytest.raises(GridTooCoarse):
        GridMap(np.broadcast_to([0.0, 1.0], (4, 4, 2)), 1.0)
