from __future__ import annotations

import numpy as np
import pytest

from hmentropy.solitons import ShootingProblem, extend_profile, shoot_equivariant_soliton


@pytest.fixture(scope="session")
def soliton3():
    """Shooting soliton for m = 3 on the default grid (R = 10, J = 2000)."""
    return shoot_equivariant_soliton(ShootingProblem(m=3, J=2000))


@pytest.fixture(scope="session")
def soliton3_coarse():
    return shoot_equivariant_soliton(ShootingProblem(m=3, J=1000))


@pytest.fixture(scope="session")
def soliton3_wide(soliton3):
    return extend_profile(soliton3[0], 24.0, polish=True)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
