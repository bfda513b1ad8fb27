import numpy as np
import pytest

from tomosemi.phase_space import PhaseGrid
from tomosemi.weyl import discrete_weyl_representation, fock_representation


@pytest.fixture(scope="session")
def fock256():
    """N=32 Fock truncation on the default self-dual 256 x 256 grid."""
    return fock_representation(32)


@pytest.fixture(scope="session")
def fock64():
    return fock_representation(32, PhaseGrid.self_dual(64))


@pytest.fixture(scope="session")
def weyl3():
    return discrete_weyl_representation(3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
