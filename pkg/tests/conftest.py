import numpy as np
import pytest

from rlbridge import covariance as cm
from rlbridge import length_law as ll


@pytest.fixture
def brownian():
    return cm.brownian()


@pytest.fixture
def ou():
    return cm.ou_from_zero(1.0, 1.0)


@pytest.fixture
def two_atoms():
    return ll.atoms({1.0: 0.5, 2.0: 0.5})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
