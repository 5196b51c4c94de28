import numpy as np
import pytest

from approxmcmc.model import BoundedGaussian, DataSet, GaussianConjugate


@pytest.fixture
def gauss():
    return GaussianConjugate(1.0)


@pytest.fixture
def data100():
    return DataSet.synthesize(100, theta_star=0.5, seed=1)


@pytest.fixture
def bounded():
    return BoundedGaussian(1.0, 0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
