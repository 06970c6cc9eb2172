import numpy as np
import pytest

from uotsd import DiscreteMeasure, UotParams, build_cost_matrix
from uotsd.verify import random_instance


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


@pytest.fixture
def small_instance(rng):
    return random_instance(rng, n1=5, n2=7, epsilon=0.1)


@pytest.fixture
def unit_point_pair():
    """1x1 problem with zero cost and unit masses: everything closed-form."""
    mu = DiscreteMeasure(points=np.zeros((1, 1)), weights=np.array([1.0]))
    nu = DiscreteMeasure(points=np.zeros((1, 1)), weights=np.array([1.0]))
    return mu, build_cost_matrix(mu.points, nu.points), nu


@pytest.fixture
def kl_params():
    return UotParams(epsilon=1.0, rho1=1.0, rho2=1.0, source_divergence="kl")


@pytest.fixture
def chi2_params():
    return UotParams(epsilon=1.0, rho1=1.0, rho2=1.0, source_divergence="chi2")
