"""
Pytest fixtures shared by the sojourn test-suite.
"""
import math

import numpy as np
import pytest

from sojourn.branches import SearchOptions
from sojourn.flow import FlowOptions
from sojourn.manifolds import ModelId, make_model


@pytest.fixture(scope="session")
def flat2():
    return make_model(ModelId.FLAT_EUCLIDEAN, 2)


@pytest.fixture(scope="session")
def flat3():
    return make_model(ModelId.FLAT_EUCLIDEAN, 3)


@pytest.fixture(scope="session")
def hyp2():
    return make_model(ModelId.HYPERBOLIC_HN, 2)


@pytest.fixture(scope="session")
def hyp3():
    return make_model(ModelId.HYPERBOLIC_HN, 3)


@pytest.fixture(scope="session")
def radial3():
    """Rotationally symmetric perturbation of R^3."""
    return make_model(ModelId.PERTURBED_SCATTERING, 3, {"a": 0.2, "w": math.inf})


@pytest.fixture(scope="session")
def bump2():
    """Defocusing interior lens and boundary bump around e_1."""
    return make_model(ModelId.PERTURBED_SCATTERING, 2, {"a": 0.3, "w": 0.5})


@pytest.fixture(scope="session")
def lens2():
    """Focusing interior lens: three branches and a fold near the e_1 axis seen from (-3, 0)."""
    return make_model(ModelId.PERTURBED_SCATTERING, 2, {"a": -0.3, "w": 0.5})


@pytest.fixture(scope="session")
def ah_bump2():
    return make_model(ModelId.PERTURBED_AH, 2, {"a": 0.2, "w": 0.7})


@pytest.fixture(scope="session")
def flow_opts():
    return FlowOptions.from_settings()


@pytest.fixture
def quick_search():
    """Few multistart directions and no Jacobi integration."""
    return SearchOptions.from_settings(starts=16, count_conjugates=False)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
