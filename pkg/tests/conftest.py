import numpy as np
import pytest

from covert_sched.model import Problem, SystemModel, load_model


@pytest.fixture(scope="session")
def model():
    """Two-state unstable plant with a scalar sensor; both links at 0.6."""
    return load_model("paper.json")


@pytest.fixture(scope="session")
def problem(model):
    return Problem.build(model, 40)


@pytest.fixture(scope="session")
def meas_model():
    return load_model("paper_meas.json")


@pytest.fixture(scope="session")
def scalar_model():
    return SystemModel([[2.0]], [[1.0]], [[1.0]], [[1.0]], 0.6, 0.6)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
