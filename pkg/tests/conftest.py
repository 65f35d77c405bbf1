import numpy as np
import pytest

from entilt import ExpectationEngine


@pytest.fixture(scope="session")
def eng():
    return ExpectationEngine()


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
