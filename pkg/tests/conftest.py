import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from helpers import small_ball  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def ball128():
    return small_ball(128)


@pytest.fixture(scope="session")
def ball256():
    return small_ball(256)
