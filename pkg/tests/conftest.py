import numpy as np
import pytest

from freshmem import EngineConfig


@pytest.fixture
def config():
    return EngineConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
