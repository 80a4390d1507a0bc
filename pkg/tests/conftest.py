import numpy as np
import pytest

from orthotact.config import SystemConfig


@pytest.fixture
def ref_cfg():
    return SystemConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
