import numpy as np
import pytest
from hypothesis import settings

from tdmcfan import RngStream
from tdmcfan._backend import HAVE_NUMBA

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

BACKENDS = ["numba", "numpy"] if HAVE_NUMBA else ["numpy"]


@pytest.fixture
def rng():
    return RngStream(12345)


@pytest.fixture
def gen():
    return np.random.default_rng(12345)
