import numpy as np
import pytest

from streamclust import _accel


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # compile the jitted kernels once, before any timed or parallel test
    _accel.warmup(8)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240811)
