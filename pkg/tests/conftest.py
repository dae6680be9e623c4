import numpy as np
import pytest

from spanmatch import kernels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Pay any one-time JIT compilation cost before timed tests run."""
    kernels.warmup()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
