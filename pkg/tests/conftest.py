import os

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("kfpkit", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("kfpkit")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=["1", "0"], ids=["numba", "numpy"])
def kernel_path(request, monkeypatch):
    """Run a test once through the numba kernels and once through the numpy twins."""
    monkeypatch.setenv("KFPKIT_NUMBA", request.param)
    return request.param


@pytest.fixture
def configs_dir():
    return os.path.join(os.path.dirname(os.path.dirname(__file__)), "configs")
