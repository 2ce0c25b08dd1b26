import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def ex1():
    from wgflab.scenarios import example1

    return example1()


@pytest.fixture(scope="session")
def ex2():
    from wgflab.scenarios import example2

    return example2()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
