import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from holodiff.catalogue import Registry, make_domain
from holodiff.geometry import BOX, ChartDomain
from holodiff.suites import DEFAULT_CATALOGUE

settings.register_profile(
    "holodiff",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("holodiff")


@pytest.fixture(scope="session")
def torus():
    return make_domain({})


@pytest.fixture(scope="session")
def plane():
    """A large box, for flows that should not feel periodicity."""
    return ChartDomain((-4.0, -4.0), (4.0, 4.0), topology=BOX)


@pytest.fixture(scope="session")
def registry(torus):
    return Registry(torus, DEFAULT_CATALOGUE)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
