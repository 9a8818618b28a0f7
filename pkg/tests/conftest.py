import pytest
from hypothesis import HealthCheck, settings

from rangewalk.measure import point_mass, two_barrier_m0

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def m0():
    return two_barrier_m0()


@pytest.fixture
def mpoint():
    return point_mass()
