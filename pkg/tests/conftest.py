import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from aeroarm.arm import ArmParams
from aeroarm.quad import QuadParams

settings.register_profile("default", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def arm():
    return ArmParams()


@pytest.fixture
def quad():
    return QuadParams()


@pytest.fixture
def free_arm():
    """Arm whose joint limits never bind, for conservation tests."""
    return ArmParams(q1_limits=(-1e6, 1e6), q2_limits=(-1e6, 1e6), tau_max=1e6)


def random_arm(rng):
    """Slender links: joint inertia = m lc^2 + m l^2 / 12."""
    l1, l2 = rng.uniform(0.2, 1.0, 2)
    lc1, lc2 = l1 * rng.uniform(0.2, 0.8), l2 * rng.uniform(0.2, 0.8)
    m1, m2 = rng.uniform(0.1, 2, 2)
    i1 = m1 * lc1**2 + m1 * l1**2 / 12
    i2 = m2 * lc2**2 + m2 * l2**2 / 12
    return ArmParams(l1=l1, l2=l2, lc1=lc1, lc2=lc2, m1=m1, m2=m2, i1=i1, i2=i2,
                     q1_limits=(-math.pi, math.pi), q2_limits=(-math.pi, math.pi))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, filled in by test_acceptance
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
