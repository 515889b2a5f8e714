import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cmalab.domains import PlanarGrid, RadialBall, RadialProfile

settings.register_profile(
    "cmalab", max_examples=30, deadline=None, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("cmalab")


def quadratic(n, size=1025, R=1.0):
    """``u = |z|^2 - R^2`` on a uniform grid."""
    ball = RadialBall.uniform(n, R, size)
    return RadialProfile.from_function(ball, lambda r: r - R * R)


@pytest.fixture
def quad1():
    return quadratic(1)


@pytest.fixture
def quad2():
    return quadratic(2)


@pytest.fixture(scope="session")
def square64():
    return PlanarGrid.unit_square(64)


@pytest.fixture(scope="session")
def disc64():
    return PlanarGrid.disc(1.0, 64)


# acceptance verdicts, filled by test_acceptance.py and printed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
