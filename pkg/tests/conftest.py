import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from safesocp.core import CbfSpec, ClassK, ball_barrier, planar_system, quadratic_clf

settings.register_profile("default", deadline=None, derandomize=True,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# (criterion, passed, detail) lines collected by the acceptance module
ACCEPTANCE: list = []


@pytest.fixture(scope="session")
def planar():
    return planar_system()


@pytest.fixture(scope="session")
def barrier():
    return ball_barrier((0.0, 4.0), 2.0)


@pytest.fixture(scope="session")
def clf():
    return quadratic_clf()


@pytest.fixture(scope="session")
def cbf():
    # certificate slack used by every planar experiment
    return CbfSpec(alpha=ClassK.linear(1.0), eta_h=0.5, zeta=ClassK.linear(0.5))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
