import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("hoferlab", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("hoferlab")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def plane():
    from hoferlab import poisson
    return poisson.standard_symplectic(1)


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
