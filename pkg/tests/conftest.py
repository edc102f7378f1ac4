import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from labelnoise.mixture import GaussianMixture, make_benchmark_mixture, make_grid_mixture

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def two_class_1d():
    return GaussianMixture.from_arrays([[-1.0], [1.0]])


@pytest.fixture(scope="session")
def bench10():
    return make_benchmark_mixture(10, 2, 2.0, 0)


@pytest.fixture(scope="session")
def separated10():
    return make_grid_mixture(10, 2, 13.0)



_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance():
    """Record one PASS/FAIL line per criterion; echoed in the terminal summary."""

    def record(label, passed, detail=""):
        line = f"{'PASS' if passed else 'FAIL'} {label}" + (f" :: {detail}" if detail else "")
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
