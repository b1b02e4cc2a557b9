import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from weakcons import models

settings.register_profile(
    "weakcons", deadline=None, max_examples=40, derandomize=True, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("weakcons")


@pytest.fixture(scope="session")
def qubit():
    return models.build("two-level")


@pytest.fixture(scope="session")
def oscillator():
    return models.build("oscillator", truncation=24)


@pytest.fixture(scope="session")
def planar():
    return models.build("planar", truncation=10)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one pass/fail line for an acceptance criterion, then assert it."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def record(number, title, ok, detail):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        print(line)
        lines.append(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
