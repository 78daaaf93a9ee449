import numpy as np
import pytest

from tatsolve.grid import make_domain
from tatsolve.medium import build_phantom, constant_medium


@pytest.fixture(scope="session")
def square32():
    return make_domain("square", 1.0, 32, 0.8)


@pytest.fixture(scope="session")
def disk32():
    return make_domain("disk", 1.0, 32, 0.6)


@pytest.fixture(scope="session")
def medium32(square32):
    return constant_medium(square32)


@pytest.fixture(scope="session")
def gauss32(square32):
    return build_phantom(square32, {"kind": "gaussian", "center": (0.05, -0.05), "width": 0.08})


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line per acceptance criterion, then assert."""

    def report(number, title, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d} {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
