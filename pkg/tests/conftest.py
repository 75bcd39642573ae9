import numpy as np
import pytest

from roacert.dynamics import make_linear, make_scalar_cubic
from roacert.lyapunov import GramCandidate


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def decay2():
    """x' = -x in the plane with V = |x|^2."""
    return make_linear(-np.eye(2)), GramCandidate.quadratic(np.eye(2))


@pytest.fixture
def aniso2():
    return make_linear(np.diag([-1.0, -3.0])), GramCandidate.quadratic(np.eye(2))


@pytest.fixture
def cubic():
    return make_scalar_cubic(), GramCandidate.quadratic(np.eye(1))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
