import numpy as np
import pytest

from hardlabel import HardLabelOracle, ModelParameters

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def golden_victim():
    """2-2-1 network whose three plan patterns all reach the decision boundary."""
    return ModelParameters([np.array([[1.0, 2.0], [3.0, -1.0]]), np.array([[2.0, 1.0]])],
                           [np.array([0.25, -0.5]), np.array([-1.0])])


@pytest.fixture
def affine_victim():
    return ModelParameters([np.array([[0.5, -2.0, 0.0, 1.25]])], [np.array([0.3])])


@pytest.fixture
def oracle_for():
    def make(params):
        return HardLabelOracle(params)
    return make
