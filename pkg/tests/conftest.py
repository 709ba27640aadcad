import math

import numpy as np
import pytest

from horolab import ConstantCurvature, PerturbedAxial


@pytest.fixture(scope="session")
def const():
    return ConstantCurvature()


@pytest.fixture(scope="session")
def pert():
    return PerturbedAxial()


@pytest.fixture(scope="session")
def flat():
    return PerturbedAxial(0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def disk_busemann(theta, x, y):
    w = complex(x, y)
    return math.log(abs(complex(math.cos(theta), math.sin(theta)) - w) ** 2 / (1.0 - abs(w) ** 2))


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
