import numpy as np
import pytest

from gaussian_shading import keygen

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def key():
    return keygen(seed=1234)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
