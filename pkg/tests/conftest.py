import numpy as np
import pytest

from noisebench import gridsim


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def plain_frame():
    return gridsim.simulate(gridsim.GridConfig(duration_s=200))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
