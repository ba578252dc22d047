import numpy as np
import pytest

from phononlab.collision import GridSpec, assemble, build_grid

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def grid200():
    return build_grid(GridSpec(n=200))


@pytest.fixture(scope="session")
def op200(grid200):
    return assemble(grid200)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
