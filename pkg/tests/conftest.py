import numpy as np
import pytest

from timereduction.basis import build_basis
from timereduction.grid import Grid2D, OmegaGrid

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def basis35():
    return build_basis(1.0, 35)


@pytest.fixture(scope="session")
def basis5():
    return build_basis(1.0, 5)


@pytest.fixture
def small_omega():
    return OmegaGrid(-1.0, 1.0, 11)


@pytest.fixture(scope="session")
def desk_grid():
    return Grid2D(nx=61)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
