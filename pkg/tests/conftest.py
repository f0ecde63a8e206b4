import numpy as np
import pytest

from nstv.pde import assemble_forward, build_grid
from nstv.weights import project_out_constants, tv_weights_2d, weight_1d


@pytest.fixture(scope="session")
def k1d():
    return assemble_forward(build_grid(1, 200))


@pytest.fixture(scope="session")
def c1d(k1d):
    return project_out_constants(k1d)


@pytest.fixture(scope="session")
def w1d(c1d):
    return weight_1d(c1d)


@pytest.fixture(scope="session")
def k2d():
    return assemble_forward(build_grid(2, 16))


@pytest.fixture(scope="session")
def w2d_raw(k2d):
    return tv_weights_2d(k2d, p=1, floor=None)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


@pytest.fixture
def report_line():
    """Record (and print) one acceptance result line."""
    def emit(criterion, passed, detail):
        line = f"[criterion {criterion:>4}] {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
