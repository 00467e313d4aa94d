import numpy as np
import pytest

from oprenewal import build_operator, make_lsv

# alpha -> operator at the desk-scale resolution (grid 1024, horizon 4096)
_OPERATORS = {}
ACCEPTANCE_LINES = []


def lsv_operator(alpha: float, m: int = 1024, N: int = 4096):
    key = (round(alpha, 12), m, N)
    if key not in _OPERATORS:
        _OPERATORS[key] = build_operator(make_lsv(alpha), m, N)
    return _OPERATORS[key]


@pytest.fixture(scope="session")
def small_operator():
    """alpha = 4/3 on 32 cells with horizon 256."""
    return lsv_operator(4.0 / 3.0, 32, 256)


@pytest.fixture(scope="session")
def op75():
    return lsv_operator(4.0 / 3.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
        terminalreporter.write_line(line)
