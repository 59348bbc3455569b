import numpy as np
import pytest

from bnls import make_grid, make_params
from bnls.groundstate import solve_Q


@pytest.fixture(scope="session")
def q_d3_sigma2():
    params = make_params(3, 2.0)
    return solve_Q(params, make_grid(3, 50.0, 768))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    """Print one PASS/FAIL line per acceptance criterion that ran."""
    import sys

    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(module.RESULTS):
        terminalreporter.write_line(module.report_line(number))
