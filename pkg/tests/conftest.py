import pytest

from alarmtaxis.params import ModelParams, solve_steady_state


@pytest.fixture
def ref_params():
    return ModelParams(b1=0.5, b2=0.4, b3=0.1)


@pytest.fixture
def steady(ref_params):
    return solve_steady_state(ref_params)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
