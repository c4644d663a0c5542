import numpy as np
import pytest

from sbdehaze import tensor as T


@pytest.fixture(autouse=True)
def double_checked():
    """Tests run in float64 with non-finite/domain validation on."""
    with T.precision("float64"), T.checked_mode():
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
