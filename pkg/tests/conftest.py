import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import helpers

    if helpers.ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, _, line in sorted(helpers.ACCEPTANCE, key=lambda r: r[0]):
            terminalreporter.write_line(line)
