import numpy as np
import pytest

from secbeam import Scenario


@pytest.fixture
def two_beam():
    """LoS beam fully exposed at location 0, NLoS beam exposed at location 1."""
    return Scenario([2.0, 0.2], [[2.0, 0.0], [0.0, 0.2]], 10.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
