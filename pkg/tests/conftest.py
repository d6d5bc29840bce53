import numpy as np
import pytest

from fdbeam.channel import Scenario, SiChannelConfig
from fdbeam.metrics import LinkBudget


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def budget():
    return LinkBudget()


@pytest.fixture
def small_scenario():
    """2x2 transmit and receive arrays, 8 rays."""
    return Scenario.side_by_side(2, 2, si=SiChannelConfig(kappa_db=0.0, num_rays=8))


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_feasible(rng, *shape):
    """Complex entries uniform in the unit disk."""
    r = np.sqrt(rng.uniform(0, 1, shape))
    return r * np.exp(2j * np.pi * rng.uniform(0, 1, shape))


# acceptance criteria report one line each in the terminal summary
_CRITERIA: list[str] = []


@pytest.fixture
def criterion():
    def record(number: int, passed: bool, detail: str):
        _CRITERIA.append(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
