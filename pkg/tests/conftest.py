import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cfswarm.antenna import TerminalParams, UpaConfig  # noqa: E402
from cfswarm.channel import LinkSetup, wavelength  # noqa: E402

ACCEPTANCE_LINES = []


def pytest_configure(config):
    config.acceptance_lines = ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_link():
    upa = UpaConfig(4, 4)
    return LinkSetup(upa, TerminalParams.load("vsat"), wavelength(2e9), 30e6)


@pytest.fixture(scope="session")
def handheld_link():
    upa = UpaConfig(4, 4)
    return LinkSetup(upa, TerminalParams.load("handheld"), wavelength(2e9), 30e6)
