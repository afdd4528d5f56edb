import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import oracles  # noqa: E402
from cellroute import data_path, load_instance  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def crossing():
    return load_instance(data_path("crossing.json"))


@pytest.fixture
def unsyncable():
    return load_instance(data_path("unsyncable.json"))


def pytest_terminal_summary(terminalreporter):
    lines = oracles.acceptance_lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
