import sys
from pathlib import Path

import pytest

from raftcheck import Config, explore

sys.path.insert(0, str(Path(__file__).parent))

ROW1 = Config(3, 2, 1, 3)
N1 = Config(1, 1, 1, 1)
SMALL = Config(2, 1, 1, 2)


@pytest.fixture(scope="session")
def row1_lts():
    return explore(ROW1)


@pytest.fixture(scope="session")
def n1_lts():
    return explore(N1)


@pytest.fixture(scope="session")
def small_lts():
    return explore(SMALL)
