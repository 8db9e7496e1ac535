import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.append(str(ROOT))

SMALL_CONFIG = """
[system]
L = 2
max_slots = 20000

[node]
test = m2_random_walk
mu0 = 1.0
mu1 = 2.0
noise = gaussian(mean=0, variance=1)

[fc]
test = m2_random_walk

[sweep]
c = 0.1353352832366127
trials = 40
seed = 3
prerun = 10000
"""


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long Monte-Carlo reproductions")


@pytest.fixture
def small_ini() -> str:
    return SMALL_CONFIG
