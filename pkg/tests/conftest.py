import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from coupledmarkets.scenario import load_fixture  # noqa: E402


@pytest.fixture(scope="session")
def three_bus():
    return load_fixture("three_bus.scn")


@pytest.fixture(scope="session")
def coupled():
    return load_fixture("coupled_3bus_5node.scn")


@pytest.fixture(scope="session")
def ieee14():
    return load_fixture("ieee14_gaslib11.scn")


@pytest.fixture(scope="session")
def search_hits():
    from fixture_search import search

    start = time.perf_counter()
    hits = search()
    return hits, time.perf_counter() - start
