import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from _fixtures import acceptance_population, equal_gap_population, null_population, toy_dataset


@pytest.fixture
def toy():
    return toy_dataset()


@pytest.fixture(scope="session")
def acceptance_pop():
    return acceptance_population()


@pytest.fixture(scope="session")
def null_pop():
    return null_population()


@pytest.fixture(scope="session")
def equal_gap_pop():
    return equal_gap_population()
