"""Shared fixtures and the --runslow switch."""
import numpy as np
import pytest

from problems.partitioning import Partition
from storage.models import Termination


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run desk-scale acceptance tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def coordinate_partition():
    return Partition(2, [[1], [2]])


@pytest.fixture
def small_budget():
    return Termination(fitness_target=1e-10, max_evaluations=2000)
