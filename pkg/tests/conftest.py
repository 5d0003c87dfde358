import numpy as np
import pytest

from src.env.objects import LAYOUT_PRESETS


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run desk-scale training checks")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale training runs, skipped without --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def mini_layout():
    return LAYOUT_PRESETS["mini"]


@pytest.fixture
def full_layout():
    return LAYOUT_PRESETS["full"]
