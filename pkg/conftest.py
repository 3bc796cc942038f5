# This adds the pytest --runslow option. Tests marked `slow` run the seed-pinned desk configs
# under cpsample_lab/example and take minutes each.
#
# pylint: disable=invalid-name
import pytest


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)
