import pytest

from platoon.config import ScenarioSpec, spec_from_dict


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run acceptance-scale tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def small_spec() -> ScenarioSpec:
    """Short road, sparse traffic, short episodes: fast enough for unit tests."""
    return spec_from_dict({
        "name": "unit",
        "road": {"length": 600.0, "scenario_zone": [250.0, 400.0]},
        "spawn": {"hdv_count_range": [2, 3], "spawn_points": [150.0, 250.0, 350.0]},
        "env": {"step_cap": 40},
        "twin": {"horizon": 8},
        "seeds": [0, 1],
    })
