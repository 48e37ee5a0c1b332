import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from btpolicy.domain import load_domain, make_state
from btpolicy.sim import bundled_data_path, load_scenario, load_scenarios

DATA = bundled_data_path()


@pytest.fixture(scope="session")
def cube_domain():
    return load_domain(DATA / "domains" / "cube_tabletop.yaml")


@pytest.fixture(scope="session")
def cafe_domain():
    return load_domain(DATA / "domains" / "cafe.yaml")


@pytest.fixture(scope="session")
def household_domain():
    return load_domain(DATA / "domains" / "household.yaml")


@pytest.fixture(scope="session")
def blocks_domain():
    return load_domain(DATA / "domains" / "blocks_strict.yaml")


@pytest.fixture(scope="session")
def all_scenarios():
    return load_scenarios(DATA / "scenarios")


@pytest.fixture()
def golden_scenario():
    return load_scenario(DATA / "scenarios" / "cube_stack_golden.yaml")


@pytest.fixture()
def blocked_cube_state(cube_domain):
    return make_state(
        cube_domain,
        ["on(red_cube, blue_cube)", "on(blue_cube, table)", "on(green_cube, table)"],
        objects=["blue_cube", "green_cube", "red_cube", "table"])
