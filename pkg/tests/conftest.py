import pytest

from gridsched import Appliance, House, Scenario, Tariff, TimeGrid


def unit_appliance(aid, st=1, et=2, load=1.0, kind=None):
    return Appliance(aid, (load,), st, et, kind)


def two_by_two(limit=3.0):
    """Two single-slot 1 kW players in separate houses, windows {1, 2}, c(y) = y."""
    houses = (
        House("h1", (unit_appliance("a"),), limit),
        House("h2", (unit_appliance("a"),), limit),
    )
    return Scenario(TimeGrid(2, 1.0), houses, Tariff.power_law(1.0, 1.0))


def all_fixed():
    houses = (House("h1", (Appliance("f", (1.0, 0.5), 2, 3),), 3.0),)
    return Scenario(TimeGrid(4, 1.0), houses, Tariff.piecewise_affine(1.0, 0.5))


@pytest.fixture
def sc22():
    return two_by_two()


@pytest.fixture
def fixed_only():
    return all_fixed()
