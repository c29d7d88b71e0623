import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import two_by_two
from gridsched import Scenario, StrategyProfile, Tariff, TimeGrid, jain_index, peak_demand, summarize
from gridsched.model import Appliance, House
from gridsched.scenario import GenerationSpec, generate


def test_jain_examples():
    assert jain_index([4, 4, 4, 4]) == 1.0
    assert jain_index([1, 0, 0, 0]) == 0.25
    assert jain_index([2, 4]) == pytest.approx(0.9)
    assert jain_index([0, 0]) == 1.0


def test_jain_rejects():
    with pytest.raises(ValueError):
        jain_index([])
    with pytest.raises(ValueError):
        jain_index([1, -1])


values = st.lists(st.floats(0, 1e6, allow_nan=False), min_size=1, max_size=50)


@settings(max_examples=200, deadline=None)
@given(x=values)
def test_jain_bounds(x):
    j = jain_index(x)
    assert 1 / len(x) <= j <= 1


@settings(max_examples=200, deadline=None)
@given(x=values, k=st.floats(1e-3, 1e3))
def test_jain_scale_invariant(x, k):
    assert jain_index([k * v for v in x]) == pytest.approx(jain_index(x), rel=1e-9, abs=1e-12)


def test_peak():
    sc = Scenario(TimeGrid(3), (House("h", (Appliance("f", (1.0, 3.0, 2.0), 1, 3),), 3.0),), Tariff.power_law(1, 1))
    assert peak_demand(StrategyProfile(sc, ())) == 3.0
    empty = Scenario(TimeGrid(3), (House("h"),), Tariff.power_law(1, 1))
    assert peak_demand(StrategyProfile(empty, ())) == 0.0


def test_summarize_two_by_two():
    sc = two_by_two()
    m = summarize(StrategyProfile(sc, (1, 2)), sc.tariff)
    assert m.social_cost == 2.0 and m.peak_demand_kw == 1.0 and m.jain_index == 1.0
    assert m.aggregate_profile == (1.0, 1.0)


def test_summarize_empty():
    sc = Scenario(TimeGrid(4), (), Tariff.power_law(1, 1))
    m = summarize(StrategyProfile(sc, ()), sc.tariff)
    assert m.social_cost == 0 and m.peak_demand_kw == 0 and m.jain_index == 1.0


def test_symmetric_profile_jfi_one():
    sc = generate(GenerationSpec(5, "fix", "homogeneous"))
    m = summarize(StrategyProfile(sc, tuple(sc.appliance(p).earliest_start for p in sc.players)), sc.tariff)
    assert m.jain_index == pytest.approx(1.0, abs=1e-12)
    assert np.isclose(sum(m.per_house_bills.values()), m.social_cost)
