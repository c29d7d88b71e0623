import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import two_by_two
from gridsched import (
    Appliance,
    DynamicsConfig,
    House,
    PlayerId,
    Scenario,
    StrategyProfile,
    Tariff,
    TimeGrid,
    brute_force,
    enumerate_profiles,
    run_dynamics,
    social_cost,
    verify_engine,
)
from gridsched.engine import MA, SA
from gridsched.model import FIXED, appliance_demand, profile_violations
from gridsched.oracle import OracleCeilingError, profile_space_size, verify_profile
from gridsched.pricing import price_vector
from gridsched.scenario import random_scenario


def test_enumeration_counts(sc22, fixed_only):
    assert len(list(enumerate_profiles(sc22))) == 4
    assert len(list(enumerate_profiles(two_by_two(limit=3.0)))) == 4
    coupled = Scenario(TimeGrid(2), (House("h", (Appliance("a", (1.0,), 1, 2), Appliance("b", (1.0,), 1, 2)), 1.0),),
                       Tariff.power_law(1, 1))
    assert sorted(p.starts for p in enumerate_profiles(coupled)) == [(1, 2), (2, 1)]
    assert len(list(enumerate_profiles(fixed_only))) == 1


def test_ceiling(sc22):
    with pytest.raises(OracleCeilingError) as e:
        brute_force(sc22, ceiling=3)
    assert e.value.size == 4


def test_two_by_two(sc22):
    o = brute_force(sc22)
    assert o.optimum_cost == 2.0
    assert o.nash_starts() == {(1, 2), (2, 1)}
    assert o.price_of_anarchy == 1.0
    assert o.profile_count_enumerated == 4


def test_single_player():
    apps = (Appliance("p", (1.0, 0.5), 1, 4), Appliance("base", (2.0, 0.5, 1.0, 0.0), 1, 4, FIXED))
    sc = Scenario(TimeGrid(4), (House("h", apps, 5.0),), Tariff.piecewise_affine(1.0, 0.5))
    o = brute_force(sc)
    assert o.nash_starts() == {p.starts for p in o.optimum_profiles}


def test_dominant_player_poa_reported():
    houses = (House("big", (Appliance("a", (2.0,), 1, 2),), 3.0),
              House("small", (Appliance("a", (0.5,), 1, 2),), 3.0))
    sc = Scenario(TimeGrid(2), houses, Tariff.power_law(1.0, 2.0))
    o = brute_force(sc)
    assert o.price_of_anarchy >= 1.0


def test_verify_engine(sc22, fixed_only):
    r = run_dynamics(sc22)
    rep = verify_engine(sc22, r)
    assert rep.status == "verified" and rep.cost_ratio == 1.0
    assert verify_engine(fixed_only, run_dynamics(fixed_only)).status == "verified"
    stuck = run_dynamics(random_scenario(4, houses=(3, 3), shiftable=(3, 3)), DynamicsConfig(max_passes=1))
    if not stuck.converged:
        assert verify_engine(stuck.final_profile.scenario, stuck).status == "inconclusive"


def test_verify_profile_rejects_non_nash(sc22):
    o = brute_force(sc22)
    assert verify_profile(sc22, StrategyProfile(sc22, (1, 1)), o).status == "failed"


def _naive(scenario, mode):
    """Textbook enumeration with per-profile Python loops."""
    ranges = [list(scenario.appliance(p).start_range) for p in scenario.players]
    grid, T = scenario.grid, scenario.grid.slot_count

    def loads(starts):
        per = {h.id: np.zeros(T) for h in scenario.houses}
        for h in scenario.houses:
            for a in h.appliances:
                if not a.is_shiftable:
                    per[h.id] += appliance_demand(a, a.earliest_start, grid)
        for p, s in zip(scenario.players, starts):
            per[p.house_id] += appliance_demand(scenario.appliance(p), s, grid)
        return per

    def feasible(starts):
        return all(np.all(v <= scenario.house(h).supply_limit_kw + 1e-9) for h, v in loads(starts).items())

    def pay(starts, who):
        per = loads(starts)
        y = sum(per.values())
        if mode == SA:
            p = scenario.players[who]
            v = appliance_demand(scenario.appliance(p), starts[who], grid)
        else:
            v = per[scenario.houses[who].id]
        return float(np.sum(v * price_vector(scenario.tariff, y)))

    profiles = [s for s in itertools.product(*ranges) if feasible(s)]
    space = set(profiles)
    nash = set()
    for s in profiles:
        ok = True
        if mode == SA:
            for i in range(len(s)):
                for alt in ranges[i]:
                    t = s[:i] + (alt,) + s[i + 1:]
                    if t in space and pay(t, i) < pay(s, i):
                        ok = False
        else:
            for h, house in enumerate(scenario.houses):
                idx = [i for i, p in enumerate(scenario.players) if p.house_id == house.id]
                for combo in itertools.product(*[ranges[i] for i in idx]):
                    t = list(s)
                    for i, c in zip(idx, combo):
                        t[i] = c
                    t = tuple(t)
                    if t in space and pay(t, h) < pay(s, h):
                        ok = False
        if ok:
            nash.add(s)
    costs = [social_cost(StrategyProfile(scenario, s), scenario.tariff) for s in profiles]
    return min(costs), nash, len(profiles)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 100_000), mode=st.sampled_from([SA, MA]))
def test_matches_naive_enumeration(seed, mode):
    sc = random_scenario(seed, houses=(1, 2), shiftable=(1, 2), slot_count=6, max_starts=3,
                         background_kw=float(seed % 2))
    o = brute_force(sc, mode)
    opt, nash, count = _naive(sc, mode)
    assert o.optimum_cost == opt
    assert o.nash_starts() == nash
    assert o.profile_count_enumerated == count
    for p in enumerate_profiles(sc):
        assert not profile_violations(p)


def test_profile_space_size():
    sc = random_scenario(0)
    assert profile_space_size(sc) == int(np.prod([len(sc.appliance(p).start_range) for p in sc.players]))
