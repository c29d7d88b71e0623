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
    best_response,
    initialize,
    is_nash,
    ma_best_response,
    run_dynamics,
)
from gridsched.engine import MA, RANDOM_PERMUTATION, SA
from gridsched.model import FIXED, InfeasibleScenarioError, ScenarioValidationError
from gridsched.scenario import random_scenario

AFFINE = Tariff.piecewise_affine(1.0, 0.25)


def shared_house(limit=1.0):
    apps = (Appliance("a", (1.0,), 1, 2), Appliance("b", (1.0,), 1, 2))
    return Scenario(TimeGrid(2), (House("h", apps, limit),), AFFINE)


def with_background(bg, tariff=AFFINE, eps_gap=None):
    apps = (Appliance("p", (1.0,), 1, 2), Appliance("base", tuple(bg), 1, len(bg), FIXED))
    return Scenario(TimeGrid(len(bg)), (House("h", apps, 10.0),), tariff)


class TestConfig:
    def test_aliases(self):
        assert DynamicsConfig(order_policy="random").order_policy == RANDOM_PERMUTATION
        assert DynamicsConfig(mode="ma").mode == MA

    @pytest.mark.parametrize("kw", [{"mode": "xx"}, {"max_passes": 0}, {"improvement_epsilon": -1},
                                    {"order_policy": "bogus"}, {"init": "lazy"}])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            DynamicsConfig(**kw)


class TestInitialize:
    def test_greedy_respects_limit(self):
        p = initialize(shared_house())
        assert p.starts == (1, 2)

    def test_all_fixed(self, fixed_only):
        assert initialize(fixed_only).starts == ()

    def test_boundary_load(self):
        sc = Scenario(TimeGrid(3), (House("h", (Appliance("a", (3.0,), 2, 3),), 3.0),), AFFINE)
        assert initialize(sc).starts == (2,)

    def test_infeasible_names_appliance(self):
        apps = (Appliance("a", (2.0,), 1, 1), Appliance("b", (2.0,), 2, 2), Appliance("c", (1.0,), 1, 2))
        sc = Scenario(TimeGrid(2), (House("h", apps, 2.0),), AFFINE)
        with pytest.raises(InfeasibleScenarioError, match="'c'"):
            initialize(sc)

    def test_random_init_feasible_and_seeded(self):
        sc = random_scenario(3, houses=(3, 3), shiftable=(3, 3))
        a = initialize(sc, DynamicsConfig(init="random", seed=5))
        b = initialize(sc, DynamicsConfig(init="random", seed=5))
        assert a == b


class TestBestResponse:
    def test_cheaper_slot(self):
        sc = with_background([3.0, 1.0])
        p = StrategyProfile(sc, (1,))
        assert best_response(PlayerId("h", "p"), p, sc.tariff) == (2, True)

    def test_tie_keeps_current(self):
        sc = with_background([1.0, 1.0])
        for s in (1, 2):
            assert best_response(PlayerId("h", "p"), StrategyProfile(sc, (s,)), sc.tariff) == (s, False)

    def test_epsilon_gate(self):
        # a 1e-15 saving is below the 1e-12 gate
        sc = with_background([1.0, 0.0], Tariff.piecewise_affine(0.0, 1e-15))
        p = StrategyProfile(sc, (1,))
        assert best_response(PlayerId("h", "p"), p, sc.tariff, 1e-12) == (1, False)
        assert best_response(PlayerId("h", "p"), p, sc.tariff, 0.0) == (2, True)

    def test_ma_lexicographic(self):
        sc = shared_house()
        assignment, improved = ma_best_response("h", StrategyProfile(sc, (2, 1)), Tariff.piecewise_affine(1, 0))
        assert not improved
        assert assignment == {PlayerId("h", "a"): 2, PlayerId("h", "b"): 1}

    def test_ma_lexicographic_among_ties(self):
        # slot 1 is expensive; all four schedules over slots 2-3 cost the same
        apps = (Appliance("a", (1.0,), 1, 3), Appliance("b", (1.0,), 1, 3))
        flat = Tariff.piecewise_affine(1.0, 0.0)
        tariff = Tariff(**{**flat.__dict__, "slot_overrides": ((1, Tariff.piecewise_affine(5.0, 0.0)),)})
        sc = Scenario(TimeGrid(3), (House("h", apps, 2.0),), tariff)
        assignment, improved = ma_best_response("h", StrategyProfile(sc, (1, 1)), tariff)
        assert improved
        assert assignment == {PlayerId("h", "a"): 2, PlayerId("h", "b"): 2}

    def test_ma_single_appliance_matches_sa(self):
        sc = with_background([3.0, 1.0])
        p = StrategyProfile(sc, (1,))
        assignment, improved = ma_best_response("h", p, sc.tariff)
        assert (assignment[PlayerId("h", "p")], improved) == best_response(PlayerId("h", "p"), p, sc.tariff)

    def test_ma_fixed_house(self, fixed_only):
        assert ma_best_response("h1", StrategyProfile(fixed_only, ()), fixed_only.tariff) == ({}, False)


class TestRunDynamics:
    def test_two_by_two(self, sc22):
        r = run_dynamics(sc22, DynamicsConfig())
        assert r.converged and not r.diagnostics.cycle_detected
        assert r.final_profile.starts in {(1, 2), (2, 1)}
        assert r.social_cost == 2.0
        assert r.passes_used == 2
        assert [e.potential for e in r.potential_trace] == [4.0, 2.0]

    def test_all_fixed(self, fixed_only):
        r = run_dynamics(fixed_only)
        assert r.converged and r.passes_used == 1 and r.changes == 0

    def test_round_robin_ignores_seed(self):
        sc = random_scenario(11, houses=(3, 3), shiftable=(3, 3))
        costs = {run_dynamics(sc, DynamicsConfig(seed=s)).social_cost for s in range(4)}
        assert len(costs) == 1

    def test_invalid_scenario(self):
        sc = Scenario(TimeGrid(4), (House("h", (Appliance("a", (1, 1, 1), 3, 4, "shiftable"),)),), AFFINE)
        with pytest.raises(ScenarioValidationError):
            run_dynamics(sc)

    def test_trace_records_actors(self, sc22):
        r = run_dynamics(sc22)
        head, *moves = r.potential_trace
        assert head.actor is None and head.step == 0
        for e in moves:
            assert e.new_cost < e.old_cost
        assert r.per_house_bills == {"h1": 1.0, "h2": 1.0}


class TestIsNash:
    def test_anti_aligned(self, sc22):
        assert is_nash(StrategyProfile(sc22, (1, 2)), sc22.tariff) == (True, None)

    def test_aligned(self, sc22):
        ok, dev = is_nash(StrategyProfile(sc22, (1, 1)), sc22.tariff)
        assert not ok
        assert dev.better == (2,) and dev.gain == pytest.approx(1.0)

    def test_single_player_argmin(self):
        sc = with_background([2.0, 0.5])
        assert is_nash(StrategyProfile(sc, (2,)), sc.tariff)[0]

    def test_ma(self):
        sc = shared_house(limit=2.0)
        assert not is_nash(StrategyProfile(sc, (1, 1)), sc.tariff, MA)[0]
        assert is_nash(StrategyProfile(sc, (1, 2)), sc.tariff, MA)[0]


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000), mode=st.sampled_from([SA, MA]),
       order=st.sampled_from(["roundrobin", "random"]), init=st.sampled_from(["greedy", "random"]))
def test_converged_profiles_are_nash(seed, mode, order, init):
    sc = random_scenario(seed, background_kw=float(seed % 3))
    cfg = DynamicsConfig(mode=mode, order_policy=order, seed=seed, init=init)
    r = run_dynamics(sc, cfg)
    assert r.converged and not r.diagnostics.cycle_detected
    assert is_nash(r.final_profile, sc.tariff, mode, cfg.improvement_epsilon)[0]
    # trace: one entry per change plus the initial one, costs fall for the mover
    assert len(r.potential_trace) == r.changes + 1
    assert all(e.new_cost < e.old_cost for e in r.potential_trace[1:])
    assert r.potential_trace[-1].potential == pytest.approx(r.social_cost)
    assert run_dynamics(sc, cfg) == r


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_sa_linear_tariff_potential_strictly_decreases(seed):
    sc = random_scenario(seed, houses=(2, 4), shiftable=(1, 3), slot_count=10, tariff=AFFINE)
    r = run_dynamics(sc)
    pots = [e.potential for e in r.potential_trace]
    assert all(b < a for a, b in zip(pots, pots[1:]))
    assert r.diagnostics.potential_increase_events == ()
