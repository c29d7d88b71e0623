"""Exhaustive ground truth for small scenarios.

Every feasible strategy profile is enumerated in lexicographic order of
(player, start slot).  Social costs and unilateral deviations are evaluated
directly from the demand arrays, without going through the dynamics code,
so the results can be used to check it.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from gridsched.engine import MA, SA, EquilibriumResult, normalize_mode
from gridsched.model import (
    SUPPLY_TOL,
    Scenario,
    ScenarioError,
    StrategyProfile,
    appliance_demand,
    fixed_demand,
)
from gridsched.pricing import Tariff, price_vector, social_cost

DEFAULT_CEILING = 10**7
BLOCK = 4096


class OracleCeilingError(ScenarioError):
    def __init__(self, size: int, ceiling: int):
        self.size = size
        self.ceiling = ceiling
        super().__init__(f"profile space has {size} candidate profiles, above the ceiling of {ceiling}")


@dataclass(frozen=True)
class OracleResult:
    mode: str
    optimum_cost: float
    optimum_profiles: tuple[StrategyProfile, ...]
    nash_profiles: tuple[tuple[StrategyProfile, float], ...]
    price_of_anarchy: float | None
    profile_count_enumerated: int

    def nash_starts(self) -> set[tuple[int, ...]]:
        return {p.starts for p, _ in self.nash_profiles}


@dataclass(frozen=True)
class VerificationReport:
    status: str  # "verified", "failed" or "inconclusive"
    in_nash_set: bool | None
    cost_ratio: float | None
    detail: str = ""


def profile_space_size(scenario: Scenario) -> int:
    size = 1
    for p in scenario.players:
        size *= len(scenario.appliance(p).start_range)
    return size


class _Tables:
    def __init__(self, scenario: Scenario, tariff: Tariff):
        self.scenario = scenario
        self.tariff = tariff
        self.hours = scenario.grid.slot_duration_hours
        self.players = scenario.players
        self.ranges = [scenario.appliance(p).start_range for p in self.players]
        self.rows = [
            np.array([appliance_demand(scenario.appliance(p), s, scenario.grid) for s in r])
            for p, r in zip(self.players, self.ranges)
        ]
        self.house_of = [scenario.house_position(p.house_id) for p in self.players]
        self.fixed = [fixed_demand(scenario, h.id) for h in scenario.houses]
        self.limits = [h.supply_limit_kw + SUPPLY_TOL for h in scenario.houses]
        self.dims = tuple(len(r) for r in self.ranges)

    def blocks(self, block: int = BLOCK):
        """Yield (offsets, per-player loads, per-house loads, feasible) for consecutive blocks."""
        size = int(np.prod(self.dims)) if self.dims else 1
        T = self.scenario.grid.slot_count
        for lo in range(0, size, block):
            flat = np.arange(lo, min(size, lo + block))
            if self.dims:
                offsets = np.stack(np.unravel_index(flat, self.dims), axis=1)
            else:
                offsets = np.zeros((len(flat), 0), dtype=int)
            loads = [self.rows[i][offsets[:, i]] for i in range(len(self.players))]
            houses = []
            for h, base in enumerate(self.fixed):
                y = np.broadcast_to(base, (len(flat), T)).copy()
                for i, hp in enumerate(self.house_of):
                    if hp == h:
                        y += loads[i]
                houses.append(y)
            feasible = np.ones(len(flat), dtype=bool)
            for h, y in enumerate(houses):
                feasible &= np.all(y <= self.limits[h], axis=1)
            yield offsets, loads, houses, feasible

    def cost(self, load, background):
        return np.sum(load * price_vector(self.tariff, background + load), axis=-1) * self.hours

    def background_excluding_player(self, loads, i):
        y = sum(self.fixed, np.zeros(self.scenario.grid.slot_count))
        for j, v in enumerate(loads):
            if j != i:
                y = y + v
        return y

    def background_excluding_house(self, loads, h):
        y = sum((f for k, f in enumerate(self.fixed) if k != h), np.zeros(self.scenario.grid.slot_count))
        y = np.broadcast_to(y, (len(loads[0]) if loads else 1, len(y)))
        for j, v in enumerate(loads):
            if self.house_of[j] != h:
                y = y + v
        return y

    def house_alternatives(self, h):
        """All joint schedules of house ``h`` as (load matrix, feasible mask)."""
        members = [i for i, hp in enumerate(self.house_of) if hp == h]
        combos = list(itertools.product(*[range(self.dims[i]) for i in members]))
        load = np.array([
            self.fixed[h] + sum((self.rows[i][k] for i, k in zip(members, c)), np.zeros_like(self.fixed[h]))
            for c in combos
        ])
        return members, load, np.all(load <= self.limits[h], axis=1)

    def starts(self, offsets_row) -> tuple[int, ...]:
        return tuple(r[k] for r, k in zip(self.ranges, offsets_row))


def _check_ceiling(scenario: Scenario, ceiling: int) -> int:
    size = profile_space_size(scenario)
    if size > ceiling:
        raise OracleCeilingError(size, ceiling)
    return size


def enumerate_profiles(scenario: Scenario, ceiling: int = DEFAULT_CEILING) -> Iterator[StrategyProfile]:
    """Yield every profile that respects the windows and supply limits, once each."""
    _check_ceiling(scenario, ceiling)
    tables = _Tables(scenario, scenario.tariff)
    for offsets, _, _, feasible in tables.blocks():
        for row in offsets[feasible]:
            yield StrategyProfile(scenario, tables.starts(row))


def brute_force(
    scenario: Scenario,
    mode: str = SA,
    *,
    tariff: Tariff | None = None,
    epsilon: float = 0.0,
    ceiling: int = DEFAULT_CEILING,
) -> OracleResult:
    """Global optimum and all pure Nash equilibria by exhaustive enumeration.

    A profile is an equilibrium when no player (SA) or house (MA) has a
    feasible unilateral deviation that lowers its own payment by more than
    ``epsilon``.
    """
    mode = normalize_mode(mode)
    _check_ceiling(scenario, ceiling)
    tariff = scenario.tariff if tariff is None else tariff
    tables = _Tables(scenario, tariff)
    n_houses = len(scenario.houses)
    alternatives = [tables.house_alternatives(h) for h in range(n_houses)] if mode == MA else None

    all_starts, all_costs, all_nash = [], [], []
    for offsets, loads, houses, feasible in tables.blocks():
        if not feasible.any():
            continue
        offsets = offsets[feasible]
        loads = [v[feasible] for v in loads]
        houses = [y[feasible] for y in houses]
        total = sum(houses)
        social = np.sum(total * price_vector(tariff, total), axis=1) * tables.hours
        nash = np.ones(len(offsets), dtype=bool)
        if mode == SA:
            for i, rows in enumerate(tables.rows):
                h = tables.house_of[i]
                background = tables.background_excluding_player(loads, i)
                house_bg = houses[h] - loads[i]
                current = tables.cost(loads[i], background)
                for k, row in enumerate(rows):
                    moved = offsets[:, i] != k
                    ok = np.all(house_bg + row <= tables.limits[h], axis=1)
                    alt = tables.cost(row[None, :], background)
                    nash &= ~(moved & ok & (alt < current - epsilon))
        else:
            for h in range(n_houses):
                members, alt_load, alt_ok = alternatives[h]
                if not members:
                    continue
                background = tables.background_excluding_house(loads, h)
                current = tables.cost(houses[h], background)
                alt = tables.cost(alt_load[None, :, :], background[:, None, :])
                alt = np.where(alt_ok[None, :], alt, np.inf)
                nash &= ~(alt.min(axis=1) < current - epsilon)
        all_starts.append(offsets)
        all_costs.append(social)
        all_nash.append(nash)

    if not all_starts:
        raise ScenarioError("scenario has no feasible profile")
    offsets = np.concatenate(all_starts)
    costs = np.concatenate(all_costs)
    nash = np.concatenate(all_nash)
    optimum = float(costs.min())
    tie = 1e-12 * max(abs(optimum), 1e-300)
    optimum_profiles = tuple(
        StrategyProfile(scenario, tables.starts(r)) for r in offsets[costs <= optimum + tie]
    )
    nash_profiles = tuple(
        (StrategyProfile(scenario, tables.starts(r)), float(c)) for r, c in zip(offsets[nash], costs[nash])
    )
    poa = None
    if nash_profiles:
        worst = max(c for _, c in nash_profiles)
        poa = worst / optimum if optimum > 0 else (1.0 if worst == 0 else float("inf"))
    return OracleResult(mode, optimum, optimum_profiles, nash_profiles, poa, len(offsets))


def verify_profile(scenario: Scenario, profile: StrategyProfile, oracle: OracleResult) -> VerificationReport:
    """Check membership of ``profile`` in the oracle's equilibrium set."""
    member = profile.starts in oracle.nash_starts()
    cost = social_cost(profile, scenario.tariff)
    opt = oracle.optimum_cost
    ratio = cost / opt if opt > 0 else (1.0 if cost == 0 else float("inf"))
    if member:
        return VerificationReport("verified", True, ratio)
    return VerificationReport("failed", False, ratio, f"profile {profile.starts} is not a pure Nash equilibrium")


def verify_engine(scenario: Scenario, result: EquilibriumResult,
                  oracle: OracleResult | None = None) -> VerificationReport:
    """Check that a converged dynamics run ended on an exact equilibrium."""
    if not result.converged:
        return VerificationReport("inconclusive", None, None, "dynamics did not converge")
    if oracle is None or oracle.mode != result.config.mode:
        oracle = brute_force(scenario, result.config.mode)
    return verify_profile(scenario, result.final_profile, oracle)
