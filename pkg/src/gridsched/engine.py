"""Best-response dynamics for the single-appliance (SA) and multiple-appliance (MA) games.

In SA mode every shiftable appliance is a player minimising its own
payment; in MA mode every house is a player choosing the joint schedule of
its shiftable appliances to minimise the house bill.  Players move one at a
time and the social cost (the game's potential) is recorded after every
accepted move.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from gridsched.model import (
    SUPPLY_TOL,
    InfeasibleScenarioError,
    PlayerId,
    Scenario,
    ScenarioValidationError,
    StrategyProfile,
    appliance_demand,
    fixed_demand,
    profile_violations,
    validate_scenario,
)
from gridsched.pricing import Tariff, house_bills, price_vector

SA = "SA"
MA = "MA"
ROUND_ROBIN = "round_robin"
RANDOM_PERMUTATION = "random_permutation_per_pass"
GREEDY = "greedy"
RANDOM = "random"

DEFAULT_EPSILON = 1e-12
# Joint assignments evaluated per vectorised block in MA search.
MA_BLOCK = 65536
RANDOM_INIT_ATTEMPTS = 100

_ORDER_ALIASES = {
    "round_robin": ROUND_ROBIN,
    "roundrobin": ROUND_ROBIN,
    "random": RANDOM_PERMUTATION,
    "random_permutation_per_pass": RANDOM_PERMUTATION,
}


def normalize_mode(mode: str) -> str:
    m = str(mode).upper()
    if m not in (SA, MA):
        raise ValueError(f"mode must be SA or MA, got {mode!r}")
    return m


@dataclass(frozen=True)
class DynamicsConfig:
    mode: str = SA
    order_policy: str = ROUND_ROBIN
    seed: int = 0
    max_passes: int = 100
    improvement_epsilon: float = DEFAULT_EPSILON
    init: str = GREEDY

    def __post_init__(self):
        object.__setattr__(self, "mode", normalize_mode(self.mode))
        if self.order_policy not in _ORDER_ALIASES:
            raise ValueError(f"unknown order policy {self.order_policy!r}")
        object.__setattr__(self, "order_policy", _ORDER_ALIASES[self.order_policy])
        if self.init not in (GREEDY, RANDOM):
            raise ValueError(f"init must be {GREEDY!r} or {RANDOM!r}")
        if self.max_passes < 1:
            raise ValueError("max_passes must be >= 1")
        if self.improvement_epsilon < 0:
            raise ValueError("improvement_epsilon must be >= 0")


@dataclass(frozen=True)
class TraceEntry:
    step: int
    actor: str | None
    old_cost: float | None
    new_cost: float | None
    potential: float


@dataclass(frozen=True)
class Diagnostics:
    empty_feasible_events: tuple[tuple[int, str], ...] = ()
    potential_increase_events: tuple[tuple[int, str, float, float], ...] = ()
    cycle_detected: bool = False


@dataclass(frozen=True)
class EquilibriumResult:
    final_profile: StrategyProfile
    converged: bool
    passes_used: int
    potential_trace: tuple[TraceEntry, ...]
    per_house_bills: dict[str, float]
    diagnostics: Diagnostics
    config: DynamicsConfig
    elapsed_s: float = field(default=0.0, compare=False)

    @property
    def changes(self) -> int:
        return len(self.potential_trace) - 1

    @property
    def social_cost(self) -> float:
        return self.potential_trace[-1].potential


@dataclass(frozen=True)
class Deviation:
    actor: str
    current: tuple[int, ...]
    better: tuple[int, ...]
    gain: float


class _Game:
    """Array form of a scenario: one demand row per (player, candidate start)."""

    def __init__(self, scenario: Scenario, tariff: Tariff | None = None):
        self.scenario = scenario
        self.tariff = scenario.tariff if tariff is None else tariff
        self.hours = scenario.grid.slot_duration_hours
        grid = scenario.grid
        self.players = scenario.players
        self.n_players = len(self.players)
        self.house_of = np.array([scenario.house_position(p.house_id) for p in self.players], dtype=int)
        self.first = []
        self.rows = []
        for p in self.players:
            a = scenario.appliance(p)
            self.first.append(a.earliest_start)
            self.rows.append(np.array([appliance_demand(a, s, grid) for s in a.start_range]))
        self.fixed_house = np.array([fixed_demand(scenario, h.id) for h in scenario.houses]).reshape(
            len(scenario.houses), grid.slot_count
        )
        self.limit = np.array([h.supply_limit_kw for h in scenario.houses]) + SUPPLY_TOL
        self.house_players = [np.flatnonzero(self.house_of == i) for i in range(len(scenario.houses))]
        self.idx = np.zeros(self.n_players, dtype=int)
        self.cur = np.zeros((self.n_players, grid.slot_count))

    # state ---------------------------------------------------------------
    def set_starts(self, starts):
        for i, s in enumerate(starts):
            self.set_player(i, s - self.first[i])

    def set_player(self, i: int, k: int):
        self.idx[i] = k
        self.cur[i] = self.rows[i][k]

    def starts(self) -> tuple[int, ...]:
        return tuple(int(k) + f for k, f in zip(self.idx, self.first))

    def profile(self) -> StrategyProfile:
        return StrategyProfile(self.scenario, self.starts())

    def _sum_players(self, mask) -> np.ndarray:
        return self.cur[mask].sum(axis=0)

    def total(self) -> np.ndarray:
        return self.fixed_house.sum(axis=0) + self.cur.sum(axis=0)

    def potential(self) -> float:
        y = self.total()
        return float(np.sum(y * price_vector(self.tariff, y)) * self.hours)

    # single appliance ----------------------------------------------------
    def player_options(self, i: int):
        """Costs of every start of player ``i`` and which of them are feasible."""
        others = np.ones(self.n_players, dtype=bool)
        others[i] = False
        background = self.fixed_house.sum(axis=0) + self._sum_players(others)
        h = self.house_of[i]
        housemates = others & (self.house_of == h)
        house_bg = self.fixed_house[h] + self._sum_players(housemates)
        rows = self.rows[i]
        costs = np.sum(rows * price_vector(self.tariff, background + rows), axis=1) * self.hours
        feasible = np.all(house_bg + rows <= self.limit[h], axis=1)
        return costs, feasible

    def best_response(self, i: int, epsilon: float):
        """Return (new offset, old cost, new cost, feasible set empty)."""
        costs, feasible = self.player_options(i)
        k = self.idx[i]
        current = costs[k]
        if not feasible.any():
            return k, current, current, True
        masked = np.where(feasible, costs, np.inf)
        best = int(np.argmin(masked))
        if masked[best] < current - epsilon:
            return best, current, masked[best], False
        return k, current, current, False

    # whole house ---------------------------------------------------------
    def house_options(self, h: int):
        """Yield (combos, costs, feasible) blocks over the house's joint schedules.

        Combos are offset tuples in lexicographic order.
        """
        members = self.house_players[h]
        dims = tuple(len(self.rows[i]) for i in members)
        outside = self.house_of != h
        background = np.delete(self.fixed_house, h, axis=0).sum(axis=0) + self._sum_players(outside)
        size = int(np.prod(dims)) if dims else 1
        for lo in range(0, size, MA_BLOCK):
            flat = np.arange(lo, min(size, lo + MA_BLOCK))
            combos = np.stack(np.unravel_index(flat, dims), axis=1) if dims else np.zeros((1, 0), int)
            load = np.repeat(self.fixed_house[h][None, :], len(flat), axis=0)
            for j, i in enumerate(members):
                load += self.rows[i][combos[:, j]]
            costs = np.sum(load * price_vector(self.tariff, background + load), axis=1) * self.hours
            feasible = np.all(load <= self.limit[h], axis=1)
            yield combos, costs, feasible

    def current_house_combo(self, h: int) -> tuple[int, ...]:
        return tuple(int(self.idx[i]) for i in self.house_players[h])

    def house_best_response(self, h: int, epsilon: float):
        """Return (offsets, old cost, new cost, no feasible schedule)."""
        current_combo = self.current_house_combo(h)
        current = None
        best_cost, best_combo = np.inf, None
        for combos, costs, feasible in self.house_options(h):
            hit = np.flatnonzero(np.all(combos == current_combo, axis=1))
            if hit.size:
                current = costs[hit[0]]
            masked = np.where(feasible, costs, np.inf)
            j = int(np.argmin(masked))
            if masked[j] < best_cost:
                best_cost, best_combo = masked[j], tuple(int(v) for v in combos[j])
        if best_combo is None:
            return current_combo, current, current, True
        if best_cost < current - epsilon:
            return best_combo, current, best_cost, False
        return current_combo, current, current, False

    def set_house(self, h: int, combo):
        for i, k in zip(self.house_players[h], combo):
            self.set_player(i, k)

    def house_ok(self, h: int) -> bool:
        load = self.fixed_house[h] + self._sum_players(self.house_of == h)
        return bool(np.all(load <= self.limit[h]))


def _check_scenario(scenario: Scenario):
    violations = validate_scenario(scenario)
    if violations:
        raise ScenarioValidationError(violations)


def _place(scenario: Scenario, pick):
    """Sequential placement; returns (profile, None) or (None, (house, appliance)) when stuck."""
    starts = {}
    for house in scenario.houses:
        load = fixed_demand(scenario, house.id)
        for a in house.appliances:
            if not a.is_shiftable:
                continue
            options = [
                s
                for s in a.start_range
                if np.all(load + appliance_demand(a, s, scenario.grid) <= house.supply_limit_kw + SUPPLY_TOL)
            ]
            if not options:
                return None, (house.id, a.id)
            s = pick(options)
            starts[PlayerId(house.id, a.id)] = s
            load = load + appliance_demand(a, s, scenario.grid)
    return StrategyProfile.from_mapping(scenario, starts), None


def initialize(scenario: Scenario, config: DynamicsConfig | None = None) -> StrategyProfile:
    """Place every shiftable appliance house by house at its earliest feasible start.

    With ``config.init == "random"`` a uniformly random feasible start is
    drawn instead, from a generator seeded with ``config.seed``.  Random
    draws that leave a later appliance without room are redrawn, up to
    ``RANDOM_INIT_ATTEMPTS`` times, before falling back to greedy placement.
    """
    config = config or DynamicsConfig()
    if config.init == RANDOM:
        rng = np.random.default_rng(config.seed)
        for _ in range(RANDOM_INIT_ATTEMPTS):
            profile, _ = _place(scenario, lambda opts: opts[int(rng.integers(len(opts)))])
            if profile is not None:
                return profile
    profile, stuck = _place(scenario, lambda opts: opts[0])
    if profile is None:
        raise InfeasibleScenarioError(f"no feasible start for appliance {stuck[1]!r} of house {stuck[0]!r}")
    return profile


def best_response(player: PlayerId, profile: StrategyProfile, tariff: Tariff,
                  epsilon: float = DEFAULT_EPSILON) -> tuple[int, bool]:
    """Cheapest feasible start for ``player`` against the rest of ``profile``.

    The player only moves when that saves more than ``epsilon``; among
    equally cheap starts the lowest slot wins.
    """
    game = _Game(profile.scenario, tariff)
    game.set_starts(profile.starts)
    i = profile.scenario.players.index(player)
    k, old, new, _ = game.best_response(i, epsilon)
    return k + game.first[i], new < old


def ma_best_response(house_id: str, profile: StrategyProfile, tariff: Tariff,
                     epsilon: float = DEFAULT_EPSILON) -> tuple[dict[PlayerId, int], bool]:
    """Cheapest feasible joint schedule of one house's shiftable appliances."""
    scenario = profile.scenario
    game = _Game(scenario, tariff)
    game.set_starts(profile.starts)
    h = scenario.house_position(house_id)
    combo, old, new, _ = game.house_best_response(h, epsilon)
    members = game.house_players[h]
    assignment = {game.players[i]: k + game.first[i] for i, k in zip(members, combo)}
    return assignment, old is not None and new < old


def run_dynamics(scenario: Scenario, config: DynamicsConfig | None = None) -> EquilibriumResult:
    config = config or DynamicsConfig()
    t0 = time.perf_counter()
    _check_scenario(scenario)
    profile = initialize(scenario, config)
    game = _Game(scenario)
    game.set_starts(profile.starts)
    eps = config.improvement_epsilon
    rng = np.random.default_rng(config.seed)

    if config.mode == SA:
        actors = list(range(game.n_players))
        names = [str(p) for p in game.players]
    else:
        actors = [h for h in range(len(scenario.houses)) if len(game.house_players[h])]
        names = [h.id for h in scenario.houses]

    pot = game.potential()
    trace = [TraceEntry(0, None, None, None, pot)]
    visited = {game.starts()}
    empty_events, increase_events = [], []
    converged = cycle = False
    passes = 0
    step = 0
    while passes < config.max_passes and not converged and not cycle:
        passes += 1
        order = actors if config.order_policy == ROUND_ROBIN else [actors[j] for j in rng.permutation(len(actors))]
        changed = 0
        for a in order:
            if config.mode == SA:
                k, old, new, empty = game.best_response(a, eps)
                moved = k != game.idx[a]
                if moved:
                    game.set_player(a, k)
                house = game.house_of[a]
            else:
                combo, old, new, empty = game.house_best_response(a, eps)
                moved = combo != game.current_house_combo(a)
                if moved:
                    game.set_house(a, combo)
                house = a
            if empty:
                empty_events.append((step, names[a]))
            if not moved:
                continue
            if not game.house_ok(house):
                raise RuntimeError(f"supply limit broken after move of {names[a]}")
            step += 1
            changed += 1
            new_pot = game.potential()
            if not new_pot < pot:
                increase_events.append((step, names[a], pot, new_pot))
            pot = new_pot
            trace.append(TraceEntry(step, names[a], float(old), float(new), pot))
            key = game.starts()
            if key in visited:
                cycle = True
                break
            visited.add(key)
        if changed == 0:
            converged = True

    final = game.profile()
    return EquilibriumResult(
        final_profile=final,
        converged=converged,
        passes_used=passes,
        potential_trace=tuple(trace),
        per_house_bills=house_bills(final, scenario.tariff),
        diagnostics=Diagnostics(tuple(empty_events), tuple(increase_events), cycle),
        config=config,
        elapsed_s=time.perf_counter() - t0,
    )


def is_nash(profile: StrategyProfile, tariff: Tariff, mode: str = SA,
            epsilon: float = DEFAULT_EPSILON) -> tuple[bool, Deviation | None]:
    """Check that no player (SA) or house (MA) can save more than ``epsilon``.

    Returns the verdict and the most profitable deviation found, if any.
    """
    mode = normalize_mode(mode)
    bad = profile_violations(profile)
    if bad:
        raise ValueError("profile is not feasible: " + "; ".join(bad))
    scenario = profile.scenario
    game = _Game(scenario, tariff)
    game.set_starts(profile.starts)
    worst = None
    if mode == SA:
        for i, p in enumerate(game.players):
            costs, feasible = game.player_options(i)
            k = game.idx[i]
            masked = np.where(feasible, costs, np.inf)
            best = int(np.argmin(masked))
            gain = float(costs[k] - masked[best])
            if gain > 0 and (worst is None or gain > worst.gain):
                worst = Deviation(str(p), (k + game.first[i],), (best + game.first[i],), gain)
    else:
        for h, house in enumerate(scenario.houses):
            members = game.house_players[h]
            if not len(members):
                continue
            combo, old, new, _ = game.house_best_response(h, 0.0)
            gain = float(old - new)
            if gain > 0 and (worst is None or gain > worst.gain):
                first = [game.first[i] for i in members]
                worst = Deviation(
                    house.id,
                    tuple(k + f for k, f in zip(game.current_house_combo(h), first)),
                    tuple(k + f for k, f in zip(combo, first)),
                    gain,
                )
    return (worst is None or worst.gain <= epsilon), worst

