"""Domain types for households, appliances and strategy profiles.

Slots are 1-based throughout: slot ``t`` lives at index ``t - 1`` of every
demand vector.  Powers are in kW; energy per slot is power times
``slot_duration_hours``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import TYPE_CHECKING, Iterable, Mapping, NamedTuple

import numpy as np

if TYPE_CHECKING:
    from gridsched.pricing import Tariff

SHIFTABLE = "shiftable"
FIXED = "fixed"

# Slack for floating point accumulation in supply-limit checks (kW).
SUPPLY_TOL = 1e-9


class ScenarioError(ValueError):
    """Base class for scenario problems."""


class ScenarioValidationError(ScenarioError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.violations))


class InfeasibleScenarioError(ScenarioError):
    """No feasible start exists for some appliance."""


@dataclass(frozen=True)
class TimeGrid:
    slot_count: int = 24
    slot_duration_hours: float = 1.0

    @property
    def slots(self) -> range:
        return range(1, self.slot_count + 1)


@dataclass(frozen=True)
class Appliance:
    """A non-preemptive device running ``len(phase_loads)`` consecutive slots.

    ``kind`` may be left as ``None``; it is then derived from the window.
    A device whose window equals its duration is always fixed.
    """

    id: str
    phase_loads: tuple[float, ...]
    earliest_start: int
    latest_end: int
    kind: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "phase_loads", tuple(float(v) for v in self.phase_loads))
        if self.kind is None or (self.kind == SHIFTABLE and self.window_width == self.duration):
            derived = FIXED if self.window_width <= self.duration else SHIFTABLE
            object.__setattr__(self, "kind", derived)

    @property
    def duration(self) -> int:
        return len(self.phase_loads)

    @property
    def window_width(self) -> int:
        return self.latest_end - self.earliest_start + 1

    @property
    def latest_start(self) -> int:
        return self.latest_end - self.duration + 1

    @property
    def start_range(self) -> range:
        return range(self.earliest_start, self.latest_start + 1)

    @property
    def is_shiftable(self) -> bool:
        return self.kind == SHIFTABLE

    @property
    def energy(self) -> float:
        return float(sum(self.phase_loads))


@dataclass(frozen=True)
class House:
    id: str
    appliances: tuple[Appliance, ...] = ()
    supply_limit_kw: float = 3.0

    def __post_init__(self):
        object.__setattr__(self, "appliances", tuple(self.appliances))

    def appliance(self, appliance_id: str) -> Appliance:
        for a in self.appliances:
            if a.id == appliance_id:
                return a
        raise KeyError(f"house {self.id!r} has no appliance {appliance_id!r}")


class PlayerId(NamedTuple):
    house_id: str
    appliance_id: str

    def __str__(self):
        return f"{self.house_id}/{self.appliance_id}"


@dataclass(frozen=True)
class Scenario:
    grid: TimeGrid
    houses: tuple[House, ...]
    tariff: "Tariff"

    def __post_init__(self):
        object.__setattr__(self, "houses", tuple(self.houses))

    @cached_property
    def players(self) -> tuple[PlayerId, ...]:
        """Shiftable appliances, in (house order, appliance order)."""
        return tuple(
            PlayerId(h.id, a.id) for h in self.houses for a in h.appliances if a.is_shiftable
        )

    @cached_property
    def _house_index(self) -> dict[str, int]:
        return {h.id: i for i, h in enumerate(self.houses)}

    def house(self, house_id: str) -> House:
        try:
            return self.houses[self._house_index[house_id]]
        except KeyError:
            raise KeyError(f"unknown house {house_id!r}") from None

    def house_position(self, house_id: str) -> int:
        return self._house_index[house_id]

    def appliance(self, player: PlayerId) -> Appliance:
        return self.house(player.house_id).appliance(player.appliance_id)

    def players_of(self, house_id: str) -> tuple[PlayerId, ...]:
        return tuple(p for p in self.players if p.house_id == house_id)

    def with_tariff(self, tariff: "Tariff") -> "Scenario":
        return replace(self, tariff=tariff)


@dataclass(frozen=True)
class StrategyProfile:
    """Start slots of every player of ``scenario``, aligned with ``scenario.players``."""

    scenario: Scenario = field(repr=False)
    starts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "starts", tuple(int(s) for s in self.starts))
        if len(self.starts) != len(self.scenario.players):
            raise ValueError(
                f"profile has {len(self.starts)} starts for {len(self.scenario.players)} players"
            )

    @classmethod
    def from_mapping(cls, scenario: Scenario, start_slot: Mapping[PlayerId, int]) -> "StrategyProfile":
        missing = [p for p in scenario.players if p not in start_slot]
        if missing:
            raise KeyError(f"no start given for {', '.join(map(str, missing))}")
        return cls(scenario, tuple(start_slot[p] for p in scenario.players))

    @cached_property
    def start_slot(self) -> dict[PlayerId, int]:
        return dict(zip(self.scenario.players, self.starts))

    def start_of(self, player: PlayerId) -> int:
        """Start of any appliance; fixed ones report their forced start."""
        if player in self.start_slot:
            return self.start_slot[player]
        return self.scenario.appliance(player).earliest_start

    def replace_start(self, player: PlayerId, start: int) -> "StrategyProfile":
        idx = self.scenario.players.index(player)
        starts = list(self.starts)
        starts[idx] = start
        return StrategyProfile(self.scenario, tuple(starts))


def appliance_demand(appliance: Appliance, start: int, grid: TimeGrid) -> np.ndarray:
    if start not in appliance.start_range or start + appliance.duration - 1 > grid.slot_count or start < 1:
        raise ValueError(
            f"start {start} outside window [{appliance.earliest_start}, {appliance.latest_start}] "
            f"of appliance {appliance.id!r}"
        )
    v = np.zeros(grid.slot_count)
    v[start - 1 : start - 1 + appliance.duration] = appliance.phase_loads
    return v


def house_demand(profile: StrategyProfile, house_id: str) -> np.ndarray:
    scenario = profile.scenario
    house = scenario.house(house_id)
    y = np.zeros(scenario.grid.slot_count)
    for a in house.appliances:
        y += appliance_demand(a, profile.start_of(PlayerId(house.id, a.id)), scenario.grid)
    return y


def total_demand(profile: StrategyProfile) -> np.ndarray:
    y = np.zeros(profile.scenario.grid.slot_count)
    for h in profile.scenario.houses:
        y += house_demand(profile, h.id)
    return y


def fixed_demand(scenario: Scenario, house_id: str | None = None) -> np.ndarray:
    """Load of the fixed appliances of one house, or of all houses."""
    houses = scenario.houses if house_id is None else (scenario.house(house_id),)
    y = np.zeros(scenario.grid.slot_count)
    for h in houses:
        for a in h.appliances:
            if not a.is_shiftable:
                y += appliance_demand(a, a.earliest_start, scenario.grid)
    return y


def feasible_starts(player: PlayerId, profile: StrategyProfile) -> list[int]:
    """Starts in the player's window that keep its house under the supply limit."""
    scenario = profile.scenario
    house = scenario.house(player.house_id)
    appliance = house.appliance(player.appliance_id)
    others = np.zeros(scenario.grid.slot_count)
    for a in house.appliances:
        if a.id != appliance.id:
            others += appliance_demand(a, profile.start_of(PlayerId(house.id, a.id)), scenario.grid)
    limit = house.supply_limit_kw + SUPPLY_TOL
    return [
        s
        for s in appliance.start_range
        if np.all(others + appliance_demand(appliance, s, scenario.grid) <= limit)
    ]


def profile_violations(profile: StrategyProfile) -> list[str]:
    """Window and supply-limit violations of a profile (empty when valid)."""
    scenario = profile.scenario
    out = []
    for p, s in zip(scenario.players, profile.starts):
        a = scenario.appliance(p)
        if s not in a.start_range:
            out.append(f"{p}: start {s} outside [{a.earliest_start}, {a.latest_start}]")
    if out:
        return out
    for h in scenario.houses:
        y = house_demand(profile, h.id)
        for t in np.flatnonzero(y > h.supply_limit_kw + SUPPLY_TOL):
            out.append(f"house {h.id}: demand {y[t]:.6g} kW exceeds supply limit at slot {t + 1}")
    return out


def validate_scenario(scenario: Scenario) -> list[str]:
    """Return every violated invariant as a message; empty means valid."""
    violations: list[str] = []
    grid = scenario.grid
    if grid.slot_count < 1:
        violations.append(f"slot_count {grid.slot_count} < 1")
    if not grid.slot_duration_hours > 0:
        violations.append(f"slot_duration_hours {grid.slot_duration_hours} must be positive")
    seen_houses = set()
    for h in scenario.houses:
        where = f"house {h.id}"
        if h.id in seen_houses:
            violations.append(f"{where}: duplicate house id")
        seen_houses.add(h.id)
        if not h.supply_limit_kw > 0:
            violations.append(f"{where}: supply limit {h.supply_limit_kw} must be positive")
        seen = set()
        for a in h.appliances:
            loc = f"{where}, appliance {a.id}"
            if a.id in seen:
                violations.append(f"{loc}: duplicate appliance id")
            seen.add(a.id)
            violations.extend(f"{loc}: {msg}" for msg in _appliance_violations(a, h, grid))
    if not violations and grid.slot_count >= 1:
        for h in scenario.houses:
            base = fixed_demand(scenario, h.id)
            for t in np.flatnonzero(base > h.supply_limit_kw + SUPPLY_TOL):
                violations.append(
                    f"house {h.id}: fixed load {base[t]:.6g} kW exceeds supply limit at slot {t + 1}"
                )
    return violations


def _appliance_violations(a: Appliance, house: House, grid: TimeGrid) -> Iterable[str]:
    d = a.duration
    if d < 1:
        yield "no phases (duration must be >= 1)"
        return
    if a.kind not in (SHIFTABLE, FIXED):
        yield f"unknown kind {a.kind!r}"
    if any(v < 0 or not np.isfinite(v) for v in a.phase_loads):
        yield "phase loads must be finite and non-negative"
    if a.earliest_start < 1:
        yield f"ST={a.earliest_start} < 1"
    if a.latest_end > grid.slot_count:
        yield f"ET={a.latest_end} beyond horizon of {grid.slot_count} slots"
    if a.earliest_start > a.latest_start:
        yield f"ST > ET - d + 1 ({a.earliest_start} > {a.latest_end}-{d}+1={a.latest_start})"
    elif a.kind == FIXED and a.earliest_start != a.latest_start:
        yield f"fixed appliance requires ST = ET - d + 1 ({a.earliest_start} != {a.latest_start})"
    peak = max(a.phase_loads)
    if peak > house.supply_limit_kw:
        yield f"phase exceeds supply limit ({peak} kW > {house.supply_limit_kw} kW)"
