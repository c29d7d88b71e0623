"""Demand-dependent tariffs, bills, and a numerical regularity check.

Prices are in EUR/kWh as a function of the aggregate demand ``y`` in kW.
Two families are supported:

* ``piecewise_affine``: ``c_min + slope * min(y, threshold_kw)``
* ``power_law``: ``alpha * y ** beta``
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from gridsched.model import PlayerId, Scenario, StrategyProfile, appliance_demand, house_demand, total_demand

PIECEWISE_AFFINE = "piecewise_affine"
POWER_LAW = "power_law"

REGULAR = "regular"
DEGENERATE = "degenerate"
VIOLATED = "violated"

# Strictness margin for regularity comparisons.
STRICT_MARGIN = 1e-12


@dataclass(frozen=True)
class Tariff:
    """Pricing function parameters.

    ``slot_overrides`` holds ``(slot, Tariff)`` pairs replacing the base
    tariff in individual slots; it is empty for the usual time-invariant case.
    """

    variant: str = PIECEWISE_AFFINE
    c_min: float = 0.0
    slope: float = 0.0
    threshold_kw: float = float("inf")
    alpha: float = 1.0
    beta: float = 1.0
    slot_overrides: tuple[tuple[int, "Tariff"], ...] = field(default=(), repr=False)

    def __post_init__(self):
        if self.variant == PIECEWISE_AFFINE:
            if self.c_min < 0 or self.slope < 0 or not self.threshold_kw > 0:
                raise ValueError("piecewise_affine tariff needs c_min >= 0, slope >= 0, threshold_kw > 0")
        elif self.variant == POWER_LAW:
            if not self.alpha > 0 or not self.beta >= 1:
                raise ValueError("power_law tariff needs alpha > 0 and beta >= 1")
        else:
            raise ValueError(f"unknown tariff variant {self.variant!r}")
        overrides = tuple(sorted((int(t), o) for t, o in self.slot_overrides))
        if any(o.slot_overrides for _, o in overrides):
            raise ValueError("slot overrides cannot be nested")
        object.__setattr__(self, "slot_overrides", overrides)

    @classmethod
    def piecewise_affine(cls, c_min: float, slope: float, threshold_kw: float = float("inf")) -> "Tariff":
        return cls(PIECEWISE_AFFINE, c_min=float(c_min), slope=float(slope), threshold_kw=float(threshold_kw))

    @classmethod
    def power_law(cls, alpha: float, beta: float) -> "Tariff":
        return cls(POWER_LAW, alpha=float(alpha), beta=float(beta))

    def for_slot(self, slot: int) -> "Tariff":
        for t, o in self.slot_overrides:
            if t == slot:
                return o
        return self

    def scaled(self, factor: float) -> "Tariff":
        """Same tariff with every price multiplied by ``factor``."""
        if self.variant == PIECEWISE_AFFINE:
            base = Tariff.piecewise_affine(self.c_min * factor, self.slope * factor, self.threshold_kw)
        else:
            base = Tariff.power_law(self.alpha * factor, self.beta)
        overrides = tuple((t, o.scaled(factor)) for t, o in self.slot_overrides)
        return Tariff(**{**base.__dict__, "slot_overrides": overrides})


def _price(tariff: Tariff, y):
    if tariff.variant == PIECEWISE_AFFINE:
        return tariff.c_min + tariff.slope * np.minimum(y, tariff.threshold_kw)
    return tariff.alpha * np.power(y, tariff.beta)


def price_at(tariff: Tariff, y, slot: int | None = None):
    """Price for aggregate demand ``y`` (scalar or array)."""
    y_arr = np.asarray(y, dtype=float)
    if np.any(y_arr < 0):
        raise ValueError(f"negative demand {y!r}")
    t = tariff if slot is None else tariff.for_slot(slot)
    out = _price(t, y_arr)
    return float(out) if out.ndim == 0 else out


def price_vector(tariff: Tariff, demand: np.ndarray) -> np.ndarray:
    """Per-slot prices for a demand array whose last axis is the slot axis."""
    demand = np.asarray(demand, dtype=float)
    if np.any(demand < 0):
        raise ValueError("negative demand")
    prices = _price(tariff, demand)
    for slot, override in tariff.slot_overrides:
        if slot <= demand.shape[-1]:
            prices[..., slot - 1] = _price(override, demand[..., slot - 1])
    return prices


def bill(load: np.ndarray, total: np.ndarray, tariff: Tariff, slot_hours: float) -> float:
    """Energy cost of ``load`` when aggregate demand is ``total``."""
    return float(np.sum(load * price_vector(tariff, total)) * slot_hours)


def player_cost(profile: StrategyProfile, player: PlayerId, tariff: Tariff) -> float:
    scenario = profile.scenario
    if player not in profile.start_slot:
        raise KeyError(f"unknown player {player}")
    load = appliance_demand(scenario.appliance(player), profile.start_slot[player], scenario.grid)
    return bill(load, total_demand(profile), tariff, scenario.grid.slot_duration_hours)


def house_bills(profile: StrategyProfile, tariff: Tariff) -> dict[str, float]:
    scenario = profile.scenario
    loads = {h.id: house_demand(profile, h.id) for h in scenario.houses}
    total = np.zeros(scenario.grid.slot_count)
    for v in loads.values():
        total += v
    hours = scenario.grid.slot_duration_hours
    return {hid: bill(v, total, tariff, hours) for hid, v in loads.items()}


def social_cost(profile: StrategyProfile, tariff: Tariff) -> float:
    scenario = profile.scenario
    total = total_demand(profile)
    return bill(total, total, tariff, scenario.grid.slot_duration_hours)


def potential(profile: StrategyProfile, tariff: Tariff) -> float:
    """Potential of the scheduling game, which is the social cost itself."""
    return social_cost(profile, tariff)


@dataclass(frozen=True)
class RegularityReport:
    monotone: bool
    derivative_continuous: bool
    condition2_samples_checked: int
    condition2_samples_violated: int
    verdict: str
    discontinuities: tuple[float, ...] = ()
    counterexample: tuple | None = None


def _derivative(f, y, h, lo, hi):
    # central differences, one-sided where the stencil would leave the range
    y = np.asarray(y, dtype=float)
    left = np.maximum(y - h, lo)
    right = np.minimum(y + h, hi)
    return (f(right) - f(left)) / (right - left)


def _locate_kink(f, a, b, lo, hi, tol, floor):
    """Bisect [a, b]; return the kink location if the one-sided slopes stay apart."""
    def jump(a, b):
        w = b - a
        if a - w < lo or b + w > hi:
            return 0.0
        return abs((f(b + w) - f(b)) / w - (f(a) - f(a - w)) / w)

    first = jump(a, b)
    if first <= tol:
        return None
    while b - a > floor:
        m = 0.5 * (a + b)
        ja, jb = jump(a, m), jump(m, b)
        a, b = (a, m) if ja >= jb else (m, b)
        if max(ja, jb) < 0.5 * first:
            return None
    return 0.5 * (a + b)


def check_regularity(
    tariff: Tariff,
    demand_range: tuple[float, float],
    sample_count: int = 1000,
    *,
    seed: int = 0,
    max_interval: int = 6,
) -> RegularityReport:
    """Numerically certify the two regularity conditions on ``demand_range``.

    Condition 1 is checked by a monotonicity scan and a scan for jumps in
    the derivative.  Condition 2 is checked on random pairs of equal-length
    slot intervals with random demands: when the summed marginal prices of
    the first exceed those of the second, the summed marginal revenues
    ``d[y c(y)]/dy`` must too.  Per-slot overrides are checked separately and
    the worst verdict wins.
    """
    if sample_count < 2:
        raise ValueError("sample_count must be >= 2")
    if tariff.slot_overrides:
        parts = [check_regularity(t, demand_range, sample_count, seed=seed, max_interval=max_interval)
                 for t in [Tariff(**{**tariff.__dict__, "slot_overrides": ()})]
                 + [o for _, o in tariff.slot_overrides]]
        order = {REGULAR: 0, DEGENERATE: 1, VIOLATED: 2}
        worst = max(parts, key=lambda r: order[r.verdict])
        return RegularityReport(
            monotone=all(p.monotone for p in parts),
            derivative_continuous=all(p.derivative_continuous for p in parts),
            condition2_samples_checked=sum(p.condition2_samples_checked for p in parts),
            condition2_samples_violated=sum(p.condition2_samples_violated for p in parts),
            verdict=worst.verdict,
            discontinuities=tuple(sorted({x for p in parts for x in p.discontinuities})),
            counterexample=worst.counterexample,
        )

    lo, hi = map(float, demand_range)
    if not (0 <= lo < hi):
        raise ValueError("demand_range must satisfy 0 <= lo < hi")
    span = hi - lo
    step = span / 1e4

    def c(y):
        return _price(tariff, np.asarray(y, dtype=float))

    def revenue(y):
        y = np.asarray(y, dtype=float)
        return y * c(y)

    grid = np.linspace(lo, hi, sample_count)
    prices = c(grid)
    scale = max(float(np.max(np.abs(prices))), 1.0) * STRICT_MARGIN
    monotone = bool(np.all(np.diff(prices) >= -scale))

    deriv = _derivative(c, grid, step, lo, hi)
    d_scale = float(np.max(np.abs(deriv)))
    kinks = []
    if d_scale > STRICT_MARGIN:
        tol = max(1e-6 * d_scale, STRICT_MARGIN)
        for a, b in zip(grid[1:-2], grid[2:-1]):
            x = _locate_kink(c, a, b, lo, hi, tol, span * 1e-9)
            if x is not None and not (kinks and x - kinks[-1] < span * 1e-6):
                kinks.append(float(x))
    continuous = not kinks

    rng = np.random.default_rng(seed)
    checked = violated = 0
    counterexample = None
    if d_scale > STRICT_MARGIN:
        for _ in range(sample_count):
            n = int(rng.integers(1, max_interval + 1))
            yu = rng.uniform(lo, hi, n)
            yv = rng.uniform(lo, hi, n)
            du = _derivative(c, yu, step, lo, hi).sum()
            dv = _derivative(c, yv, step, lo, hi).sum()
            margin = STRICT_MARGIN * max(1.0, abs(du) + abs(dv))
            if du - dv > margin:
                checked += 1
                ru = _derivative(revenue, yu, step, lo, hi).sum()
                rv = _derivative(revenue, yv, step, lo, hi).sum()
                if not ru > rv:
                    violated += 1
                    if counterexample is None:
                        counterexample = (tuple(yu.tolist()), tuple(yv.tolist()))

    if not monotone or not continuous or violated:
        verdict = VIOLATED
    elif d_scale <= STRICT_MARGIN:
        verdict = DEGENERATE
    else:
        verdict = REGULAR
    return RegularityReport(monotone, continuous, checked, violated, verdict, tuple(kinks), counterexample)


def demand_range_for(scenario: Scenario) -> tuple[float, float]:
    """Largest aggregate demand the supply limits allow."""
    return 0.0, float(sum(h.supply_limit_kw for h in scenario.houses)) or 1.0
