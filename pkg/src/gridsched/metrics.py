"""Evaluation metrics: social cost, group peak demand and Jain's fairness index."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from gridsched.model import StrategyProfile, total_demand
from gridsched.pricing import Tariff, house_bills


@dataclass(frozen=True)
class MetricsSummary:
    social_cost: float
    peak_demand_kw: float
    jain_index: float
    aggregate_profile: tuple[float, ...]
    per_house_bills: dict[str, float]


def peak_demand(profile: StrategyProfile) -> float:
    y = total_demand(profile)
    return float(y.max()) if y.size else 0.0


def jain_index(values: Sequence[float]) -> float:
    """(sum x)^2 / (n * sum x^2); 1.0 for an all-zero input."""
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ValueError("jain_index needs at least one value")
    if np.any(x < 0):
        raise ValueError("jain_index needs non-negative values")
    sq = float(np.sum(x * x))
    if sq == 0.0:
        return 1.0
    j = float(np.sum(x)) ** 2 / (x.size * sq)
    return min(1.0, max(1.0 / x.size, j))


def summarize(profile: StrategyProfile, tariff: Tariff) -> MetricsSummary:
    bills = house_bills(profile, tariff)
    y = total_demand(profile)
    return MetricsSummary(
        social_cost=float(sum(bills.values())),
        peak_demand_kw=float(y.max()) if y.size else 0.0,
        jain_index=jain_index(list(bills.values())) if bills else 1.0,
        aggregate_profile=tuple(float(v) for v in y),
        per_house_bills=bills,
    )
