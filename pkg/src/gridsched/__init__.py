"""Distributed demand-side management games: models, dynamics and verification."""
from gridsched.engine import (
    DynamicsConfig,
    EquilibriumResult,
    best_response,
    initialize,
    is_nash,
    ma_best_response,
    run_dynamics,
)
from gridsched.estimator import BestResponseScheduler, check_scenario
from gridsched.metrics import MetricsSummary, jain_index, peak_demand, summarize
from gridsched.model import (
    Appliance,
    House,
    PlayerId,
    Scenario,
    StrategyProfile,
    TimeGrid,
    appliance_demand,
    feasible_starts,
    house_demand,
    total_demand,
    validate_scenario,
)
from gridsched.oracle import brute_force, enumerate_profiles, verify_engine
from gridsched.pricing import Tariff, check_regularity, player_cost, potential, price_at, social_cost
from gridsched.scenario import GenerationSpec, generate, load, save

__version__ = "0.1.0"
