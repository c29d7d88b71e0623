"""scikit-learn style front end for the best-response dynamics."""
from __future__ import annotations

import os
from collections.abc import Mapping

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from gridsched.engine import DEFAULT_EPSILON, GREEDY, ROUND_ROBIN, SA, DynamicsConfig, run_dynamics
from gridsched.metrics import summarize
from gridsched.model import Scenario, ScenarioValidationError, validate_scenario
from gridsched.scenario import GenerationSpec, generate, load, scenario_from_dict


def check_scenario(X) -> Scenario:
    """Coerce ``X`` into a validated :class:`Scenario`.

    Accepts a Scenario, a scenario document (dict), a path to a scenario
    file, or a :class:`GenerationSpec`.
    """
    if isinstance(X, Scenario):
        violations = validate_scenario(X)
        if violations:
            raise ScenarioValidationError(violations)
        return X
    if isinstance(X, GenerationSpec):
        return generate(X)
    if isinstance(X, Mapping):
        return scenario_from_dict(dict(X))
    if isinstance(X, (str, os.PathLike)):
        return load(X)
    raise TypeError(f"cannot interpret {type(X).__name__} as a scenario")


class BestResponseScheduler(BaseEstimator):
    """Schedules shiftable appliances by running best-response dynamics to equilibrium.

    ``fit`` runs the dynamics on a scenario.  ``predict`` returns the
    equilibrium start slot of every shiftable appliance, ``transform`` the
    aggregate demand per slot, and ``score`` the negated social cost.

    Parameters mirror :class:`gridsched.engine.DynamicsConfig`.
    """

    def __init__(self, mode=SA, order_policy=ROUND_ROBIN, seed=0, max_passes=100,
                 improvement_epsilon=DEFAULT_EPSILON, init=GREEDY):
        self.mode = mode
        self.order_policy = order_policy
        self.seed = seed
        self.max_passes = max_passes
        self.improvement_epsilon = improvement_epsilon
        self.init = init

    def _config(self) -> DynamicsConfig:
        return DynamicsConfig(**self.get_params())

    def fit(self, X, y=None):
        scenario = check_scenario(X)
        result = run_dynamics(scenario, self._config())
        self.scenario_ = scenario
        self.result_ = result
        self.profile_ = result.final_profile
        self.converged_ = result.converged
        self.n_passes_ = result.passes_used
        self.metrics_ = summarize(result.final_profile, scenario.tariff)
        return self

    def _fitted_result(self, X):
        check_is_fitted(self, "result_")
        if X is None:
            return self.result_
        scenario = check_scenario(X)
        if scenario == self.scenario_:
            return self.result_
        return run_dynamics(scenario, self._config())

    def predict(self, X=None) -> dict:
        """Equilibrium start slot per (house id, appliance id)."""
        return dict(self._fitted_result(X).final_profile.start_slot)

    def transform(self, X=None) -> np.ndarray:
        result = self._fitted_result(X)
        return np.asarray(summarize(result.final_profile, result.final_profile.scenario.tariff).aggregate_profile)

    def fit_transform(self, X, y=None):
        return self.fit(X).transform()

    def score(self, X=None, y=None) -> float:
        result = self._fitted_result(X)
        return -summarize(result.final_profile, result.final_profile.scenario.tariff).social_cost
