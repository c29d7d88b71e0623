import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from conftest import two_by_two
from gridsched import BestResponseScheduler, GenerationSpec, check_scenario, save
from gridsched.model import ScenarioValidationError
from gridsched.scenario import scenario_to_dict


def test_params_round_trip():
    est = BestResponseScheduler(mode="MA", max_passes=7)
    params = est.get_params()
    assert params["mode"] == "MA" and params["max_passes"] == 7
    other = clone(est)
    assert other.get_params() == params
    est.set_params(seed=3)
    assert est.seed == 3


def test_fit_predict_transform(sc22):
    est = BestResponseScheduler().fit(sc22)
    assert est.converged_ and est.n_passes_ == 2
    starts = est.predict()
    assert sorted(starts.values()) == [1, 2]
    np.testing.assert_array_equal(est.transform(), [1.0, 1.0])
    assert est.score() == -2.0
    np.testing.assert_array_equal(BestResponseScheduler().fit_transform(sc22), [1.0, 1.0])


def test_not_fitted():
    with pytest.raises(NotFittedError):
        BestResponseScheduler().predict()


def test_accepts_many_inputs(tmp_path, sc22):
    save(sc22, tmp_path / "s.json")
    assert check_scenario(str(tmp_path / "s.json")) == sc22
    assert check_scenario(scenario_to_dict(sc22)) == sc22
    assert len(check_scenario(GenerationSpec(3, "short")).houses) == 3
    with pytest.raises(TypeError):
        check_scenario(42)


def test_predict_other_scenario(sc22):
    est = BestResponseScheduler().fit(GenerationSpec(3, "long"))
    assert len(est.predict(sc22)) == 2


def test_invalid_scenario_rejected():
    sc = two_by_two(limit=0.5)
    with pytest.raises(ScenarioValidationError):
        BestResponseScheduler().fit(sc)
