import math

import numpy as np
import pytest
from sklearn.base import clone

from switchrank.estimators import (
    FlemingHarringtonTest,
    LogRankTest,
    MaxComboTest,
    ModifiedWeightedLogRankTest,
    RMSTTest,
    SwitchingHazardRatio,
    WeightedLogRankTest,
    check_survival_data,
)
from switchrank.model import SwitchModelParams, hazard_ratio, rates_from_medians
from switchrank.tests import logrank


def test_input_forms_agree(six_subjects):
    cols = np.column_stack([six_subjects.time, six_subjects.event, six_subjects.arm])
    rec = np.zeros(6, dtype=[("time", float), ("event", bool), ("arm", int)])
    rec["time"], rec["event"], rec["arm"] = six_subjects.time, six_subjects.event, six_subjects.arm
    forms = [
        check_survival_data(six_subjects),
        check_survival_data(cols),
        check_survival_data(rec),
        check_survival_data(six_subjects.arm, np.column_stack([six_subjects.time, six_subjects.event])),
    ]
    for data in forms:
        assert data == six_subjects


def test_input_errors():
    with pytest.raises(ValueError):
        check_survival_data(np.ones((3, 2)))
    with pytest.raises(ValueError):
        check_survival_data(np.array([[1.0, 2.0, 0.0]]))
    with pytest.raises(ValueError):
        check_survival_data(np.array([0, 1]), np.ones((3, 2)))


def test_fit_exposes_statistics(six_subjects):
    est = LogRankTest().fit(six_subjects)
    assert est.z_ == pytest.approx(23 / math.sqrt(1091))
    assert est.p_value_ == est.result_.p_one_sided
    assert est.score(six_subjects) == est.z_


@pytest.mark.parametrize("est", [
    LogRankTest(),
    WeightedLogRankTest(weights=2.0),
    ModifiedWeightedLogRankTest(switch_prob=0.0),
    FlemingHarringtonTest(rho=0, gamma=0),
    MaxComboTest(),
    RMSTTest(),
])
def test_clone_and_fit(est, six_subjects):
    copy = clone(est)
    assert copy.get_params() == est.get_params()
    copy.fit(six_subjects)
    assert np.isfinite(copy.z_)


def test_wrappers_match_functions(six_subjects):
    lr = logrank(six_subjects).z
    assert ModifiedWeightedLogRankTest(switch_prob=0).fit(six_subjects).z_ == pytest.approx(lr, abs=1e-12)
    assert FlemingHarringtonTest(0, 0).fit(six_subjects).z_ == pytest.approx(lr, abs=1e-12)
    assert WeightedLogRankTest(weights=lambda t: np.ones_like(t)).fit(six_subjects).z_ == pytest.approx(lr)
    with pytest.raises(ValueError):
        WeightedLogRankTest().fit(six_subjects)


def test_set_params_changes_design(six_subjects):
    est = ModifiedWeightedLogRankTest()
    est.set_params(switch_prob=0.5, median_pfs_control=3.0)
    assert est.assumed_params() == SwitchModelParams(3.0, 10.0, 15.0, 0.5)


def test_hazard_ratio_transformer():
    t = np.linspace(0, 30, 7)
    out = SwitchingHazardRatio(switch_prob=0.6).fit().transform(t)
    assert out.shape == (7, 2)
    eta = hazard_ratio(rates_from_medians(SwitchModelParams(2, 10, 15, 0.6)), 0.6, t)
    np.testing.assert_allclose(out[:, 0], eta, rtol=1e-15)
    np.testing.assert_allclose(out[:, 1], -np.log(eta), rtol=1e-15)
    with pytest.raises(ValueError):
        SwitchingHazardRatio(median_os_control=1.0).fit()
