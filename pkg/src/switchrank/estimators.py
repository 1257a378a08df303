"""scikit-learn style wrappers around the tests and the weight model.

The tests are "fitted" to a two-arm dataset and expose their statistics as
trailing-underscore attributes, so they work with ``get_params``/``clone``
and can be configured like any other estimator.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import model, tests
from .survdata import SurvivalDataset


def check_survival_data(X, y=None) -> SurvivalDataset:
    """Coerce supported inputs into a :class:`SurvivalDataset`.

    Accepted forms:

    * a ``SurvivalDataset`` (returned unchanged);
    * a DataFrame or structured array with ``time``, ``event`` and ``arm``;
    * an ``(n, 3)`` array of ``time, event, arm`` columns;
    * ``X`` holding the arm indicator and ``y`` an ``(n, 2)`` array of
      ``time, event``.
    """
    if isinstance(X, SurvivalDataset):
        return X
    if hasattr(X, "columns") or (isinstance(X, np.ndarray) and X.dtype.names):
        return SurvivalDataset(np.asarray(X["time"], float), np.asarray(X["event"]), np.asarray(X["arm"]))
    if y is not None:
        arm = check_array(X, ensure_2d=False).ravel()
        y = check_array(y)
        if y.shape != (arm.size, 2):
            raise ValueError(f"y must have shape ({arm.size}, 2) with time and event columns")
        return SurvivalDataset(y[:, 0], y[:, 1].astype(bool), arm.astype(int))
    X = check_array(X)
    if X.shape[1] != 3:
        raise ValueError(f"expected 3 columns (time, event, arm), got {X.shape[1]}")
    if not np.isin(X[:, 1], (0, 1)).all():
        raise ValueError("event column must be 0/1")
    return SurvivalDataset(X[:, 0], X[:, 1].astype(bool), X[:, 2].astype(int))


class _TwoSampleTest(BaseEstimator):
    def _compute(self, data: SurvivalDataset):
        raise NotImplementedError

    def fit(self, X, y=None):
        data = check_survival_data(X, y)
        self.result_ = self._compute(data)
        self.z_ = self.result_.z
        self.p_value_ = self.result_.p_one_sided
        return self

    def score(self, X, y=None) -> float:
        """z statistic on new data (larger favours the experimental arm)."""
        return self._compute(check_survival_data(X, y)).z


class LogRankTest(_TwoSampleTest):
    def _compute(self, data):
        return tests.logrank(data)


class WeightedLogRankTest(_TwoSampleTest):
    def __init__(self, weights=None):
        self.weights = weights

    def _compute(self, data):
        if self.weights is None:
            raise ValueError("weights must be set")
        return tests.weighted_logrank(data, self.weights)


class ModifiedWeightedLogRankTest(_TwoSampleTest):
    """mWLR test; the parameters are the design-time assumptions."""

    def __init__(
        self,
        median_pfs_control=2.0,
        median_os_control=10.0,
        median_os_experimental=15.0,
        switch_prob=1.0,
    ):
        self.median_pfs_control = median_pfs_control
        self.median_os_control = median_os_control
        self.median_os_experimental = median_os_experimental
        self.switch_prob = switch_prob

    def assumed_params(self) -> model.SwitchModelParams:
        return model.SwitchModelParams(
            self.median_pfs_control, self.median_os_control, self.median_os_experimental, self.switch_prob
        )

    def _compute(self, data):
        return tests.mwlr(data, self.assumed_params())


class FlemingHarringtonTest(_TwoSampleTest):
    def __init__(self, rho=0.0, gamma=0.0):
        self.rho = rho
        self.gamma = gamma

    def _compute(self, data):
        return tests.fleming_harrington(data, tests.FHParams(self.rho, self.gamma))


class MaxComboTest(_TwoSampleTest):
    def __init__(self, abs_tol=1e-4):
        self.abs_tol = abs_tol

    def _compute(self, data):
        return tests.max_combo(data, abs_tol=self.abs_tol)


class RMSTTest(_TwoSampleTest):
    def __init__(self, tau=None):
        self.tau = tau

    def _compute(self, data):
        return tests.rmst_test(data, tau=self.tau)


class SwitchingHazardRatio(TransformerMixin, BaseEstimator):
    """Maps times (months) to ``[eta(t), w(t)]`` under the switching model.

    ``fit`` only validates the parameters; nothing is learned from data,
    which keeps the weights pre-specified.
    """

    def __init__(
        self,
        median_pfs_control=2.0,
        median_os_control=10.0,
        median_os_experimental=15.0,
        switch_prob=1.0,
    ):
        self.median_pfs_control = median_pfs_control
        self.median_os_control = median_os_control
        self.median_os_experimental = median_os_experimental
        self.switch_prob = switch_prob

    def fit(self, X=None, y=None):
        self.params_ = model.SwitchModelParams(
            self.median_pfs_control, self.median_os_control, self.median_os_experimental, self.switch_prob
        )
        self.rates_ = model.rates_from_medians(self.params_)
        return self

    def transform(self, X):
        check_is_fitted(self, "rates_")
        t = check_array(X, ensure_2d=False).ravel()
        eta = model.hazard_ratio(self.rates_, self.switch_prob, t)
        return np.column_stack([eta, -np.log(eta)])
