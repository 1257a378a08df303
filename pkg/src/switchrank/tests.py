"""Two-sample tests for right-censored data.

Orientation is one-sided throughout: positive z means more control deaths
than expected under the null, i.e. evidence that the experimental arm is
better, and ``p_one_sided = 1 - Phi(z)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.special import ndtr, ndtri

from . import model
from .exceptions import DegenerateVarianceError
from .mvn import max_normal_tail
from .survdata import (
    CONTROL,
    EXPERIMENTAL,
    RiskTable,
    SurvivalDataset,
    build_risk_table,
    check_two_arm,
    kaplan_meier,
    minimax_time,
    rmst,
    rmst_variance,
)


@dataclass(frozen=True)
class TestResult:
    __test__ = False  # keep pytest from collecting this

    test: str
    statistic_u: float
    variance_v: float
    z: float
    p_one_sided: float
    weights: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)
    tau: Optional[float] = None

    def as_dict(self) -> dict:
        out = {"test": self.test, "U": self.statistic_u, "V": self.variance_v, "z": self.z, "p": self.p_one_sided}
        if self.tau is not None:
            out["tau"] = self.tau
        return out


@dataclass(frozen=True)
class FHParams:
    rho: float
    gamma: float

    def __post_init__(self):
        for name in ("rho", "gamma"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and non-negative")

    @property
    def label(self) -> str:
        return f"FH({self.rho:g},{self.gamma:g})"


MAX_COMBO_COMPONENTS = (FHParams(0, 0), FHParams(1, 0), FHParams(0, 1), FHParams(1, 1))


@dataclass(frozen=True)
class MaxComboResult:
    components: tuple
    correlation_matrix: np.ndarray
    z_max: float
    p_one_sided: float
    p_error: float = 0.0

    @property
    def z(self) -> float:
        """Normal quantile equivalent of the combined p-value."""
        return float(-_ndtri_safe(self.p_one_sided))

    def as_dict(self) -> dict:
        return {"test": "MaxCombo", "z_max": self.z_max, "z": self.z, "p": self.p_one_sided}


def _ndtri_safe(p):
    return ndtri(np.clip(p, 1e-300, 1.0))


def _finish(name, u, v, weights, tau=None) -> TestResult:
    if not (v > 0 and math.isfinite(v)):
        raise DegenerateVarianceError(f"{name}: variance is {v!r}; z is undefined")
    z = u / math.sqrt(v)
    return TestResult(name, float(u), float(v), float(z), float(ndtr(-z)), weights, tau)


WeightSpec = Union[Callable[[np.ndarray], np.ndarray], np.ndarray]


def _weighted_from_table(table: RiskTable, w: np.ndarray, name: str) -> TestResult:
    if w.shape != table.times.shape:
        raise ValueError(f"need one weight per event time ({table.times.size}), got {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite at every event time")
    u = float(np.sum(w * table.observed_minus_expected()))
    v = float(np.sum(w * w * table.hypergeometric_variance()))
    w = w.copy()
    w.setflags(write=False)
    return _finish(name, u, v, w)


def weighted_logrank(data: SurvivalDataset, w: WeightSpec, name: str = "WLR") -> TestResult:
    """Weighted log-rank test.

    ``w`` is either a function of time evaluated at the distinct death times,
    or an array with one weight per death time.  Negative weights are
    allowed here; callers wanting type-I guarantees should keep them
    non-negative and non-increasing.
    """
    table = build_risk_table(check_two_arm(data))
    weights = np.asarray(w(table.times) if callable(w) else w, dtype=float)
    weights = np.broadcast_to(weights, table.times.shape).astype(float)
    return _weighted_from_table(table, weights, name)


def logrank(data: SurvivalDataset) -> TestResult:
    table = build_risk_table(check_two_arm(data))
    return _weighted_from_table(table, np.ones(table.times.size), "LR")


def mwlr(data: SurvivalDataset, assumed: model.SwitchModelParams) -> TestResult:
    """Modified weighted log-rank test with weights fixed by design parameters."""
    return weighted_logrank(data, lambda t: model.weight_function(assumed, t), name="mWLR")


def fh_weights(data: SurvivalDataset, table: RiskTable, fh: FHParams) -> np.ndarray:
    s = kaplan_meier(data).left_limit(table.times)
    w = np.ones_like(s)
    if fh.rho:
        w = w * s**fh.rho
    if fh.gamma:
        w = w * (1.0 - s) ** fh.gamma
    return w


def fleming_harrington(data: SurvivalDataset, fh: FHParams) -> TestResult:
    """Weighted log-rank with S(t-)^rho (1 - S(t-))^gamma from the pooled KM."""
    table = build_risk_table(check_two_arm(data))
    return _weighted_from_table(table, fh_weights(data, table, fh), fh.label)


def max_combo(
    data: SurvivalDataset,
    components=MAX_COMBO_COMPONENTS,
    abs_tol: float = 1e-4,
) -> MaxComboResult:
    """Maximum of correlated Fleming-Harrington z statistics.

    The combined p-value is P(max_k Z_k > z_max) for Z jointly normal with
    the estimated correlation, clipped into its Bonferroni bounds.
    """
    table = build_risk_table(check_two_arm(data))
    v = table.hypergeometric_variance()
    weights = np.array([fh_weights(data, table, fh) for fh in components])
    results = tuple(_weighted_from_table(table, w, fh.label) for w, fh in zip(weights, components))
    cov = (weights * v) @ weights.T
    sd = np.sqrt(np.diag(cov))
    corr = cov / np.outer(sd, sd)
    corr = 0.5 * (corr + corr.T)
    np.fill_diagonal(corr, 1.0)
    if np.linalg.eigvalsh(corr).min() < -1e-8:
        raise DegenerateVarianceError("component correlation matrix is not positive semidefinite")
    z_max = max(r.z for r in results)
    p, err = max_normal_tail(corr, z_max, abs_tol=abs_tol)
    p_uni = float(ndtr(-z_max))
    p = min(max(p, p_uni), min(1.0, len(components) * p_uni))
    corr.setflags(write=False)
    return MaxComboResult(results, corr, float(z_max), float(p), float(err))


def rmst_test(data: SurvivalDataset, tau: Optional[float] = None) -> TestResult:
    """Difference in restricted mean survival, experimental minus control.

    ``tau`` defaults to the minimax observed time.
    """
    check_two_arm(data)
    if tau is None:
        tau = minimax_time(data)
    u = 0.0
    v = 0.0
    for arm, sign in ((EXPERIMENTAL, 1.0), (CONTROL, -1.0)):
        curve = kaplan_meier(data, arm)
        u += sign * rmst(curve, tau)
        v += rmst_variance(curve, tau)
    return _finish("RMST", u, v, np.empty(0), tau=float(tau))
