"""Exponential progression-switching model for the control arm.

Control patients move between three live states: non-progressed (np),
progressed and switched to the experimental drug (ps), and progressed but not
switched (pns).  Everything here is closed form and vectorised over ``t``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LOG2 = math.log(2.0)

# exponent cut-off; exp(-700) is already ~1e-304
_MAX_EXPONENT = 700.0
# relative gap between lambda_pfs0 and lambda_os1 below which the limit is used
_SINGULAR_RTOL = 1e-9


@dataclass(frozen=True)
class SwitchModelParams:
    """Clinical medians (months) and the switching probability at progression."""

    median_pfs_control: float
    median_os_control: float
    median_os_experimental: float
    switch_prob: float

    def __post_init__(self):
        for name in ("median_pfs_control", "median_os_control", "median_os_experimental"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        if not 0.0 <= self.switch_prob <= 1.0:
            raise ValueError(f"switch_prob must lie in [0, 1], got {self.switch_prob!r}")
        if self.median_os_control <= self.median_pfs_control:
            raise ValueError(
                "median_os_control must exceed median_pfs_control "
                f"({self.median_os_control!r} <= {self.median_pfs_control!r}); "
                "the progression rate would be non-positive"
            )

    def with_switch_prob(self, p: float) -> "SwitchModelParams":
        return SwitchModelParams(
            self.median_pfs_control, self.median_os_control, self.median_os_experimental, p
        )

    def scaled(self, k: float) -> "SwitchModelParams":
        """Same model on a time axis stretched by ``k``."""
        return SwitchModelParams(
            k * self.median_pfs_control,
            k * self.median_os_control,
            k * self.median_os_experimental,
            self.switch_prob,
        )


@dataclass(frozen=True)
class RateSet:
    lambda_p0: float
    lambda_os0: float
    lambda_os1: float
    lambda_pfs0: float
    median_progression: float

    @property
    def prob_progress_first(self) -> float:
        """Probability that a control patient progresses before dying."""
        return self.lambda_p0 / (self.lambda_p0 + self.lambda_os0)


@dataclass(frozen=True)
class StateProbabilities:
    s_np: np.ndarray
    s_ps: np.ndarray
    s_pns: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.s_np + self.s_ps + self.s_pns


def rates_from_medians(params: SwitchModelParams) -> RateSet:
    m_pfs = params.median_pfs_control
    m_os0 = params.median_os_control
    lambda_os0 = LOG2 / m_os0
    lambda_pfs0 = LOG2 / m_pfs
    lambda_p0 = lambda_pfs0 - lambda_os0
    if not lambda_p0 > 0:
        raise ValueError("non-positive progression rate; median OS must exceed median PFS")
    return RateSet(
        lambda_p0=lambda_p0,
        lambda_os0=lambda_os0,
        lambda_os1=LOG2 / params.median_os_experimental,
        # lambda_p0 + lambda_os0 rounds back to lambda_pfs0 only approximately
        lambda_pfs0=lambda_p0 + lambda_os0,
        median_progression=m_pfs * m_os0 / (m_os0 - m_pfs),
    )


def switch_fraction_q(params: SwitchModelParams) -> float:
    """Probability that a control patient progresses and switches before dying."""
    return (1.0 - params.median_pfs_control / params.median_os_control) * params.switch_prob


def _exp_neg(x):
    x = np.asarray(x, dtype=float)
    return np.where(x > _MAX_EXPONENT, 0.0, np.exp(-np.minimum(x, _MAX_EXPONENT)))


def _singular(rates: RateSet) -> bool:
    return abs(rates.lambda_pfs0 - rates.lambda_os1) < _SINGULAR_RTOL * rates.lambda_os1


def _scaled_states(rates: RateSet, p: float, t, shift: float):
    """State probabilities multiplied by ``exp(shift * t)``.

    ``shift`` must not exceed the smallest rate, so every exponent stays
    non-positive and large ``t`` underflows to zero instead of overflowing.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    a = rates.lambda_os0
    b = rates.lambda_os1
    c = rates.lambda_pfs0
    s_np = _exp_neg((c - shift) * t)
    s_pns = (1.0 - p) * (_exp_neg((a - shift) * t) - s_np)
    # (exp(-b t) - exp(-c t)) / (c - b), factored so that it never cancels
    if _singular(rates):
        gap_term = t
    else:
        gap = abs(c - b)
        gap_term = -np.expm1(-np.minimum(gap * t, _MAX_EXPONENT)) / gap
    s_ps = p * rates.lambda_p0 * _exp_neg((min(b, c) - shift) * t) * gap_term
    s_pns = np.maximum(s_pns, 0.0)
    return s_np, s_ps, s_pns


def state_probabilities(rates: RateSet, p: float, t) -> StateProbabilities:
    s_np, s_ps, s_pns = _scaled_states(rates, p, t, 0.0)
    return StateProbabilities(s_np=s_np, s_ps=s_ps, s_pns=s_pns)


def control_survival(rates: RateSet, p: float, t):
    return state_probabilities(rates, p, t).total


def log_control_survival(rates: RateSet, p: float, t):
    shift = min(rates.lambda_os0, rates.lambda_os1, rates.lambda_pfs0)
    s_np, s_ps, s_pns = _scaled_states(rates, p, t, shift)
    return np.log(s_np + s_ps + s_pns) - shift * np.asarray(t, dtype=float)


def control_hazard(rates: RateSet, p: float, t):
    """Control-arm hazard h0(t).

    Switched patients die at ``lambda_os1`` and everyone else alive at
    ``lambda_os0``, so h0 is their survival-weighted average.
    """
    shift = min(rates.lambda_os0, rates.lambda_os1, rates.lambda_pfs0)
    s_np, s_ps, s_pns = _scaled_states(rates, p, t, shift)
    alive = s_np + s_ps + s_pns
    return rates.lambda_os0 + (rates.lambda_os1 - rates.lambda_os0) * s_ps / alive


def hazard_ratio(rates: RateSet, p: float, t):
    """Experimental over control hazard, eta(t) = lambda_os1 / h0(t)."""
    return rates.lambda_os1 / control_hazard(rates, p, t)


def weight_function(assumed: SwitchModelParams, t):
    """Pre-specified test weights w(t) = -log eta(t) under design parameters.

    Only the assumed medians and switching probability enter; the weights
    never see trial data.
    """
    rates = rates_from_medians(assumed)
    return np.log(control_hazard(rates, assumed.switch_prob, t) / rates.lambda_os1)
