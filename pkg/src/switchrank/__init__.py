"""Weighted log-rank testing for trials with post-progression treatment switching."""

__version__ = "0.1.0"

from .exceptions import DataError, DegenerateVarianceError
from .model import (
    RateSet,
    StateProbabilities,
    SwitchModelParams,
    control_hazard,
    control_survival,
    hazard_ratio,
    rates_from_medians,
    state_probabilities,
    switch_fraction_q,
    weight_function,
)
from .survdata import (
    CONTROL,
    EXPERIMENTAL,
    KMCurve,
    RiskTable,
    SubjectRecord,
    SurvivalDataset,
    build_risk_table,
    kaplan_meier,
    minimax_time,
    read_dataset,
    rmst,
    write_dataset,
)
from .tests import (
    FHParams,
    MaxComboResult,
    TestResult,
    fleming_harrington,
    logrank,
    max_combo,
    mwlr,
    rmst_test,
    weighted_logrank,
)
from .sim import SimulatedSubject, TrialScenario, simulate_subject, simulate_trial
from .estimators import (
    FlemingHarringtonTest,
    LogRankTest,
    MaxComboTest,
    ModifiedWeightedLogRankTest,
    RMSTTest,
    SwitchingHazardRatio,
    WeightedLogRankTest,
    check_survival_data,
)
