"""Trial simulator for the progression-switching model.

Randomness is counter based: every subject draws its uniforms from a
SplitMix64 sequence keyed by (seed, replication) and offset by the subject
index, so generating subjects one at a time, all at once, or split across
processes gives bit-identical data.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .model import SwitchModelParams, rates_from_medians
from .survdata import CONTROL, EXPERIMENTAL, SurvivalDataset

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MASK64 = (1 << 64) - 1
# uniforms per subject: enrolment, progression, death, switch, post-switch death
DRAWS_PER_SUBJECT = 5
_STRIDE = 8


def _splitmix(x: np.ndarray) -> np.ndarray:
    z = x + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _mix_int(*parts: int) -> int:
    key = 0
    for part in parts:
        key = int(_splitmix(np.array([(key ^ (part & _MASK64)) & _MASK64], dtype=np.uint64))[0])
    return key


def stream_key(seed: int, replication: int = 0) -> int:
    """64-bit key of the stream used for one simulated trial."""
    return _mix_int(seed, replication, 0x5EED)


def subject_uniforms(key: int, subjects, n_draws: int = DRAWS_PER_SUBJECT) -> np.ndarray:
    """Uniforms in (0, 1) for the given subject indices, shape (len(subjects), n_draws)."""
    subjects = np.asarray(subjects, dtype=np.uint64).reshape(-1, 1)
    counter = subjects * np.uint64(_STRIDE) + np.arange(n_draws, dtype=np.uint64)
    with np.errstate(over="ignore"):
        bits = _splitmix(np.uint64(key) + counter * _GOLDEN)
    return ((bits >> np.uint64(11)).astype(float) + 0.5) * 2.0**-53


@dataclass(frozen=True)
class TrialScenario:
    true_params: SwitchModelParams
    n_control: int = 139
    n_experimental: int = 277
    accrual_months: float = 12.0
    target_deaths: int = 221
    seed: int = 0

    def __post_init__(self):
        if self.n_control < 1 or self.n_experimental < 1:
            raise ValueError("each arm needs at least one subject")
        if self.accrual_months < 0:
            raise ValueError("accrual_months must be non-negative")
        if not 1 <= self.target_deaths <= self.n_control + self.n_experimental:
            raise ValueError(
                f"target_deaths={self.target_deaths} is impossible with "
                f"{self.n_control + self.n_experimental} subjects"
            )

    @property
    def n_total(self) -> int:
        return self.n_control + self.n_experimental

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrialScenario":
        d = dict(d)
        params = d.pop("true_params")
        if not isinstance(params, SwitchModelParams):
            params = SwitchModelParams(**params)
        return cls(true_params=params, **d)


@dataclass(frozen=True)
class SimulatedSubject:
    arm: int
    enroll_calendar: float
    death_time: float
    progression_time: Optional[float] = None
    switched: bool = False


@dataclass(frozen=True)
class SubjectDraws:
    """Latent times for a block of subjects, in columns."""

    arm: np.ndarray
    enroll: np.ndarray
    death: np.ndarray
    progression: np.ndarray = field(repr=False)  # NaN when never progressed
    switched: np.ndarray = field(repr=False)


def draw_subjects(params: SwitchModelParams, arm, u: np.ndarray, accrual_months: float = 0.0) -> SubjectDraws:
    """Turn per-subject uniforms into latent event times.

    Control subjects race progression against death.  At progression they
    switch with probability p and then die at the experimental rate;
    non-switchers keep their original death draw, which by memorylessness
    is a valid residual time.
    """
    rates = rates_from_medians(params)
    arm = np.broadcast_to(np.asarray(arm, dtype=np.int8), (u.shape[0],))
    enroll = accrual_months * u[:, 0]
    t_prog = -np.log(u[:, 1]) / rates.lambda_p0
    e_death = -np.log(u[:, 2])
    t_death_control = e_death / rates.lambda_os0
    t_after_switch = -np.log(u[:, 4]) / rates.lambda_os1

    control = arm == CONTROL
    progressed = control & (t_prog < t_death_control)
    switched = progressed & (u[:, 3] < params.switch_prob)
    death = np.where(control, t_death_control, e_death / rates.lambda_os1)
    death = np.where(switched, t_prog + t_after_switch, death)
    progression = np.where(progressed, t_prog, np.nan)
    return SubjectDraws(arm=arm.copy(), enroll=enroll, death=death, progression=progression, switched=switched)


def scenario_arms(scenario: TrialScenario) -> np.ndarray:
    return np.repeat(
        np.array([CONTROL, EXPERIMENTAL], dtype=np.int8), [scenario.n_control, scenario.n_experimental]
    )


def simulate_subject(scenario: TrialScenario, index: int, replication: int = 0) -> SimulatedSubject:
    """Latent history of subject ``index`` of the given replication.

    Subjects 0 .. n_control-1 are control, the rest experimental.
    """
    if not 0 <= index < scenario.n_total:
        raise IndexError(f"subject index {index} out of range")
    arm = CONTROL if index < scenario.n_control else EXPERIMENTAL
    u = subject_uniforms(stream_key(scenario.seed, replication), [index])
    d = draw_subjects(scenario.true_params, arm, u, scenario.accrual_months)
    prog = d.progression[0]
    return SimulatedSubject(
        arm=arm,
        enroll_calendar=float(d.enroll[0]),
        death_time=float(d.death[0]),
        progression_time=None if np.isnan(prog) else float(prog),
        switched=bool(d.switched[0]),
    )


def simulate_arm(params: SwitchModelParams, arm: int, n: int, seed: int) -> SubjectDraws:
    """Uncensored latent times for ``n`` subjects of one arm."""
    u = subject_uniforms(stream_key(seed, 0), np.arange(n))
    return draw_subjects(params, arm, u)


def administrative_censoring(enroll, death, target_deaths: int):
    """Cut off at the calendar time of the ``target_deaths``-th death.

    Returns ``(time, event, cutoff)``.  Deaths at exactly the cutoff count as
    events; subjects enrolled after the cutoff are censored at time 0.
    """
    calendar = enroll + death
    cutoff = float(np.partition(calendar, target_deaths - 1)[target_deaths - 1])
    event = calendar <= cutoff
    time = np.where(event, death, np.maximum(0.0, cutoff - enroll))
    return time, event, cutoff


@dataclass(frozen=True)
class SimulatedTrial:
    data: SurvivalDataset
    cutoff: float
    draws: SubjectDraws = field(repr=False)


def simulate_trial_full(scenario: TrialScenario, replication: int = 0) -> SimulatedTrial:
    arms = scenario_arms(scenario)
    u = subject_uniforms(stream_key(scenario.seed, replication), np.arange(scenario.n_total))
    draws = draw_subjects(scenario.true_params, arms, u, scenario.accrual_months)
    time, event, cutoff = administrative_censoring(draws.enroll, draws.death, scenario.target_deaths)
    switch_time = np.where(draws.switched & (draws.progression <= time), draws.progression, np.nan)
    data = SurvivalDataset(time, event, arms, switch_time)
    return SimulatedTrial(data=data, cutoff=cutoff, draws=draws)


def simulate_trial(scenario: TrialScenario, replication: int = 0) -> SurvivalDataset:
    """One simulated trial analysed at the target death count."""
    return simulate_trial_full(scenario, replication).data
