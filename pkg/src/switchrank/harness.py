"""Monte Carlo power and efficiency studies over scenario grids.

Every replication simulates one trial and runs all requested tests on that
same dataset.  Replication ``r`` of scenario ``s`` draws from a stream keyed
by ``(seed, s, r)``, so results do not depend on how work is split across
processes.
"""
from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.stats import norm

from . import __version__
from .exceptions import DataError, DegenerateVarianceError
from .model import SwitchModelParams
from .sim import TrialScenario, simulate_trial
from .tests import FHParams, fleming_harrington, logrank, max_combo, mwlr, rmst_test

log = logging.getLogger(__name__)

WORKERS_ENV = "SWITCHRANK_WORKERS"
DESK_REPLICATIONS = 2000
FULL_REPLICATIONS = 10_000

_FH_PATTERN = re.compile(r"^FH\(\s*([0-9.]+)\s*,\s*([0-9.]+)\s*\)$")


@dataclass
class PowerStudyConfig:
    median_os_control: list = field(default_factory=lambda: [10.0])
    switch_prob: list = field(default_factory=lambda: [1.0])
    design_switch_prob: list = field(default_factory=lambda: [1.0])
    median_pfs_control: list = field(default_factory=lambda: [2.0])
    target_deaths: list = field(default_factory=lambda: [221])
    median_os_experimental: float = 15.0
    # mWLR design medians; None means "use the scenario's true value"
    design_median_pfs_control: Optional[float] = None
    design_median_os_control: Optional[float] = None
    design_median_os_experimental: Optional[float] = None
    n_control: int = 139
    n_experimental: int = 277
    accrual_months: float = 12.0
    replications: int = DESK_REPLICATIONS
    alpha: float = 0.025
    tests: list = field(default_factory=lambda: ["LR", "mWLR"])
    seed: int = 0
    output: Optional[str] = None

    def __post_init__(self):
        for name in ("median_os_control", "switch_prob", "design_switch_prob", "median_pfs_control", "target_deaths"):
            value = getattr(self, name)
            if not isinstance(value, (list, tuple)):
                value = [value]
            if len(value) == 0:
                raise ValueError(f"{name} must not be empty")
            setattr(self, name, list(value))
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if not 0 < self.alpha < 0.5:
            raise ValueError("alpha must lie in (0, 0.5)")
        if not self.tests:
            raise ValueError("at least one test is required")
        for name in self.tests:
            _parse_test(name)
        for key in self.scenarios():
            for pp in self.design_switch_prob:
                self.design_params(key, pp)

    def design_params(self, key: "ScenarioKey", design_p: float) -> SwitchModelParams:
        """Pre-specified mWLR parameters for one scenario and design p'."""
        def pick(override, true):
            return true if override is None else float(override)

        return SwitchModelParams(
            pick(self.design_median_pfs_control, key.median_pfs_control),
            pick(self.design_median_os_control, key.median_os_control),
            pick(self.design_median_os_experimental, key.median_os_experimental),
            float(design_p),
        )

    @classmethod
    def from_mapping(cls, mapping: dict) -> "PowerStudyConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(mapping) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**mapping)

    def test_specs(self) -> list["TestSpec"]:
        specs = []
        for name in self.tests:
            kind, fh = _parse_test(name)
            if kind == "mWLR":
                specs.extend(TestSpec(f"mWLR(p'={pp:g})", "mWLR", design_p=float(pp)) for pp in self.design_switch_prob)
            else:
                specs.append(TestSpec(name if kind != "FH" else fh.label, kind, fh=fh))
        return specs

    def scenarios(self) -> list["ScenarioKey"]:
        grid = itertools.product(self.median_pfs_control, self.median_os_control, self.switch_prob, self.target_deaths)
        return [ScenarioKey(float(a), float(b), float(self.median_os_experimental), float(c), int(d)) for a, b, c, d in grid]


def load_config(path) -> PowerStudyConfig:
    """Read a YAML (or JSON) mapping of config keys."""
    import yaml

    with open(path) as fh:
        mapping = yaml.safe_load(fh) or {}
    if not isinstance(mapping, dict):
        raise ValueError(f"{path}: expected a mapping of config keys")
    return PowerStudyConfig.from_mapping(mapping)


def _parse_test(name: str):
    if name in ("LR", "mWLR", "MaxCombo", "RMST"):
        return name, None
    if name == "FH":
        return "FH", FHParams(1, 0)
    m = _FH_PATTERN.match(name)
    if m:
        return "FH", FHParams(float(m.group(1)), float(m.group(2)))
    raise ValueError(f"unknown test {name!r}; expected LR, mWLR, FH, FH(rho,gamma), MaxCombo or RMST")


@dataclass(frozen=True)
class TestSpec:
    __test__ = False

    label: str
    kind: str
    design_p: Optional[float] = None
    fh: Optional[FHParams] = None


@dataclass(frozen=True)
class ScenarioKey:
    median_pfs_control: float
    median_os_control: float
    median_os_experimental: float
    switch_prob: float
    target_deaths: int

    def params(self, p: Optional[float] = None) -> SwitchModelParams:
        return SwitchModelParams(
            self.median_pfs_control,
            self.median_os_control,
            self.median_os_experimental,
            self.switch_prob if p is None else p,
        )

    @property
    def unaffected_hr(self) -> float:
        return self.median_os_control / self.median_os_experimental


def _run_test(spec: TestSpec, data, design: Optional[SwitchModelParams]):
    """(z, p) of one test; (nan, 1.0) when the statistic is degenerate."""
    try:
        if spec.kind == "LR":
            r = logrank(data)
        elif spec.kind == "mWLR":
            r = mwlr(data, design)
        elif spec.kind == "FH":
            r = fleming_harrington(data, spec.fh)
        elif spec.kind == "RMST":
            r = rmst_test(data)
        else:
            r = max_combo(data)
        return r.z, r.p_one_sided
    except (DegenerateVarianceError, DataError):
        return math.nan, 1.0


def _scenario_seed(seed: int, index: int) -> int:
    return (int(seed) * 1_000_003 + index) & ((1 << 63) - 1)


def _replicate_chunk(job):
    """Worker entry point: replications [start, stop) of one scenario."""
    seed, index, key, trial_kw, specs, designs, start, stop = job
    scenario = TrialScenario(key.params(), target_deaths=key.target_deaths, seed=_scenario_seed(seed, index), **trial_kw)
    n = stop - start
    z = np.full((n, len(specs)), np.nan)
    p = np.ones((n, len(specs)))
    digests = []
    for i, rep in enumerate(range(start, stop)):
        data = simulate_trial(scenario, rep)
        digests.append(data.digest())
        for j, (spec, design) in enumerate(zip(specs, designs)):
            z[i, j], p[i, j] = _run_test(spec, data, design)
    return index, start, z, p, digests


@dataclass
class ScenarioOutcome:
    key: ScenarioKey
    z: np.ndarray  # replications x tests
    p: np.ndarray
    digests: list


@dataclass
class PowerStudyResult:
    config: PowerStudyConfig
    tests: list
    outcomes: list

    @property
    def critical_value(self) -> float:
        return float(norm.ppf(1.0 - self.config.alpha))

    def _col(self, label: str) -> int:
        return [t.label for t in self.tests].index(label)

    def outcome(self, **match) -> ScenarioOutcome:
        hits = [o for o in self.outcomes if all(math.isclose(getattr(o.key, k), v) for k, v in match.items())]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} scenarios match {match}")
        return hits[0]

    def power(self, outcome: ScenarioOutcome, test: str) -> float:
        return power(outcome.z[:, self._col(test)], self.critical_value)

    def power_se(self, outcome: ScenarioOutcome, test: str) -> float:
        return power_se(self.power(outcome, test), outcome.z.shape[0])

    def efficiency(self, outcome: ScenarioOutcome, a: str, b: str) -> float:
        return efficiency(outcome.z[:, self._col(a)], outcome.z[:, self._col(b)])

    def efficiency_se(self, outcome: ScenarioOutcome, a: str, b: str) -> float:
        return efficiency_se(outcome.z[:, self._col(a)], outcome.z[:, self._col(b)])

    def dominance(self, outcome: ScenarioOutcome, a: str, b: str) -> float:
        return p_value_dominance(outcome.p[:, self._col(a)], outcome.p[:, self._col(b)])

    def degenerate(self, outcome: ScenarioOutcome, test: str) -> int:
        return int(np.isnan(outcome.z[:, self._col(test)]).sum())

    def rows(self) -> list[dict]:
        """Tidy (scenario, test, metric, value) records."""
        out = []
        labels = [t.label for t in self.tests]
        for o in self.outcomes:
            base = asdict(o.key)
            base["hr_unaffected"] = o.key.unaffected_hr
            for a in labels:
                metrics = [
                    ("power", self.power(o, a)),
                    ("power_se", self.power_se(o, a)),
                    ("mean_z", _nanmean(o.z[:, self._col(a)])),
                    ("degenerate", self.degenerate(o, a)),
                ]
                for b in labels:
                    if b == a:
                        continue
                    metrics.append((f"efficiency_vs:{b}", self.efficiency(o, a, b)))
                    metrics.append((f"efficiency_se_vs:{b}", self.efficiency_se(o, a, b)))
                    metrics.append((f"p_dominance_vs:{b}", self.dominance(o, a, b)))
                for metric, value in metrics:
                    out.append({**base, "test": a, "metric": metric, "value": value})
        return out

    def write_csv(self, path) -> None:
        rows = self.rows()
        fields = list(rows[0])
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(fields)
            for row in rows:
                writer.writerow([_fmt(row[f]) for f in fields])

    def manifest(self) -> dict:
        return {
            "software": "switchrank",
            "version": __version__,
            "config": asdict(self.config),
            "seed": self.config.seed,
            "tests": [t.label for t in self.tests],
            "scenarios": [asdict(o.key) for o in self.outcomes],
            "replications": self.config.replications,
            "dataset_digest_check": {
                # first and last replication digests per scenario, for pairing audits
                f"scenario_{i}": [o.digests[0], o.digests[-1]]
                for i, o in enumerate(self.outcomes)
            },
        }

    def all_degenerate(self) -> bool:
        """True if some scenario has a test that never produced a statistic."""
        return any(np.all(np.isnan(o.z), axis=0).any() for o in self.outcomes)


def _fmt(value) -> str:
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(value)
    return str(value)


def _nanmean(x: np.ndarray) -> float:
    x = x[~np.isnan(x)]
    return float(x.mean()) if x.size else math.nan


def power(z: np.ndarray, critical: float) -> float:
    """Fraction of replications with z above the critical value; NaN counts as no rejection."""
    z = np.asarray(z, dtype=float)
    return float(np.count_nonzero(z > critical) / z.size)


def power_se(pi_hat: float, m: int) -> float:
    return math.sqrt(pi_hat * (1.0 - pi_hat) / m)


def efficiency(z_a, z_b) -> float:
    """Relative efficiency of A over B, in percent: 100 (mean z_A / mean z_B)^2.

    NaN (undefined) when the mean z of B is not positive.  Degenerate
    replications are dropped pairwise.
    """
    z_a = np.asarray(z_a, dtype=float)
    z_b = np.asarray(z_b, dtype=float)
    if z_a.shape != z_b.shape:
        raise ValueError("efficiency needs paired z lists of equal length")
    ok = ~(np.isnan(z_a) | np.isnan(z_b))
    if not ok.any():
        return math.nan
    mb = z_b[ok].mean()
    if mb <= 0:
        return math.nan
    return float(100.0 * (z_a[ok].mean() / mb) ** 2)


def efficiency_se(z_a, z_b) -> float:
    """Delta-method standard error of :func:`efficiency` for paired replications."""
    z_a = np.asarray(z_a, dtype=float)
    z_b = np.asarray(z_b, dtype=float)
    ok = ~(np.isnan(z_a) | np.isnan(z_b))
    a, b = z_a[ok], z_b[ok]
    m = a.size
    if m < 2 or b.mean() <= 0 or a.mean() == 0:
        return math.nan
    ma, mb = a.mean(), b.mean()
    cov = np.cov(a, b)
    # log E = 2 (log ma - log mb)
    var_log = 4.0 * (cov[0, 0] / ma**2 + cov[1, 1] / mb**2 - 2.0 * cov[0, 1] / (ma * mb)) / m
    return float(efficiency(a, b) * math.sqrt(max(var_log, 0.0)))


def p_value_dominance(p_a, p_b) -> float:
    """Fraction of replications where A's p-value is strictly below B's."""
    p_a = np.asarray(p_a, dtype=float)
    p_b = np.asarray(p_b, dtype=float)
    if p_a.shape != p_b.shape:
        raise ValueError("dominance needs paired p lists of equal length")
    return float(np.count_nonzero(p_a < p_b) / p_a.size)


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_power_study(config: PowerStudyConfig, workers: Optional[int] = None, chunk: int = 250) -> PowerStudyResult:
    """Simulate every scenario ``config.replications`` times and run all tests."""
    workers = default_workers() if workers is None else max(1, int(workers))
    specs = config.test_specs()
    trial_kw = dict(
        n_control=config.n_control, n_experimental=config.n_experimental, accrual_months=config.accrual_months
    )
    keys = config.scenarios()
    designs = {
        i: [config.design_params(key, s.design_p) if s.kind == "mWLR" else None for s in specs]
        for i, key in enumerate(keys)
    }
    jobs = [
        (config.seed, i, key, trial_kw, specs, designs[i], start, min(start + chunk, config.replications))
        for i, key in enumerate(keys)
        for start in range(0, config.replications, chunk)
    ]
    log.info("power study: %d scenarios x %d replications, %d workers", len(keys), config.replications, workers)
    if workers == 1 or len(jobs) == 1:
        parts = [_replicate_chunk(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_replicate_chunk, jobs))
    # fixed reduction order: scenario, then replication
    parts.sort(key=lambda part: (part[0], part[1]))
    outcomes = []
    for i, key in enumerate(keys):
        mine = [part for part in parts if part[0] == i]
        outcomes.append(
            ScenarioOutcome(
                key=key,
                z=np.concatenate([part[2] for part in mine]),
                p=np.concatenate([part[3] for part in mine]),
                digests=[d for part in mine for d in part[4]],
            )
        )
    return PowerStudyResult(config=config, tests=specs, outcomes=outcomes)


@dataclass(frozen=True)
class SweepRow:
    switch_prob: float
    target_deaths: int
    power: float
    power_se: float


def events_sweep(config: PowerStudyConfig, workers: Optional[int] = None) -> list[SweepRow]:
    """Log-rank power against the number of deaths at analysis.

    Runs the proportional-hazards case (p = 0) alongside each switching
    probability in ``config.switch_prob``.
    """
    deaths = list(config.target_deaths)
    if deaths != sorted(deaths):
        raise ValueError("target_deaths must be ascending")
    probs = sorted(set([0.0] + [float(p) for p in config.switch_prob]))
    sweep_config = PowerStudyConfig(**{**asdict(config), "switch_prob": probs, "tests": ["LR"]})
    result = run_power_study(sweep_config, workers=workers)
    rows = []
    for o in result.outcomes:
        pw = result.power(o, "LR")
        rows.append(SweepRow(o.key.switch_prob, o.key.target_deaths, pw, power_se(pw, config.replications)))
    rows.sort(key=lambda r: (r.switch_prob, r.target_deaths))
    return rows


def write_outputs(result: PowerStudyResult, out_dir) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "power_results.csv"
    manifest_path = out_dir / "manifest.json"
    result.write_csv(csv_path)
    with open(manifest_path, "w") as fh:
        json.dump(result.manifest(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path, manifest_path
