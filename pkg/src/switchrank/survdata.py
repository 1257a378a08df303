"""Two-arm right-censored survival data, risk tables, Kaplan-Meier and RMST."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Optional, TextIO

import numpy as np

from .exceptions import DataError

CONTROL = 0
EXPERIMENTAL = 1

_ARM_LABELS = {"0": CONTROL, "1": EXPERIMENTAL, "control": CONTROL, "experimental": EXPERIMENTAL}


@dataclass(frozen=True)
class SubjectRecord:
    time: float
    event: bool
    arm: int
    switch_time: Optional[float] = None

    def __post_init__(self):
        if not (math.isfinite(self.time) and self.time >= 0):
            raise DataError(f"time must be finite and non-negative, got {self.time!r}")
        if self.arm not in (CONTROL, EXPERIMENTAL):
            raise DataError(f"arm must be 0 (control) or 1 (experimental), got {self.arm!r}")
        if self.switch_time is not None and not 0 <= self.switch_time <= self.time:
            raise DataError("switch_time must lie in [0, time]")


class SurvivalDataset:
    """Column-oriented, immutable collection of subject records.

    ``switch_time`` is NaN where absent.  Row order is preserved.
    """

    __slots__ = ("time", "event", "arm", "switch_time")

    def __init__(self, time, event, arm, switch_time=None):
        time = np.array(time, dtype=float)
        event = np.array(event, dtype=bool)
        arm = np.array(arm, dtype=np.int8)
        if switch_time is None:
            switch_time = np.full(time.shape, np.nan)
        else:
            switch_time = np.array(switch_time, dtype=float)
        if time.ndim != 1 or not (time.shape == event.shape == arm.shape == switch_time.shape):
            raise DataError("time, event, arm and switch_time must be 1-d and equally long")
        if time.size == 0:
            raise DataError("dataset is empty")
        if not np.all(np.isfinite(time)) or np.any(time < 0):
            raise DataError("times must be finite and non-negative")
        if np.any((arm != CONTROL) & (arm != EXPERIMENTAL)):
            raise DataError("arm must be 0 or 1")
        has_switch = ~np.isnan(switch_time)
        if np.any(switch_time[has_switch] > time[has_switch]) or np.any(switch_time[has_switch] < 0):
            raise DataError("switch_time must lie in [0, time]")
        for a in (time, event, arm, switch_time):
            a.setflags(write=False)
        object.__setattr__(self, "time", time)
        object.__setattr__(self, "event", event)
        object.__setattr__(self, "arm", arm)
        object.__setattr__(self, "switch_time", switch_time)

    def __setattr__(self, name, value):
        raise AttributeError("SurvivalDataset is immutable")

    @classmethod
    def from_records(cls, records: Iterable[SubjectRecord]) -> "SurvivalDataset":
        records = list(records)
        if not records:
            raise DataError("dataset is empty")
        return cls(
            [r.time for r in records],
            [r.event for r in records],
            [r.arm for r in records],
            [np.nan if r.switch_time is None else r.switch_time for r in records],
        )

    @property
    def records(self) -> list[SubjectRecord]:
        return [
            SubjectRecord(
                float(t), bool(e), int(a), None if math.isnan(s) else float(s)
            )
            for t, e, a, s in zip(self.time, self.event, self.arm, self.switch_time)
        ]

    def __len__(self):
        return self.time.size

    def __eq__(self, other):
        if not isinstance(other, SurvivalDataset):
            return NotImplemented
        return (
            np.array_equal(self.time, other.time)
            and np.array_equal(self.event, other.event)
            and np.array_equal(self.arm, other.arm)
            and np.array_equal(self.switch_time, other.switch_time, equal_nan=True)
        )

    __hash__ = None

    def __repr__(self):
        return (
            f"SurvivalDataset(n={len(self)}, events={int(self.event.sum())}, "
            f"control={int((self.arm == CONTROL).sum())})"
        )

    def subset(self, mask) -> "SurvivalDataset":
        mask = np.asarray(mask, dtype=bool)
        return SurvivalDataset(
            self.time[mask], self.event[mask], self.arm[mask], self.switch_time[mask]
        )

    def arm_data(self, arm: int) -> "SurvivalDataset":
        return self.subset(self.arm == arm)

    def swap_arms(self) -> "SurvivalDataset":
        return SurvivalDataset(self.time, self.event, 1 - self.arm, self.switch_time)

    def digest(self) -> str:
        """Short content hash, used to check that paired tests saw the same data."""
        import hashlib

        h = hashlib.sha256()
        for a in (self.time, self.event, self.arm, self.switch_time):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()[:16]


def check_two_arm(data: SurvivalDataset) -> SurvivalDataset:
    """Validate that ``data`` can feed a two-sample test."""
    if not isinstance(data, SurvivalDataset):
        raise TypeError(f"expected SurvivalDataset, got {type(data).__name__}")
    counts = np.bincount(data.arm, minlength=2)
    if counts[CONTROL] == 0 or counts[EXPERIMENTAL] == 0:
        raise DataError("both arms need at least one subject")
    if not data.event.any():
        raise DataError("pooled data contain no events")
    return data


# ---------------------------------------------------------------------------
# CSV


def read_dataset(source: TextIO | str) -> SurvivalDataset:
    """Parse ``time,event,arm[,switch_time]`` CSV from a stream or a string."""
    if isinstance(source, str):
        source = io.StringIO(source)
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None:
        raise DataError("empty file")
    header = [h.strip() for h in header]
    if header not in (["time", "event", "arm"], ["time", "event", "arm", "switch_time"]):
        raise DataError(f"line 1: expected header time,event,arm[,switch_time], got {','.join(header)}")
    ncol = len(header)
    time, event, arm, switch = [], [], [], []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != ncol:
            raise DataError(f"line {lineno}: expected {ncol} fields, got {len(row)}")
        cells = [c.strip() for c in row]
        try:
            t = float(cells[0])
        except ValueError:
            raise DataError(f"line {lineno}: bad time {cells[0]!r}") from None
        if not math.isfinite(t) or t < 0:
            raise DataError(f"line {lineno}: time must be finite and non-negative, got {cells[0]}")
        if cells[1] not in ("0", "1"):
            raise DataError(f"line {lineno}: event must be 0 or 1, got {cells[1]!r}")
        label = cells[2].lower()
        if label not in _ARM_LABELS:
            raise DataError(f"line {lineno}: unknown arm label {cells[2]!r}")
        s = np.nan
        if ncol == 4 and cells[3] != "":
            try:
                s = float(cells[3])
            except ValueError:
                raise DataError(f"line {lineno}: bad switch_time {cells[3]!r}") from None
            if not 0 <= s <= t:
                raise DataError(f"line {lineno}: switch_time must lie in [0, time]")
        time.append(t)
        event.append(cells[1] == "1")
        arm.append(_ARM_LABELS[label])
        switch.append(s)
    if not time:
        raise DataError("no data rows")
    return SurvivalDataset(time, event, arm, switch)


def write_dataset(data: SurvivalDataset, sink: TextIO, include_switch: Optional[bool] = None) -> None:
    """Write ``data`` in the schema read by :func:`read_dataset`.

    Floats use ``repr`` so that a round trip is exact.
    """
    if include_switch is None:
        include_switch = bool(np.any(~np.isnan(data.switch_time)))
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(["time", "event", "arm", "switch_time"] if include_switch else ["time", "event", "arm"])
    for t, e, a, s in zip(data.time.tolist(), data.event.tolist(), data.arm.tolist(), data.switch_time.tolist()):
        row = [repr(t), int(e), int(a)]
        if include_switch:
            row.append("" if math.isnan(s) else repr(s))
        writer.writerow(row)


# ---------------------------------------------------------------------------
# Risk table


@dataclass(frozen=True)
class RiskTable:
    """At-risk and death counts at each distinct death time, ascending."""

    times: np.ndarray
    n0: np.ndarray
    n1: np.ndarray
    d0: np.ndarray
    d1: np.ndarray

    @property
    def n(self) -> np.ndarray:
        return self.n0 + self.n1

    @property
    def d(self) -> np.ndarray:
        return self.d0 + self.d1

    def __len__(self):
        return self.times.size

    def hypergeometric_variance(self) -> np.ndarray:
        """Per-time null variance of the control death count; 0 where n_j = 1."""
        n = self.n.astype(float)
        d = self.d.astype(float)
        num = self.n0 * self.n1 * d * (n - d)
        den = n * n * (n - 1.0)
        out = np.zeros_like(n)
        np.divide(num, den, out=out, where=den > 0)
        return out

    def observed_minus_expected(self) -> np.ndarray:
        n = self.n.astype(float)
        return self.d0 - self.d * self.n0 / n


def build_risk_table(data: SurvivalDataset) -> RiskTable:
    """Risk table over distinct death times.

    A subject censored exactly at a death time is still at risk there.
    """
    if not data.event.any():
        raise DataError("no events: risk table is empty")
    times = np.unique(data.time[data.event])
    n = []
    d = []
    for arm in (CONTROL, EXPERIMENTAL):
        in_arm = data.arm == arm
        t_sorted = np.sort(data.time[in_arm])
        n.append(t_sorted.size - np.searchsorted(t_sorted, times, side="left"))
        deaths = np.sort(data.time[in_arm & data.event])
        d.append(np.searchsorted(deaths, times, side="right") - np.searchsorted(deaths, times, side="left"))
    return RiskTable(times=times, n0=n[0], n1=n[1], d0=d[0], d1=d[1])


# ---------------------------------------------------------------------------
# Kaplan-Meier


@dataclass(frozen=True)
class KMCurve:
    """Right-continuous product-limit step function.

    ``times`` are the distinct death times and ``survival`` the value just
    after each one; ``n_at_risk``/``deaths`` are kept for variance formulas.
    """

    times: np.ndarray
    survival: np.ndarray
    n_at_risk: np.ndarray
    deaths: np.ndarray
    max_time: float

    def __call__(self, t):
        """S(t)."""
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right")
        return np.concatenate(([1.0], self.survival))[idx]

    def left_limit(self, t):
        """S(t-)."""
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="left")
        return np.concatenate(([1.0], self.survival))[idx]


def kaplan_meier(data: SurvivalDataset, arm: Optional[int] = None) -> KMCurve:
    """Product-limit estimate, pooled or for one arm."""
    time = data.time if arm is None else data.time[data.arm == arm]
    event = data.event if arm is None else data.event[data.arm == arm]
    if time.size == 0:
        raise DataError("cannot estimate survival from an empty sample")
    times = np.unique(time[event])
    t_sorted = np.sort(time)
    n = t_sorted.size - np.searchsorted(t_sorted, times, side="left")
    deaths = np.sort(time[event])
    d = np.searchsorted(deaths, times, side="right") - np.searchsorted(deaths, times, side="left")
    survival = np.cumprod(1.0 - d / n)
    return KMCurve(times=times, survival=survival, n_at_risk=n, deaths=d, max_time=float(t_sorted[-1]))


def _tail_areas(curve: KMCurve, tau: float):
    """Event times <= tau and the area under the curve from each to tau."""
    keep = curve.times <= tau
    t = curve.times[keep]
    s = curve.survival[keep]
    # area of each step [t_j, t_{j+1}) clipped at tau, then reverse cumulative sum
    edges = np.append(t, tau)
    pieces = s * np.diff(edges)
    tail = np.cumsum(pieces[::-1])[::-1]
    return keep, tail


def rmst(curve: KMCurve, tau: float) -> float:
    """Exact area under the Kaplan-Meier step function on [0, tau]."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    if tau > curve.max_time:
        raise DataError(f"tau={tau} exceeds the last observed time {curve.max_time}")
    keep, tail = _tail_areas(curve, tau)
    first = curve.times[keep][0] if tail.size else tau
    return float(first + (tail[0] if tail.size else 0.0))


def rmst_variance(curve: KMCurve, tau: float) -> float:
    """Greenwood-type variance of :func:`rmst`.

    A death time that empties the risk set (n_j = d_j) leaves no area
    after it, so its otherwise undefined term is taken as 0.
    """
    keep, tail = _tail_areas(curve, tau)
    n = curve.n_at_risk[keep].astype(float)
    d = curve.deaths[keep].astype(float)
    live = n > d
    terms = np.zeros_like(tail)
    terms[live] = tail[live] ** 2 * d[live] / (n[live] * (n[live] - d[live]))
    return float(terms.sum())


def minimax_time(data: SurvivalDataset) -> float:
    """Smaller of the two arms' largest observed times."""
    maxima = []
    for arm in (CONTROL, EXPERIMENTAL):
        t = data.time[data.arm == arm]
        if t.size == 0:
            raise DataError("minimax time needs both arms")
        maxima.append(t.max())
    return float(min(maxima))
