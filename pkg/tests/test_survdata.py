import io
import math

import numpy as np
import pytest
from conftest import datasets
from hypothesis import given, settings
from hypothesis import strategies as st

from switchrank.exceptions import DataError
from switchrank.survdata import (
    KMCurve,
    SubjectRecord,
    SurvivalDataset,
    build_risk_table,
    kaplan_meier,
    minimax_time,
    read_dataset,
    rmst,
    rmst_variance,
    write_dataset,
)


def test_read_minimal():
    data = read_dataset("time,event,arm\n3.2,1,0\n5.0,0,1")
    assert len(data) == 2
    assert data.records == [SubjectRecord(3.2, True, 0), SubjectRecord(5.0, False, 1)]


def test_read_named_arms_and_switch_column():
    data = read_dataset("time,event,arm,switch_time\n4,1,control,2.5\n6,0,experimental,\n")
    assert data.arm.tolist() == [0, 1]
    assert data.switch_time[0] == 2.5
    assert math.isnan(data.switch_time[1])


@pytest.mark.parametrize("text, line", [
    ("time,event,arm\n-1,1,0\n", "line 2"),
    ("time,event,arm\n1,1,0\n2,2,1\n", "line 3"),
    ("time,event,arm\n1,1,0\n2,1,placebo\n", "line 3"),
    ("time,event,arm\n1,1\n", "line 2"),
    ("time,event,arm\nabc,1,0\n", "line 2"),
    ("time,event,arm\nnan,1,0\n", "line 2"),
    ("t,e,a\n1,1,0\n", "line 1"),
    ("time,event,arm,switch_time\n3,1,0,4\n", "line 2"),
])
def test_read_errors_name_the_line(text, line):
    with pytest.raises(DataError, match=line):
        read_dataset(text)


def test_read_empty():
    with pytest.raises(DataError):
        read_dataset("")
    with pytest.raises(DataError):
        read_dataset("time,event,arm\n")


@settings(max_examples=80, deadline=None)
@given(
    rows=st.lists(
        st.tuples(
            st.floats(0, 1e6, allow_nan=False, allow_infinity=False),
            st.booleans(),
            st.integers(0, 1),
            st.one_of(st.none(), st.floats(0, 1, allow_nan=False)),
        ),
        min_size=1,
        max_size=30,
    )
)
def test_write_read_round_trip(rows):
    records = [SubjectRecord(t, e, a, None if s is None else s * t) for t, e, a, s in rows]
    data = SurvivalDataset.from_records(records)
    buf = io.StringIO()
    write_dataset(data, buf)
    back = read_dataset(buf.getvalue())
    assert back == data
    assert back.records == data.records


def test_dataset_is_immutable():
    data = SurvivalDataset([1.0, 2.0], [1, 0], [0, 1])
    with pytest.raises(AttributeError):
        data.time = np.zeros(2)
    with pytest.raises(ValueError):
        data.time[0] = 5.0


@pytest.mark.parametrize("kwargs", [
    dict(time=[1, -2], event=[1, 1], arm=[0, 1]),
    dict(time=[1, 2], event=[1, 1], arm=[0, 2]),
    dict(time=[1, 2], event=[1], arm=[0, 1]),
    dict(time=[1, 2], event=[1, 1], arm=[0, 1], switch_time=[3, np.nan]),
])
def test_dataset_validation(kwargs):
    with pytest.raises((DataError, ValueError)):
        SurvivalDataset(**kwargs)


def test_digest_and_swap():
    a = SurvivalDataset([1.0, 2.0, 3.0], [1, 1, 0], [0, 1, 1])
    b = SurvivalDataset([1.0, 2.0, 3.0], [1, 1, 0], [0, 1, 1])
    assert a.digest() == b.digest() and len(a.digest()) == 16
    assert a.swap_arms().arm.tolist() == [1, 0, 0]
    assert a.swap_arms().digest() != a.digest()


def test_risk_table_hand_example():
    data = SurvivalDataset([2, 2, 5, 5], [1, 1, 1, 0], [0, 0, 0, 1])
    rt = build_risk_table(data)
    assert rt.times.tolist() == [2.0, 5.0]
    assert rt.n0.tolist() == [3, 1]
    assert rt.n1.tolist() == [1, 1]
    assert rt.d0.tolist() == [2, 1]
    assert rt.d1.tolist() == [0, 0]


def test_risk_table_errors_and_single_death():
    with pytest.raises(DataError):
        build_risk_table(SurvivalDataset([1, 2], [0, 0], [0, 1]))
    rt = build_risk_table(SurvivalDataset([1, 2, 3, 4, 5], [1, 0, 0, 0, 0], [1, 0, 0, 1, 1]))
    assert len(rt) == 1
    assert (rt.n0[0], rt.n1[0], rt.d0[0], rt.d1[0]) == (2, 3, 0, 1)


@settings(max_examples=80, deadline=None)
@given(data=datasets())
def test_risk_table_matches_recount(data):
    rt = build_risk_table(data)
    recs = data.records
    death_times = sorted({r.time for r in recs if r.event})
    assert rt.times.tolist() == death_times
    for j, t in enumerate(death_times):
        for arm, n_col, d_col in ((0, rt.n0, rt.d0), (1, rt.n1, rt.d1)):
            assert n_col[j] == sum(1 for r in recs if r.arm == arm and r.time >= t)
            assert d_col[j] == sum(1 for r in recs if r.arm == arm and r.time == t and r.event)
    assert np.all(rt.hypergeometric_variance() >= 0)


def test_km_without_censoring():
    km = kaplan_meier(SurvivalDataset([1, 2, 3], [1, 1, 1], [0, 0, 1]))
    np.testing.assert_allclose(km([1, 2, 3]), [2 / 3, 1 / 3, 0])
    assert km(0.5) == 1.0
    assert km.left_limit(1.0) == 1.0
    assert km.left_limit(2.0) == pytest.approx(2 / 3)


def test_km_with_censoring():
    km = kaplan_meier(SurvivalDataset([1, 2, 3], [1, 0, 1], [0, 1, 0]))
    assert km(1.0) == pytest.approx(2 / 3)
    assert km(2.5) == pytest.approx(2 / 3)
    assert km(3.0) == 0.0


def test_km_by_arm():
    data = SurvivalDataset([1, 2, 3, 4], [1, 1, 1, 0], [0, 1, 0, 1])
    assert kaplan_meier(data, arm=0)(3.0) == 0.0
    assert kaplan_meier(data, arm=1)(4.0) == 0.5


@settings(max_examples=60, deadline=None)
@given(data=datasets())
def test_km_is_non_increasing_in_unit_interval(data):
    km = kaplan_meier(data)
    s = km(np.linspace(0, 31, 200))
    assert np.all(np.diff(s) <= 0)
    assert np.all((s >= 0) & (s <= 1))


def test_rmst_flat_curve():
    km = kaplan_meier(SurvivalDataset([5, 10, 12], [0, 0, 1], [0, 0, 0]))
    assert rmst(km, 8.0) == 8.0


def test_rmst_two_step():
    km = kaplan_meier(SurvivalDataset([3, 10], [1, 0], [0, 0]))
    assert rmst(km, 10.0) == pytest.approx(3 + 0.5 * 7)
    assert rmst(km, 3.0) == pytest.approx(3.0)


def test_rmst_tau_past_follow_up():
    km = kaplan_meier(SurvivalDataset([3, 10], [1, 0], [0, 0]))
    with pytest.raises(DataError):
        rmst(km, 11.0)


def test_rmst_exponential_oracle():
    rng = np.random.default_rng(7)
    lam, tau, n = math.log(2) / 10, 12.0, 20_000
    t = rng.exponential(1 / lam, n)
    km = kaplan_meier(SurvivalDataset(t, np.ones(n, bool), np.zeros(n, int)))
    se = math.sqrt(rmst_variance(km, tau))
    exact = (1 - math.exp(-lam * tau)) / lam
    assert abs(rmst(km, tau) - exact) < 3 * se


def test_rmst_variance_hand_values():
    # deaths at 1 and 2 among 3, censored at 5: tail areas 5/3 and 1
    km = kaplan_meier(SurvivalDataset([1, 2, 5], [1, 1, 0], [0, 0, 0]))
    assert rmst(km, 5.0) == pytest.approx(1 + 2 / 3 + 1)
    assert rmst_variance(km, 5.0) == pytest.approx(25 / 54 + 1 / 2, rel=1e-14)
    # the last death empties the risk set but leaves no area, so it adds nothing
    km = kaplan_meier(SurvivalDataset([1, 3], [1, 1], [0, 0]))
    assert rmst_variance(km, 3.0) == pytest.approx(0.5, rel=1e-14)


def test_rmst_variance_when_risk_set_empties():
    # both deaths at t=1 end the curve; no area remains so the term is 0
    km = kaplan_meier(SurvivalDataset([1, 1, 4], [1, 1, 0], [0, 0, 1]), arm=0)
    assert rmst(km, 1.0) == 1.0
    assert rmst_variance(km, 1.0) == 0.0


@pytest.mark.parametrize("times, arms, expected", [
    ([20, 3, 25, 1], [0, 0, 1, 1], 20.0),
    ([18, 18], [0, 1], 18.0),
    ([5, 7], [0, 1], 5.0),
])
def test_minimax_time(times, arms, expected):
    assert minimax_time(SurvivalDataset(times, np.ones(len(times), bool), arms)) == expected
