import datetime as dt

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from oascen.dataprep import (DaySample, ErrorField, ErrorKind, SignMode, assign_label, day_stats,
                             denormalize_error, error_mw, forecast_error, load_csv,
                             normalize_day, normalized_error, read_errors_csv, split_dataset,
                             write_errors_csv, write_load_csv)
from oascen.errors import (DegenerateDay, InsufficientData, ParseError, ValidationError)
from oascen.synthetic import ZONES, synthetic_days

D0 = dt.date(2018, 1, 1)


def _day(da, rt=None, date=D0):
    da = np.atleast_2d(np.asarray(da, float))
    rt = da if rt is None else np.atleast_2d(np.asarray(rt, float))
    return DaySample(date, da, rt, assign_label(date))


WORKED = _day([10, 20, 30], [12, 18, 33])


def test_day_stats_worked_example():
    st_ = day_stats(WORKED)
    assert (st_.da_min[0], st_.da_ave[0], st_.da_max[0]) == (10, 20, 30)
    assert st_.span[0] == 20


def test_flat_day_rejected():
    with pytest.raises(DegenerateDay):
        day_stats(_day([5, 5, 5]))


def test_stats_permutation_invariant():
    a, b = day_stats(_day([3, 9, 4, 1])), day_stats(_day([1, 4, 9, 3]))
    assert (a.da_min, a.da_ave, a.da_max) == (b.da_min, b.da_ave, b.da_max)


def test_normalize_worked_example():
    da_n, rt_n = normalize_day(WORKED)
    np.testing.assert_allclose(da_n, [[-0.5, 0.0, 0.5]], atol=1e-15)
    np.testing.assert_allclose(rt_n, [[-0.4, -0.1, 0.65]], atol=1e-15)
    np.testing.assert_allclose(forecast_error(da_n, rt_n).values, [[-0.1, 0.1, -0.15]], atol=1e-15)


def test_error_identities():
    s = _day([1.0, 4.0, 2.0])
    da_n, rt_n = normalize_day(s)
    np.testing.assert_array_equal(rt_n, da_n)
    assert not normalized_error(s).values.any()
    a, b = np.array([[0.1, -0.2]]), np.array([[0.3, 0.5]])
    np.testing.assert_array_equal(forecast_error(a, b).values, -forecast_error(b, a).values)
    with pytest.raises(ValidationError):
        forecast_error(a, np.zeros((1, 3)))


def test_denormalize_worked_examples():
    eps = ErrorField(np.array([[-0.1, 0.1, -0.15]]))
    np.testing.assert_allclose(denormalize_error(eps, WORKED, sign=SignMode.ROUND_TRIP),
                               [[12, 18, 33]], atol=1e-12)
    np.testing.assert_allclose(denormalize_error(eps, WORKED, sign=SignMode.PAPER_PLUS),
                               [[8, 22, 27]], atol=1e-12)
    zero = ErrorField(np.zeros((1, 3)))
    for sign in SignMode:
        np.testing.assert_array_equal(denormalize_error(zero, WORKED, sign=sign), WORKED.da_real)


def test_error_mw_and_kind_checks():
    eps = ErrorField(np.array([[-0.1, 0.1, -0.15]]))
    mw = error_mw(eps, WORKED)
    assert mw.kind is ErrorKind.PHYSICAL_MW
    np.testing.assert_allclose(mw.values, [[2, -2, 3]], atol=1e-12)
    with pytest.raises(ValidationError):
        denormalize_error(mw, WORKED)
    with pytest.raises(ValidationError):
        ErrorField(np.array([[np.inf]]))


@pytest.mark.parametrize("date, label", [
    (dt.date(2018, 4, 10), 1), (dt.date(2018, 1, 1), 0), (dt.date(2020, 12, 31), 3),
    (dt.date(2019, 3, 31), 0), (dt.date(2019, 7, 1), 2), (dt.date(2019, 9, 30), 2),
    (dt.date(2019, 10, 1), 3), (dt.date(2019, 6, 30), 1),
])
def test_assign_label(date, label):
    assert assign_label(date) == label


@given(st.dates())
def test_labels_cover_calendar(date):
    assert assign_label(date) in (0, 1, 2, 3)
    assert assign_label(dt.date.fromisoformat(date.isoformat())) == assign_label(date)


def test_split_dataset():
    days = list(range(1100))
    train, test = split_dataset(days, 1000, seed=4)
    assert len(test) == 100 and not set(train) & set(test)
    assert sorted(train + test) == days
    assert split_dataset(days, 1000, seed=4) == (train, test)
    with pytest.raises(InsufficientData):
        split_dataset(list(range(10)), 10)
    with pytest.raises(InsufficientData):
        split_dataset(list(range(10)), 0)


_fields = arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(2, 24)),
                 elements=st.floats(1.0, 1e4, allow_nan=False))


@given(_fields, st.floats(-0.3, 0.3), st.integers(0, 2 ** 32 - 1))
def test_range_is_exactly_one_and_round_trip(da, bias, seed):
    rng = np.random.default_rng(seed)
    da = da + np.arange(da.shape[1])[None, :] * 1e-3      # never flat
    rt = da * (1 + bias + 0.05 * rng.standard_normal(da.shape))
    s = DaySample(D0, da, rt, 0)
    da_n, _ = normalize_day(s)
    assert np.all(da_n.max(axis=1) - da_n.min(axis=1) == 1.0)
    back = denormalize_error(normalized_error(s), s, sign=SignMode.ROUND_TRIP)
    scale = np.maximum(np.abs(rt), day_stats(s).span[:, None])
    assert np.all(np.abs(back - rt) <= 1e-12 * scale)


def test_round_trip_on_synthetic_days():
    for s in synthetic_days(200, seed=11, stride=2):
        back = denormalize_error(normalized_error(s), s)
        np.testing.assert_allclose(back, s.rt_real, rtol=1e-12, atol=0)


# -- CSV ingestion ---------------------------------------------------------

def test_ingest_three_days(tmp_path):
    days = synthetic_days(3, seed=0, stride=100)
    p = tmp_path / "loads.csv"
    write_load_csv(p, ZONES, days)
    rep = load_csv(p, zones=ZONES)
    assert len(rep.samples) == 3 and not rep.dropped_incomplete and not rep.dropped_flat
    assert [s.label for s in rep.samples] == [assign_label(d.date) for d in days]
    for a, b in zip(rep.samples, days):
        np.testing.assert_array_equal(a.da_real, b.da_real)
        np.testing.assert_array_equal(a.rt_real, b.rt_real)


def test_ingest_drops_incomplete_and_flat(tmp_path):
    days = synthetic_days(3, seed=0)
    flat = DaySample(dt.date(2019, 5, 5), np.full((3, 24), 7.0), np.full((3, 24), 8.0), 1)
    p = tmp_path / "loads.csv"
    write_load_csv(p, ZONES, days + [flat])
    lines = p.read_text().splitlines()
    # remove hour 5 of zone B on the second day
    victim = f"{days[1].date.isoformat()},B,5,"
    p.write_text("\n".join(ln for ln in lines if not ln.startswith(victim)) + "\n")
    rep = load_csv(p, zones=ZONES)
    assert [s.date for s in rep.samples] == [days[0].date, days[2].date]
    assert rep.dropped_incomplete == [days[1].date]
    assert rep.dropped_flat == [flat.date]


@pytest.mark.parametrize("text, exc", [
    ("", ParseError),
    ("date,zone,hour\n", ParseError),
    ("date,zone,hour,da_mw,rt_mw\n2018-01-01,A,x,1,1\n", ParseError),
    ("date,zone,hour,da_mw,rt_mw\n2018-01-01,A,25,1,1\n", ParseError),
    ("date,zone,hour,da_mw,rt_mw\n", InsufficientData),
    ("date,zone,hour,da_mw,rt_mw\n2018-01-01,Q,1,1,1\n", ValidationError),
])
def test_ingest_errors(tmp_path, text, exc):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(exc):
        load_csv(p, zones=ZONES)


def test_error_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    fields = [ErrorField(rng.normal(size=(3, 24))) for _ in range(2)]
    p = tmp_path / "e.csv"
    write_errors_csv(p, ZONES, ["d1", "d2"], fields)
    tags, arrays_ = read_errors_csv(p, ZONES)
    assert tags == ["d1", "d2"]
    for a, f in zip(arrays_, fields):
        np.testing.assert_array_equal(a, f.values)
    assert len(p.read_text().splitlines()) == 1 + 2 * 3 * 24


def test_error_csv_incomplete(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("date,zone,hour,eps\nd,A,1,0.1\n")
    with pytest.raises(ValidationError):
        read_errors_csv(p, ZONES)
