import datetime as dt
import logging
import math

import numpy as np
import pytest

from drbaseline.errors import DataError, ParameterError
from drbaseline.mdp import DrChain
from drbaseline.scenarios import (
    HistoryRecord,
    PathBundle,
    ScenarioModel,
    ScenarioPath,
    awgn_noise,
    awgn_paths,
    derive_z,
    dr_sequences,
    load_history,
    noise_sd,
    quantize_z,
    read_history_csv,
    read_paths_csv,
    select_history,
    synthetic_hourly_history,
    write_history_csv,
    write_paths_csv,
    z_from_consumption,
)
from drbaseline.utility import UtilityParams, estimate_params, intrinsic_baseline

P = UtilityParams(1.56, 1.25, 0.12, 10.77)
BASE = 2.0 + np.sin(np.linspace(0, 6, 93)) + 0.5


def _csv(tmp_path, body, name="h.csv"):
    p = tmp_path / name
    p.write_text(body)
    return p


# ---- ingestion -------------------------------------------------------------

def test_single_weekday_row(tmp_path):
    p = _csv(tmp_path, "timestamp,kwh\n2016-06-01T09:00:00,1.5\n")  # a Wednesday
    recs = load_history(p)
    assert len(recs) == 1 and recs[0].consumption == 1.5


def test_weekend_and_other_hours_excluded(tmp_path):
    body = "timestamp,kwh\n2016-06-04T09:00:00,9\n2016-06-05T09:00:00,9\n2016-06-06T10:00:00,9\n2016-06-06T09:00:00,2\n"
    recs = load_history(_csv(tmp_path, body))
    assert [r.consumption for r in recs] == [2.0]


def test_holidays_removed(tmp_path):
    body = "timestamp,kwh\n2016-07-04T09:00:00,9\n2016-07-05T09:00:00,2\n"
    hol = _csv(tmp_path, "# US\n2016-07-04\n", "hol.txt")
    assert [r.consumption for r in load_history(_csv(tmp_path, body), holidays=hol)] == [2.0]


def test_sub_hourly_rows_summed(tmp_path):
    body = "timestamp,kwh\n" + "".join(f"2016-06-01T09:{m:02d}:00,0.25\n" for m in (0, 15, 30, 45))
    recs = load_history(_csv(tmp_path, body))
    assert recs[0].consumption == pytest.approx(1.0)


@pytest.mark.parametrize("body,needle", [
    ("timestamp,kwh\n2016-06-01T09:00:00,-1\n", "row 2"),
    ("timestamp,kwh\n2016-06-01T09:00:00,1\nnot-a-date,1\n", "row 3"),
    ("timestamp,kwh\n2016-06-01T09:00:00,abc\n", "row 2"),
    ("time,value\n2016-06-01T09:00:00,1\n", "header"),
    ("timestamp,kwh\n2016-06-01T09:00:00,1\n2016-06-01T09:00:00,2\n", "duplicate"),
])
def test_bad_rows(tmp_path, body, needle):
    with pytest.raises(DataError, match=needle):
        read_history_csv(_csv(tmp_path, body))


def test_missing_file(tmp_path):
    with pytest.raises(DataError):
        read_history_csv(tmp_path / "nope.csv")


def test_peak_season_block():
    day0 = dt.date(2016, 1, 4)  # Monday
    recs = []
    for d in range(60):
        day = day0 + dt.timedelta(days=d)
        recs.append(HistoryRecord(dt.datetime.combine(day, dt.time(9)), 5.0 if 20 <= d < 30 else 1.0))
    # days 20..29 hold seven weekdays
    out = select_history(recs, 9, (), 7)
    assert len(out) == 7
    assert all(r.consumption == 5.0 for r in out)
    assert [r.timestamp for r in out] == sorted(r.timestamp for r in out)
    with pytest.raises(ParameterError):
        select_history(recs, 24)


def test_history_csv_round_trip(tmp_path):
    recs = synthetic_hourly_history(n_weeks=2)
    p = tmp_path / "syn.csv"
    write_history_csv(recs, p)
    assert read_history_csv(p) == recs


def test_synthetic_history_has_morning_peak():
    recs = synthetic_hourly_history(n_weeks=4)
    by_hour = np.zeros(24)
    for r in recs:
        by_hour[r.timestamp.hour] += r.consumption
    assert int(by_hour.argmax()) == 9


# ---- noise and chain -------------------------------------------------------

def test_infinite_snr_returns_base():
    np.testing.assert_array_equal(awgn_paths(BASE, math.inf, 3, 0), np.tile(BASE, (3, 1)))


def test_empirical_snr():
    noise = awgn_noise(BASE, 3.0, 100, seed=7)
    snr = 10 * np.log10(np.mean(BASE ** 2) / noise.var())
    assert abs(snr - 3.0) < 0.5
    # unclamped noise is centred: mean within 3 standard errors of 0
    assert abs(noise.mean()) < 3 * noise.std() / math.sqrt(noise.size)
    assert noise_sd(BASE, 3.0) == pytest.approx(math.sqrt(np.mean(BASE ** 2) / 10 ** 0.3))


def test_paths_non_negative_and_reproducible():
    a = awgn_paths(BASE, 0.0, 20, seed=1)
    assert np.all(a >= 0) and np.any(a == 0)
    np.testing.assert_array_equal(a, awgn_paths(BASE, 0.0, 20, seed=1))
    assert not np.array_equal(a, awgn_paths(BASE, 0.0, 20, seed=2))


def test_per_path_streams_are_prefix_stable():
    # path i does not depend on how many paths were requested
    np.testing.assert_array_equal(awgn_paths(BASE, 3, 5, 4)[:3], awgn_paths(BASE, 3, 3, 4))


def test_dr_sequences():
    assert not dr_sequences(50, DrChain(0.0, 0.0), 5, 0).any()
    ones = dr_sequences(50, DrChain(1.0, 1.0), 5, 0)
    assert not ones[:, 0].any() and ones[:, 1:].all()
    y = dr_sequences(93, DrChain(0.2, 0.4), 1000, 11)
    assert abs(y.mean() - 0.25) < 0.02
    assert np.all(dr_sequences(10, DrChain(), 3, 0, y0=1)[:, 0] == 1)
    with pytest.raises(ParameterError):
        dr_sequences(10, DrChain(), 3, 0, y0=2)


def test_chain_transition_frequencies():
    y = dr_sequences(93, DrChain(0.2, 0.4), 2000, 3)
    prev, nxt = y[:, :-1].ravel(), y[:, 1:].ravel()
    assert nxt[prev == 0].mean() == pytest.approx(0.2, abs=0.01)
    assert nxt[prev == 1].mean() == pytest.approx(0.4, abs=0.015)


# ---- z derivation ----------------------------------------------------------

def test_z_at_mean_is_one():
    h = np.array([1.0, 2.0, 6.0, 3.0])
    p = estimate_params(h, 0.12)
    assert z_from_consumption(h.mean(), p) == pytest.approx(1.0)


def test_z_round_trip():
    a = np.linspace(0.0, P.a_hat, 50)
    z, _ = derive_z(a, P)
    np.testing.assert_allclose(intrinsic_baseline(z, P), a, atol=1e-9)


def test_constant_consumption_single_bin():
    _, zd = derive_z(np.full(30, 2.0), P)
    assert len(zd.values) == 1 and zd.probs == (1.0,)


def test_quantize_terciles():
    zd = quantize_z(np.arange(1.0, 10.0), 3)
    assert zd.values == (2.0, 5.0, 8.0)
    assert sum(zd.probs) == pytest.approx(1.0)
    with pytest.raises(DataError):
        quantize_z([], 3)


def test_z_above_cap_clamped_with_warning(caplog):
    with caplog.at_level(logging.WARNING, logger="drbaseline.scenarios"):
        z = z_from_consumption([P.a_hat + 5.0], P)
    assert "clamping" in caplog.text
    assert intrinsic_baseline(z[0], P) == pytest.approx(P.a_hat)


# ---- scenario model and bundles ------------------------------------------

def test_model_paths():
    m = ScenarioModel.from_snr(BASE, 3.0, DrChain(), P)
    b = m.paths(12, seed=5, warmup_len=4)
    assert b.consumption.shape == (12, 93) and b.warmup.shape == (12, 4)
    assert np.all((b.consumption >= 0) & (b.consumption <= P.a_hat))
    np.testing.assert_allclose(intrinsic_baseline(b.z, P), b.consumption, atol=1e-9)
    b2 = m.paths(12, seed=5, warmup_len=4)
    np.testing.assert_array_equal(b.consumption, b2.consumption)
    np.testing.assert_array_equal(b.dr, b2.dr)
    assert b.initial_windows(3).shape == (12, 3)
    with pytest.raises(ParameterError):
        b.initial_windows(5)


def test_sample_future_shapes():
    m = ScenarioModel.from_snr(BASE, 3.0, DrChain(), P)
    c, y = m.sample_future(np.random.default_rng(0), 7, 90, 1)
    assert c.shape == (7, 3) and y.shape == (7, 3)
    c, y = m.sample_future(np.random.default_rng(0), 7, 93, 1)
    assert c.shape == (7, 0)


def test_paths_csv_round_trip(tmp_path):
    m = ScenarioModel.from_snr(BASE[:10], 3.0, DrChain(), P)
    b = m.paths(3, seed=2, warmup_len=2)
    p = tmp_path / "paths.csv"
    write_paths_csv(b, p)
    header = p.read_text().splitlines()[0]
    assert header == "path_id,day,consumption_kwh,dr_flag,z"
    r = read_paths_csv(p)
    for name in ("consumption", "dr", "z", "warmup"):
        np.testing.assert_array_equal(getattr(r, name), getattr(b, name))


def test_scenario_path_validation():
    with pytest.raises(DataError):
        ScenarioPath((1.0, 2.0), (0,), (1.0, 1.0))
    with pytest.raises(DataError):
        ScenarioPath((-1.0,), (0,), (1.0,))
    sp = ScenarioPath((1.0, 2.0), (0, 1), (1.0, 1.1), (0.5,))
    b = PathBundle.from_paths([sp, sp])
    assert b.n_paths == 2 and b.T == 2 and b.path(1) == sp
