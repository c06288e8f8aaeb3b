from datetime import date, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lakeice.exceptions import InsufficientDataError, ParseError
from lakeice.phenology import (DailyLakeSeries, DayObservation, DayState, aggregate_daily, bound_curves,
                               despike, extract_phenology, lswt_thresholds, nearest_rank, nir_state,
                               running_mean, two_step_phenology)
from synth import synthetic_season

D0 = date(2016, 10, 1)


def obs(day, nir, lswt):
    return DayObservation(D0 + timedelta(days=day), np.asarray(nir, float), np.asarray(lswt, float))


def test_aggregate_single_and_pooled():
    s = aggregate_daily([obs(0, [0.1] * 4, [270.0] * 4)])
    assert s.mean_lswt[0] == 270.0
    s = aggregate_daily([obs(0, [0.1] * 5, [270.0] * 5), obs(0, [0.1] * 5, [272.0] * 5)])
    assert s.mean_lswt[0] == 271.0 and s.n_obs[0] == 2


def test_aggregate_fractions_and_missing_days():
    nir = [0.5] * 7 + [0.1] * 3
    s = aggregate_daily([obs(0, nir, [270.0] * 10), obs(3, nir, [270.0] * 10)], thr_frozen=271.0)
    assert s.frac_nir_gt[0] == pytest.approx(0.7)
    assert s.frac_nir_lt[0] == pytest.approx(0.3)
    assert s.frac_lswt_frozen[0] == 1.0
    assert len(s) == 4 and np.isnan(s.mean_nir[1:3]).all() and s.n_obs[1] == 0
    assert np.isnan(s.frac_lswt_open).all()


def test_daily_csv_round_trip(tmp_path):
    s = aggregate_daily([obs(0, [0.5, 0.1], [270.0, 271.0]), obs(2, [0.2], [280.0])], thr_frozen=273.0,
                        thr_open=275.0)
    s.to_csv(tmp_path / "d.csv")
    back = DailyLakeSeries.from_csv(tmp_path / "d.csv")
    assert back.start == s.start
    for name in ("mean_nir", "mean_lswt", "frac_nir_gt", "frac_lswt_frozen", "frac_lswt_open"):
        assert np.array_equal(getattr(back, name), getattr(s, name), equal_nan=True)
    assert (tmp_path / "d.csv").read_text().splitlines()[2] == "2016-10-02,,,,,,,0"


def test_daily_csv_bad_header(tmp_path):
    (tmp_path / "d.csv").write_text("date,x\n")
    with pytest.raises(ParseError, match="d.csv"):
        DailyLakeSeries.from_csv(tmp_path / "d.csv")


def test_despike_constant_and_single_spike():
    assert np.array_equal(despike(np.full(20, 5.0)), np.full(20, 5.0))
    x = np.full(20, 5.0)
    x[9] = 50.0
    assert np.array_equal(despike(x), np.full(20, 5.0))


def test_despike_two_consecutive_outliers_in_ramp():
    x = np.arange(10, dtype=float)
    x[4], x[5] = 40.0, 41.0
    # both removed, then refilled linearly between 3 and 6
    assert np.allclose(despike(x), np.arange(10, dtype=float))


def test_despike_fills_interior_gaps_only():
    x = np.array([np.nan, 1.0, 2.0, np.nan, np.nan, 5.0, 6.0, np.nan])
    y = despike(x)
    assert np.isnan(y[0]) and np.isnan(y[-1])
    assert np.allclose(y[1:7], [1, 2, 3, 4, 5, 6])


def test_despike_all_missing():
    with pytest.raises(InsufficientDataError):
        despike(np.full(5, np.nan))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.one_of(st.floats(-10, 10), st.just(float("nan"))), min_size=3, max_size=60))
def test_despike_idempotent(vals):
    x = np.array(vals)
    if not np.isfinite(x).any():
        return
    y = despike(x)
    assert np.allclose(despike(y), y, rtol=0, atol=1e-9, equal_nan=True)


def brute_bounds(x, w):
    n = len(x)
    lower = np.array([max(min(x[s:s + w]) for s in range(max(0, d - w + 1), min(d, n - w) + 1)) for d in range(n)])
    upper = np.array([min(max(x[s:s + w]) for s in range(max(0, d - w + 1), min(d, n - w) + 1)) for d in range(n)])
    return lower, upper


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=15, max_size=60))
def test_bound_curves_raw_match_window_scan(vals):
    x = np.array(vals)
    c = bound_curves(x)
    lo, up = brute_bounds(x, 15)
    assert np.array_equal(c.lower_raw, lo) and np.array_equal(c.upper_raw, up)
    assert np.all(c.lower_raw <= x) and np.all(x <= c.upper_raw)
    assert np.all(c.lower <= c.upper + 1e-12)


def test_bound_curves_constant():
    c = bound_curves(np.full(30, 0.3))
    assert np.allclose(c.lower, 0.3) and np.allclose(c.upper, 0.3)


def test_bound_curves_square_wave():
    x = np.tile(np.r_[np.full(20, 0.1), np.full(20, 0.6)], 4)
    c = bound_curves(x)
    lo, up = brute_bounds(x, 15)
    low_interior = np.r_[[i for i in range(160) if i % 40 in range(7, 13)]]
    high_interior = np.r_[[i for i in range(160) if i % 40 in range(24, 36)]]
    assert np.allclose(c.lower[low_interior], 0.1)
    assert np.allclose(c.upper[high_interior], 0.6)
    assert np.array_equal(c.lower_raw, lo)


def test_bound_curves_ramp_envelope():
    x = np.linspace(0, 1, 50)
    c = bound_curves(x)
    assert np.all(c.lower <= x + 1e-12) and np.all(x <= c.upper + 1e-12)


def test_bound_curves_too_short():
    with pytest.raises(InsufficientDataError):
        bound_curves(np.zeros(10))


def test_running_mean_symmetric_ends():
    x = np.arange(10.0)
    assert np.allclose(running_mean(x, 7), x)


def test_nir_state_rules():
    s = nir_state([0.9, 0.1, 0.5, np.nan], [0.05, 0.8, 0.5, np.nan])
    assert s.tolist() == [DayState.FROZEN, DayState.OPEN, DayState.UNDECIDED, DayState.MISSING]


def test_nearest_rank_examples():
    assert nearest_rank(np.linspace(269, 271, 21), 90) == pytest.approx(270.8)
    assert nearest_rank([278.0] * 12, 10) == 278.0
    assert nearest_rank(np.arange(1, 31), 90) == 27
    assert nearest_rank([3, 1, 2], 0) == 1


@given(st.lists(st.floats(250, 300), min_size=1, max_size=50), st.integers(0, 100))
def test_nearest_rank_matches_inverted_cdf(vals, p):
    expected = np.percentile(np.array(vals), p, method="inverted_cdf")
    # numpy evaluates p*n/100 in floating point; skip the cases where that rounds across an integer
    if (p * len(vals)) % 100 == 0 or abs((p * len(vals) / 100) - round(p * len(vals) / 100)) > 1e-9:
        assert nearest_rank(vals, p) == expected


@given(st.lists(st.floats(250, 300), min_size=1, max_size=30))
def test_nearest_rank_stable_under_full_duplication(vals):
    assert nearest_rank(vals + vals, 90) == nearest_rank(vals, 90)
    assert nearest_rank(vals + vals, 10) == nearest_rank(vals, 10)


def test_thresholds_warnings_and_fallback():
    t = lswt_thresholds(np.full(5, 271.0), [])
    assert t.thr_frozen == 271.0 and t.thr_open == 273.15 and t.fallback_open
    assert any("only 5" in w for w in t.warnings)
    t = lswt_thresholds(np.full(20, 276.0), np.full(20, 274.0))
    assert any("below the frozen" in w for w in t.warnings)


def step_fractions(pattern):
    """Per-day fractions from a state string: F frozen, O open, . missing, ? undecided."""
    ff = np.array([{"F": 1.0, "O": 0.0, ".": np.nan, "?": 0.5}[c] for c in pattern])
    fo = np.array([{"F": 0.0, "O": 1.0, ".": np.nan, "?": 0.5}[c] for c in pattern])
    return ff, fo


def test_clean_step_season():
    ev = extract_phenology(*step_fractions("O" * 60 + "F" * 80 + "O" * 60), D0)
    assert ev.FUS == D0 + timedelta(days=59)
    assert ev.FUE == D0 + timedelta(days=60)
    assert ev.BUS == ev.BUE == D0 + timedelta(days=140)
    assert ev.ice_on == ev.FUE and ev.ice_off == ev.BUS


def test_blip_suppressed():
    p = "O" * 20 + "F" * 3 + "O" * 37 + "F" * 80 + "O" * 60
    ev = extract_phenology(*step_fractions(p), D0)
    assert ev.FUE == D0 + timedelta(days=60)
    # with a 3-day window the blip survives as its own, smaller season
    assert extract_phenology(*step_fractions(p), D0, window=3).FUE == D0 + timedelta(days=60)


def test_missing_days_straddling_freeze():
    p = "O" * 59 + ".." + "F" * 79 + "O" * 60
    ev = extract_phenology(*step_fractions(p), D0)
    assert ev.FUE == D0 + timedelta(days=61)
    assert ev.uncertainties_days["FUE"] == 2


def test_missing_days_inside_run_inherit():
    p = "O" * 60 + "F" * 7 + "..." + "F" * 7 + "O" * 30
    ev = extract_phenology(*step_fractions(p), D0)
    assert ev.FUE == D0 + timedelta(days=60) and ev.BUS == D0 + timedelta(days=77)


def test_short_thaw_does_not_end_season():
    p = "O" * 30 + "F" * 40 + "OO" + "F" * 40 + "O" * 30
    ev = extract_phenology(*step_fractions(p), D0)
    assert ev.FUE == D0 + timedelta(days=30) and ev.BUS == D0 + timedelta(days=112)


def test_no_freeze():
    ev = extract_phenology(*step_fractions("O" * 50), D0)
    assert ev.status == "no freeze detected" and ev.FUE is None


season_chars = st.sampled_from("FFFFOOOO.?")


@settings(max_examples=150, deadline=None)
@given(st.lists(season_chars, min_size=20, max_size=120).map("".join), st.integers(1, 20), st.integers(1, 20))
def test_event_order_and_monotone_survival(pattern, w1, w2):
    small, large = sorted((w1, w2))
    ff, fo = step_fractions(pattern)
    e_large = extract_phenology(ff, fo, D0, window=large)
    e_small = extract_phenology(ff, fo, D0, window=small)
    for e in (e_large, e_small):
        present = [d for d in (e.FUS, e.FUE, e.BUS, e.BUE) if d is not None]
        assert present == sorted(present)
    for name in ("FUS", "FUE", "BUS", "BUE"):
        if getattr(e_large, name) is not None:
            assert getattr(e_small, name) is not None


def test_two_step_on_synthetic_season():
    observations, truth = synthetic_season(seed=1)
    r = two_step_phenology(observations, lake="synthetic")
    assert r.thresholds.thr_frozen == nearest_rank(truth["frozen"], 90)
    assert r.thresholds.thr_open == nearest_rank(truth["open"], 10)
    assert abs((r.events.FUE - truth["FUE"]).days) <= 1
    assert abs((r.events.BUS - truth["BUS"]).days) <= 1
    assert r.curves is not None
    d = r.events.to_dict()
    assert d["ice_on"] == r.events.FUE.isoformat()
