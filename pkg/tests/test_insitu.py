import json
from datetime import date, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lakeice.exceptions import InsufficientDataError, ParseError, ValidationError
from lakeice.insitu import (IceInterval, LoggerSeries, detect_by_correlation, detect_by_pressure,
                            detect_by_spectral_energy, read_logger_csv, spectral_interval,
                            write_diagnostics_csv, write_logger_csv)
from synth import SPLICE_START, correlation_splice, pressure_splice, spectral_splice


def within(result, truth, tol=2):
    f, b = truth
    return abs((result.freeze_up - f).days) <= tol and abs((result.break_up - b).days) <= tol


def test_logger_validation():
    t = SPLICE_START + np.array([0, 600, 600], dtype="timedelta64[s]")
    with pytest.raises(ValidationError):
        LoggerSeries("x", 0.5, t, [1.0, 2.0, 3.0])
    t = SPLICE_START + np.array([0, 600, 1200, 40000], dtype="timedelta64[s]")
    s = LoggerSeries("x", 0.5, t, [1.0, 2.0, 3.0, 4.0])
    assert s.cadence == 600 and len(s.gaps()) == 1


def test_interval_order():
    with pytest.raises(ValidationError):
        IceInterval(date(2017, 3, 1), date(2017, 1, 1), "x")


# correlation

@pytest.mark.parametrize("seed", range(3))
def test_correlation_splice(seed):
    shallow, deep, truth = correlation_splice(seed)
    r = detect_by_correlation(shallow, deep)
    assert r.status == "ok" and within(r, truth)


def test_correlation_fully_coupled():
    shallow, deep, _ = correlation_splice(0, before=70, ice=0, after=0)
    assert detect_by_correlation(shallow, deep).status == "no freeze detected"


def test_correlation_needs_overlap():
    shallow, deep, _ = correlation_splice(0, before=20, ice=0, after=0)
    with pytest.raises(InsufficientDataError):
        detect_by_correlation(shallow, deep)


@settings(max_examples=5, deadline=None)
@given(st.floats(-10, 10), st.floats(0.5, 3))
def test_correlation_offset_and_scale_invariance(offset, scale):
    shallow, deep, _ = correlation_splice(1)
    base = detect_by_correlation(shallow, deep)
    moved = detect_by_correlation(shallow.with_values(shallow.values * scale + offset),
                                  deep.with_values(deep.values * scale + offset))
    assert (moved.freeze_up, moved.break_up) == (base.freeze_up, base.break_up)


def test_correlation_tolerates_short_gaps():
    shallow, deep, truth = correlation_splice(0)
    keep = np.ones(shallow.values.size, bool)
    keep[5000:5018] = False  # 3 h gap
    cut = LoggerSeries(shallow.sensor, shallow.depth, shallow.times[keep], shallow.values[keep])
    assert within(detect_by_correlation(cut, deep), truth)


# spectral

@pytest.mark.parametrize("seed", range(3))
def test_spectral_splice(seed):
    s, truth = spectral_splice(seed)
    r = detect_by_spectral_energy(s)
    assert r.status == "ok" and within(r, truth)


def test_spectral_white_noise():
    s, _ = spectral_splice(0, amp=0.0)
    r = detect_by_spectral_energy(s)
    assert r.status == "no band energy" and r.freeze_up is None and r.break_up is None


def test_spectral_rule_on_constructed_energy():
    days = [date(2016, 10, 1) + timedelta(i) for i in range(200)]
    log_e = np.zeros(200)
    log_e[50:55] = -0.8 * np.arange(1, 6)
    log_e[55:150] = -4.0
    log_e[150:155] = -4.0 + 0.8 * np.arange(1, 6)
    # threshold sqrt(1 * 1e-4) = 1e-2: first day below is day 52 (-2.4), first day back above is day 152 (-1.6)
    fz, br, thr = spectral_interval(days, 10.0 ** log_e)
    assert thr == pytest.approx(1e-2)
    assert (fz, br) == (days[52], days[152])


def test_spectral_preconditions():
    s, _ = spectral_splice(0)
    with pytest.raises(ValidationError):
        detect_by_spectral_energy(s, window_days=3.0)
    short, _ = spectral_splice(0, before=20, ice=20, after=10)
    with pytest.raises(InsufficientDataError):
        detect_by_spectral_energy(short)


def test_spectral_offset_and_scale_invariance():
    s, _ = spectral_splice(2)
    base = detect_by_spectral_energy(s)
    moved = detect_by_spectral_energy(s.with_values(2.5 * s.values - 7.0))
    assert (moved.freeze_up, moved.break_up) == (base.freeze_up, base.break_up)


@pytest.mark.parametrize("shift_s", [60, 299, 599])
def test_spectral_sampling_phase(shift_s):
    s, _ = spectral_splice(1)
    base = detect_by_spectral_energy(s)
    moved = detect_by_spectral_energy(s.shifted(shift_s))
    assert abs((moved.freeze_up - base.freeze_up).days) <= 1
    assert abs((moved.break_up - base.break_up).days) <= 1


# pressure

@pytest.mark.parametrize("seed", range(3))
def test_pressure_splice(seed):
    s, truth = pressure_splice(seed)
    r = detect_by_pressure(s)
    assert r.status == "ok" and within(r, truth)


def test_pressure_no_signal():
    s, _ = pressure_splice(0, loud=0.0, quiet=0.0)
    r = detect_by_pressure(s)
    assert r.status == "no signal" and r.freeze_up is None
    const = s.with_values(np.full(s.values.size, 950.0))
    assert detect_by_pressure(const).status == "no signal"


def test_pressure_offset_invariance():
    s, _ = pressure_splice(1)
    base = detect_by_pressure(s)
    moved = detect_by_pressure(s.with_values(s.values + 37.0))
    assert (moved.freeze_up, moved.break_up) == (base.freeze_up, base.break_up)


def test_pressure_needs_data():
    s, _ = pressure_splice(0, before=10, ice=10, after=5)
    with pytest.raises(InsufficientDataError):
        detect_by_pressure(s)


# files

def test_logger_csv_round_trip(tmp_path):
    s, _ = pressure_splice(0, before=1, ice=1, after=1)
    p = tmp_path / "p.csv"
    write_logger_csv(p, s)
    back = read_logger_csv(p, kind="pressure")
    assert np.array_equal(back.times, s.times) and np.array_equal(back.values, s.values)
    assert back.depth == 10.0 and back.sensor == "p"


def test_logger_csv_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("time,value\n")
    with pytest.raises(ParseError, match="bad.csv:1"):
        read_logger_csv(p)
    p.write_text("timestamp_iso8601,depth_m,value\n2017-01-01T00:00:00,0.5,1.0\n2017-01-01T00:00:00,0.5,1.0\n")
    with pytest.raises(ParseError, match="bad.csv"):
        read_logger_csv(p)
    p.write_text("timestamp_iso8601,depth_m,value\nyesterday,0.5,1.0\n")
    with pytest.raises(ParseError, match="bad.csv:2"):
        read_logger_csv(p)


def test_outputs(tmp_path):
    s, _ = pressure_splice(0)
    r = detect_by_pressure(s)
    d = json.loads(r.to_json())
    assert d["method"] == "pressure" and d["freeze_up"] == r.freeze_up.isoformat()
    write_diagnostics_csv(tmp_path / "diag.csv", [r])
    lines = (tmp_path / "diag.csv").read_text().splitlines()
    assert lines[0] == "date,pressure_rolling_std" and len(lines) == len(r.diagnostics["date"]) + 1
