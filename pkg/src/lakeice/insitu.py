"""Freeze-up and break-up dates from mooring temperature and pressure loggers."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from pathlib import Path

import numpy as np
from scipy.signal import periodogram

from ._csv import numbered_rows
from .exceptions import InsufficientDataError, ParseError, ValidationError

HOUR = 3600.0
DAY = 86400.0


@dataclass(frozen=True, eq=False)
class LoggerSeries:
    """Samples of one logger; ``times`` are naive local timestamps."""

    sensor: str
    depth: float
    times: np.ndarray
    values: np.ndarray
    kind: str = "temperature"

    def __post_init__(self):
        t = np.asarray(self.times, dtype="datetime64[s]")
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape:
            raise ValidationError(f"logger {self.sensor!r}: times and values must be 1-D of equal length")
        if t.size < 2:
            raise InsufficientDataError(f"logger {self.sensor!r} has fewer than 2 samples")
        if np.any(np.diff(t) <= np.timedelta64(0, "s")):
            raise ValidationError(f"logger {self.sensor!r}: timestamps must be strictly increasing")
        if self.kind not in ("temperature", "pressure"):
            raise ValidationError(f"unknown logger kind {self.kind!r}")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def seconds(self) -> np.ndarray:
        return self.times.astype(np.int64).astype(float)

    @property
    def cadence(self) -> float:
        """Median sampling step in seconds."""
        return float(np.median(np.diff(self.seconds)))

    def gaps(self, max_gap: float = 6 * HOUR) -> list:
        """``(start, end)`` timestamps of steps longer than ``max_gap`` seconds."""
        d = np.diff(self.seconds)
        return [(self.times[i], self.times[i + 1]) for i in np.flatnonzero(d > max_gap)]

    def span_days(self) -> float:
        return (self.seconds[-1] - self.seconds[0]) / DAY

    def with_values(self, values) -> "LoggerSeries":
        return LoggerSeries(self.sensor, self.depth, self.times, values, self.kind)

    def shifted(self, seconds: float) -> "LoggerSeries":
        return LoggerSeries(self.sensor, self.depth, self.times + np.timedelta64(int(round(seconds)), "s"),
                            self.values, self.kind)


@dataclass(frozen=True)
class IceInterval:
    freeze_up: date | None
    break_up: date | None
    method: str
    status: str = "ok"
    note: str = ""
    diagnostics: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.freeze_up is not None and self.break_up is not None and not self.freeze_up < self.break_up:
            raise ValidationError("freeze_up must precede break_up")

    def to_dict(self) -> dict:
        iso = lambda d: None if d is None else d.isoformat()
        return {"method": self.method, "freeze_up": iso(self.freeze_up), "break_up": iso(self.break_up),
                "status": self.status, "note": self.note}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


# regular grid, running statistics, daily evaluation

@dataclass(frozen=True, eq=False)
class _Regular:
    t: np.ndarray  # seconds
    x: np.ndarray  # NaN inside long gaps
    step: float


def _regularize(s: LoggerSeries, step: float | None = None, max_gap: float = 6 * HOUR) -> _Regular:
    """Linear interpolation onto a grid of whole multiples of ``step``; longer gaps stay NaN."""
    sec = s.seconds
    ok = np.isfinite(s.values)
    sec, val = sec[ok], s.values[ok]
    if sec.size < 2:
        raise InsufficientDataError(f"logger {s.sensor!r} has fewer than 2 valid samples")
    step = step or float(np.median(np.diff(sec)))
    t = np.arange(math.ceil(sec[0] / step), math.floor(sec[-1] / step) + 1) * step
    x = np.interp(t, sec, val)
    k = np.clip(np.searchsorted(sec, t, side="right"), 1, sec.size - 1)
    gap = (sec[k] - sec[k - 1]) > max_gap
    exact = np.isin(t, sec)
    x[gap & ~exact] = np.nan
    return _Regular(t, x, step)


def _running_mean(x: np.ndarray, n: int) -> np.ndarray:
    """Centered mean over ``n`` samples ignoring NaN.

    The window narrows symmetrically at the ends, so a linear trend is
    removed exactly everywhere.
    """
    ok = np.isfinite(x)
    m = x.size
    h = np.minimum(np.minimum(np.arange(m), m - 1 - np.arange(m)), n // 2)
    cs = np.r_[0.0, np.cumsum(np.where(ok, x, 0.0))]
    cn = np.r_[0, np.cumsum(ok)]
    lo, hi = np.arange(m) - h, np.arange(m) + h + 1
    den = cn[hi] - cn[lo]
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(ok & (den > 0), (cs[hi] - cs[lo]) / den, np.nan)


def _highpass(r: _Regular, hours: float = 24.0) -> np.ndarray:
    n = max(1, int(round(hours * HOUR / r.step)))
    return r.x - _running_mean(r.x, n | 1)


def _to_date(seconds: float) -> date:
    return (datetime(1970, 1, 1) + timedelta(seconds=seconds)).date()


def _decision_days(t0: float, t1: float) -> list:
    first, last = _to_date(t0), _to_date(t1)
    return [first + timedelta(days=i) for i in range((last - first).days + 1)]


def _epoch(d: date, hour: float) -> float:
    return (datetime(d.year, d.month, d.day) - datetime(1970, 1, 1)).total_seconds() + hour * HOUR


def _daily_windows(r: _Regular, window_hours: float, hour: float, min_valid: float = 0.8):
    """Yield ``(day, index slice)`` for windows centered on each day's decision time."""
    half = window_hours * HOUR / 2
    need = min_valid * window_hours * HOUR / r.step
    for d in _decision_days(r.t[0], r.t[-1]):
        c = _epoch(d, hour)
        if c - half < r.t[0] - r.step / 2 or c + half > r.t[-1] + r.step / 2:
            yield d, None
            continue
        i0, i1 = np.searchsorted(r.t, [c - half, c + half], side="left")
        sl = slice(i0, i1)
        yield d, (sl if np.isfinite(r.x[sl]).sum() >= need else None)


def _sustained(cond: np.ndarray, start: int, days: int):
    """First index >= start where ``cond`` holds for ``days`` consecutive days."""
    run = 0
    for i in range(start, cond.size):
        run = run + 1 if cond[i] else 0
        if run >= days:
            return i - days + 1
    return None


def _background(v: np.ndarray, i: int, days: int, min_count: int) -> float:
    w = v[max(0, i - days):i]
    w = w[np.isfinite(w)]
    return float(np.median(w)) if w.size >= min_count else math.nan


# detectors

def _overlap(a: LoggerSeries, b: LoggerSeries) -> float:
    lo = max(a.seconds[0], b.seconds[0])
    hi = min(a.seconds[-1], b.seconds[-1])
    return (hi - lo) / DAY


def detect_by_correlation(shallow: LoggerSeries, deeper: LoggerSeries, *, window_days: float = 3.0,
                          freeze_corr: float = 0.5, freeze_days: int = 2, break_corr: float = 0.9,
                          identical_tol: float = 0.05, break_days: int = 1, min_overlap_days: float = 30.0,
                          decision_hour: float = 13.0) -> IceInterval:
    """Ice cover decouples the two near-surface temperature records.

    Both series are detrended by a 24 h running mean and correlated over a
    centered ``window_days`` window at each day's decision hour. Freeze-up is
    the first day starting ``freeze_days`` consecutive days of correlation
    below ``freeze_corr``. Break-up is the first later day starting
    ``break_days`` days with correlation above ``break_corr`` and a 24 h mean
    absolute temperature difference below ``identical_tol``.
    """
    if _overlap(shallow, deeper) < min_overlap_days:
        raise InsufficientDataError(f"loggers overlap for less than {min_overlap_days} days")
    step = max(shallow.cadence, deeper.cadence)
    a = _regularize(shallow, step)
    b = _regularize(deeper, step)
    lo, hi = max(a.t[0], b.t[0]), min(a.t[-1], b.t[-1])
    t = np.arange(lo, hi + step / 2, step)
    xa = np.interp(t, a.t, a.x, left=np.nan, right=np.nan)
    xb = np.interp(t, b.t, b.x, left=np.nan, right=np.nan)
    grid = _Regular(t, xa + xb, step)  # NaN wherever either is missing
    ha = _highpass(_Regular(t, xa, step))
    hb = _highpass(_Regular(t, xb, step))
    diff = np.abs(xa - xb)
    days, corr, dmean = [], [], []
    for d, sl in _daily_windows(grid, window_days * 24, decision_hour):
        days.append(d)
        if sl is None:
            corr.append(math.nan)
            dmean.append(math.nan)
            continue
        u, v = ha[sl], hb[sl]
        ok = np.isfinite(u) & np.isfinite(v)
        su, sv = u[ok].std(), v[ok].std()
        corr.append(float(np.corrcoef(u[ok], v[ok])[0, 1]) if su > 0 and sv > 0 else math.nan)
        c = _epoch(d, decision_hour)
        day = (t >= c - 12 * HOUR) & (t < c + 12 * HOUR)
        dmean.append(float(np.nanmean(diff[day])) if np.isfinite(diff[day]).any() else math.nan)
    corr = np.array(corr)
    dmean = np.array(dmean)
    with np.errstate(invalid="ignore"):
        low = corr < freeze_corr
        high = (corr > break_corr) & (dmean < identical_tol)
    diag = {"date": days, "correlation": corr, "abs_diff": dmean}
    i = _sustained(low, 0, freeze_days)
    if i is None:
        return IceInterval(None, None, "correlation", "no freeze detected", diagnostics=diag)
    k = _sustained(high, i + 1, break_days)
    return IceInterval(days[i], None if k is None else days[k], "correlation",
                       "ok" if k is not None else "no break-up detected", diagnostics=diag)


def band_energy(series: LoggerSeries, *, window_days: float = 7.0, band_hours=(20.0, 40.0),
                decision_hour: float = 13.0, max_gap_hours: float = 6.0):
    """Daily seiche-band energy from Hann-windowed periodograms.

    Returns ``(days, energy, prominence)``; prominence is the band's mean
    spectral density over that of the flanking period ranges (half and
    double the band limits), ~1 for white noise.
    """
    lo_h, hi_h = band_hours
    if window_days * 24 < 3 * 30:
        raise ValidationError("spectral window must span at least three 30 h periods")
    if series.span_days() < 60:
        raise InsufficientDataError("spectral detection needs at least 60 days of data")
    if series.cadence > HOUR:
        raise ValidationError("spectral detection needs a cadence of 1 h or finer")
    r = _regularize(series, max_gap=max_gap_hours * HOUR)
    fs = HOUR / r.step  # samples per hour
    days, energy, prom = [], [], []
    for d, sl in _daily_windows(r, window_days * 24, decision_hour, min_valid=1.0):
        days.append(d)
        if sl is None:
            energy.append(math.nan)
            prom.append(math.nan)
            continue
        f, p = periodogram(r.x[sl], fs=fs, window="hann", detrend="linear", scaling="density")
        band = (f >= 1 / hi_h) & (f <= 1 / lo_h)
        flank = ((f >= 1 / (2 * hi_h)) & (f < 1 / hi_h)) | ((f > 1 / lo_h) & (f <= 2 / lo_h))
        df = f[1] - f[0]
        energy.append(float(p[band].sum() * df))
        ref = p[flank].mean()
        prom.append(float(p[band].mean() / ref) if ref > 0 else math.nan)
    return days, np.array(energy), np.array(prom)


def spectral_interval(days, energy, *, background_days: int = 21, drop_decades: float = 2.0,
                      sustain_days: int = 2):
    """Apply the energy-drop rule to a daily band-energy series.

    A drop is ``sustain_days`` days at or below the preceding ice-free
    background (median of the prior ``background_days``) times
    ``10**-drop_decades``. The ice-covered level is the median over that low
    run. Freeze-up is the downward and break-up the following upward crossing
    of the geometric mean of the two levels. Returns ``(freeze, break,
    threshold)`` with ``None`` for events not found.
    """
    e = np.asarray(energy, dtype=float)
    n = e.size
    factor = 10.0 ** -drop_decades
    hit = None
    free = math.nan
    for i in range(1, n - sustain_days + 1):
        bg = _background(e, i, background_days, max(3, background_days // 2))
        if not bg > 0:
            continue
        seg = e[i:i + sustain_days]
        if np.isfinite(seg).all() and (seg <= bg * factor).all():
            hit, free = i, bg
            break
    if hit is None:
        return None, None, math.nan
    j = hit
    while j < n and not (np.isfinite(e[j]) and e[j] > free * factor):
        j += 1
    ice = float(np.nanmedian(e[hit:j]))
    thr = math.sqrt(free * ice)
    f = hit
    while f > 0 and np.isfinite(e[f - 1]) and e[f - 1] < thr:
        f -= 1
    k = next((m for m in range(hit + 1, n) if np.isfinite(e[m]) and e[m] >= thr), None)
    return days[f], (None if k is None else days[k]), thr


def detect_by_spectral_energy(series: LoggerSeries, *, window_days: float = 7.0, band_hours=(20.0, 40.0),
                              background_days: int = 21, drop_decades: float = 2.0, sustain_days: int = 2,
                              min_prominence: float = 10.0, decision_hour: float = 13.0) -> IceInterval:
    """Ice cover damps the ~30 h basin oscillation in a single temperature record."""
    days, e, prom = band_energy(series, window_days=window_days, band_hours=band_hours,
                                decision_hour=decision_hour)
    diag = {"date": days, "band_energy": e, "prominence": prom}
    finite = prom[np.isfinite(prom)]
    if finite.size == 0 or np.percentile(finite, 90) < min_prominence:
        return IceInterval(None, None, "spectral", "no band energy", diagnostics=diag)
    fz, br, thr = spectral_interval(days, e, background_days=background_days, drop_decades=drop_decades,
                                    sustain_days=sustain_days)
    diag["threshold"] = thr
    if fz is None:
        return IceInterval(None, None, "spectral", "no freeze detected", diagnostics=diag)
    return IceInterval(fz, br, "spectral", "ok" if br is not None else "no break-up detected", diagnostics=diag)


def detect_by_pressure(series: LoggerSeries, *, window_days: float = 3.0, background_days: int = 14,
                       factor: float = 5.0, sustain_days: int = 2, min_days: float = 30.0,
                       min_std: float = 1e-4, decision_hour: float = 13.0) -> IceInterval:
    """Ice cover suppresses the high-frequency pressure fluctuations.

    The series is high-passed (minus its 24 h running mean) and its standard
    deviation taken over a centered ``window_days`` window each day.
    Freeze-up starts ``sustain_days`` days below ``1/factor`` of the prior
    ``background_days`` median; break-up is the symmetric recovery above
    ``factor`` times the background. Days whose background std is at most
    ``min_std`` (series units) are not judged. Nothing found gives status
    "no signal".
    """
    if series.span_days() < min_days:
        raise InsufficientDataError(f"pressure detection needs at least {min_days} days of data")
    r = _regularize(series)
    hp = _highpass(r)
    days, sd = [], []
    for d, sl in _daily_windows(r, window_days * 24, decision_hour):
        days.append(d)
        sd.append(float(np.nanstd(hp[sl])) if sl is not None else math.nan)
    sd = np.array(sd)
    diag = {"date": days, "rolling_std": sd}
    n = sd.size
    min_count = max(3, background_days // 2)
    bg = np.array([_background(sd, i, background_days, min_count) for i in range(n)])
    with np.errstate(invalid="ignore"):
        usable = bg > min_std
        down = usable & (sd < bg / factor)
        up = usable & (sd > bg * factor)
    i = _sustained(down, 0, sustain_days)
    if i is None:
        return IceInterval(None, None, "pressure", "no signal", diagnostics=diag)
    k = _sustained(up, i + 1, sustain_days)
    return IceInterval(days[i], None if k is None else days[k], "pressure",
                       "ok" if k is not None else "no break-up detected", diagnostics=diag)


# files

def read_logger_csv(path, sensor: str | None = None, kind: str = "temperature") -> LoggerSeries:
    """Read ``timestamp_iso8601,depth_m,value`` rows (header required)."""
    path = Path(path)
    times, vals, depths = [], [], set()
    with open(path, newline="") as fh:
        rd = numbered_rows(fh)
        first = next(rd, None)
        if first is None or [h.strip().lower() for h in first[1]][:3] != ["timestamp_iso8601", "depth_m", "value"]:
            raise ParseError(f"{path}:{first[0] if first else 1}: expected header timestamp_iso8601,depth_m,value")
        for lineno, rec in rd:
            if len(rec) != 3:
                raise ParseError(f"{path}:{lineno}: expected 3 fields, got {len(rec)}")
            try:
                times.append(np.datetime64(datetime.fromisoformat(rec[0].strip()).replace(tzinfo=None), "s"))
                depths.add(float(rec[1]))
                vals.append(float(rec[2]) if rec[2].strip() else math.nan)
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
    if len(depths) > 1:
        raise ParseError(f"{path}: one logger per file expected, found depths {sorted(depths)}")
    if not times:
        raise ParseError(f"{path}: no samples")
    try:
        return LoggerSeries(sensor or path.stem, depths.pop(), np.array(times), np.array(vals), kind)
    except ValidationError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def write_logger_csv(path, s: LoggerSeries) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp_iso8601", "depth_m", "value"])
        for t, v in zip(s.times, s.values):
            w.writerow([str(t), repr(float(s.depth)), "" if np.isnan(v) else repr(float(v))])


def write_diagnostics_csv(path, intervals) -> None:
    """One row per day with every diagnostic column of the given detector results."""
    cols = {}
    for iv in intervals:
        dg = iv.diagnostics
        for name, v in dg.items():
            if name in ("date", "threshold"):
                continue
            cols[f"{iv.method}_{name}"] = dict(zip(dg["date"], v))
    days = sorted({d for c in cols.values() for d in c})
    names = sorted(cols)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date"] + names)
        for d in days:
            row = [d.isoformat()]
            for n in names:
                v = cols[n].get(d, math.nan)
                row.append("" if not np.isfinite(v) else f"{v:.9g}")
            w.writerow(row)
