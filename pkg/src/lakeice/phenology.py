"""Two-step ice phenology from lake-mean NIR reflectance and water temperature.

Step one labels days frozen or open from the share of bright (or dark)
NIR pixels. Those days supply water-temperature samples whose percentiles
become the thresholds of step two, where a day qualifies as frozen (open)
when most clear pixels are colder (warmer) than the threshold. Short runs
are suppressed and the surviving season is dated.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from datetime import date, timedelta
from enum import IntEnum
from fractions import Fraction
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._csv import numbered_rows
from .exceptions import InsufficientDataError, ParseError, ValidationError

NIR_FROZEN = 0.40
NIR_OPEN = 0.15
MAJORITY = 0.70
FALLBACK_THRESHOLD = 273.15
MIN_THRESHOLD_SAMPLES = 10


class DayState(IntEnum):
    OPEN = 0
    FROZEN = 1
    UNDECIDED = 2
    MISSING = 3


@dataclass(frozen=True)
class DayObservation:
    """Clear clean-pixel values of one processable acquisition."""

    day: date
    nir: np.ndarray
    lswt: np.ndarray


@dataclass
class DailyLakeSeries:
    """Per-day lake aggregates over a contiguous date range; missing values are NaN."""

    start: date
    mean_nir: np.ndarray
    mean_lswt: np.ndarray
    frac_nir_gt: np.ndarray
    frac_nir_lt: np.ndarray
    frac_lswt_frozen: np.ndarray
    frac_lswt_open: np.ndarray
    n_obs: np.ndarray

    COLUMNS = ("date", "mean_nir", "mean_lswt", "frac_nir_gt", "frac_nir_lt",
               "frac_lswt_frozen", "frac_lswt_open", "n_obs")

    def __len__(self):
        return len(self.n_obs)

    @property
    def dates(self) -> list[date]:
        return [self.start + timedelta(days=i) for i in range(len(self))]

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.COLUMNS)
            cols = [self.mean_nir, self.mean_lswt, self.frac_nir_gt, self.frac_nir_lt,
                    self.frac_lswt_frozen, self.frac_lswt_open]
            for i, d in enumerate(self.dates):
                w.writerow([d.isoformat()] + ["" if np.isnan(c[i]) else repr(float(c[i])) for c in cols]
                           + [int(self.n_obs[i])])

    @classmethod
    def from_csv(cls, path) -> "DailyLakeSeries":
        path = Path(path)
        rows = []
        with path.open(newline="") as fh:
            reader = numbered_rows(fh)
            first = next(reader, (1, ()))
            if tuple(first[1]) != cls.COLUMNS:
                raise ParseError(f"{path}:{first[0]}: expected header {','.join(cls.COLUMNS)}")
            for lineno, row in reader:
                if len(row) != len(cls.COLUMNS):
                    raise ParseError(f"{path}:{lineno}: expected {len(cls.COLUMNS)} columns")
                try:
                    rows.append((date.fromisoformat(row[0]),
                                 [float(v) if v else np.nan for v in row[1:7]], int(row[7] or 0)))
                except ValueError as exc:
                    raise ParseError(f"{path}:{lineno}: {exc}") from None
        if not rows:
            raise ParseError(f"{path}: no rows")
        for (d0, _, _), (d1, _, _) in zip(rows, rows[1:]):
            if (d1 - d0).days != 1:
                raise ParseError(f"{path}: dates must be consecutive days ({d0} -> {d1})")
        vals = np.array([r[1] for r in rows], dtype=float)
        return cls(rows[0][0], *vals.T, np.array([r[2] for r in rows]))


def aggregate_daily(observations, nir_frozen: float = NIR_FROZEN, nir_open: float = NIR_OPEN,
                    thr_frozen: float | None = None, thr_open: float | None = None,
                    start: date | None = None, end: date | None = None) -> DailyLakeSeries:
    """Pool each day's clear pixels over its acquisitions and summarize them.

    Days without observations are kept as missing. The LSWT fractions are
    filled only when the corresponding threshold is given.
    """
    obs = sorted(observations, key=lambda o: o.day)
    if not obs and (start is None or end is None):
        raise InsufficientDataError("no observations to aggregate")
    start = start or obs[0].day
    end = end or obs[-1].day
    n = (end - start).days + 1
    if n < 1:
        raise ValidationError("end date precedes start date")
    nir = [[] for _ in range(n)]
    lswt = [[] for _ in range(n)]
    for o in obs:
        i = (o.day - start).days
        if 0 <= i < n:
            nir[i].append(np.asarray(o.nir, dtype=float).ravel())
            lswt[i].append(np.asarray(o.lswt, dtype=float).ravel())

    out = {k: np.full(n, np.nan) for k in ("mn", "ml", "gt", "lt", "ff", "fo")}
    n_obs = np.zeros(n, dtype=int)
    for i in range(n):
        v = np.concatenate(nir[i]) if nir[i] else np.empty(0)
        v = v[np.isfinite(v)]
        t = np.concatenate(lswt[i]) if lswt[i] else np.empty(0)
        t = t[np.isfinite(t)]
        n_obs[i] = len(nir[i]) if (v.size or t.size) else 0
        if v.size:
            out["mn"][i] = v.mean()
            out["gt"][i] = np.mean(v > nir_frozen)
            out["lt"][i] = np.mean(v < nir_open)
        if t.size:
            out["ml"][i] = t.mean()
            if thr_frozen is not None:
                out["ff"][i] = np.mean(t < thr_frozen)
            if thr_open is not None:
                out["fo"][i] = np.mean(t > thr_open)
    return DailyLakeSeries(start, out["mn"], out["ml"], out["gt"], out["lt"], out["ff"], out["fo"], n_obs)


def _centered_windows(x: np.ndarray, half: int) -> np.ndarray:
    """Rows of a NaN-padded ``(n, 2*half+1)`` centered window view."""
    padded = np.concatenate([np.full(half, np.nan), x, np.full(half, np.nan)])
    return sliding_window_view(padded, 2 * half + 1)


def _shrinking_median(v: np.ndarray, window: int) -> np.ndarray:
    half = window // 2
    n = v.size
    w = _centered_windows(v, half)
    idx = np.arange(n)
    h = np.minimum(half, np.minimum(idx, n - 1 - idx))
    offsets = np.arange(-half, half + 1)
    return np.nanmedian(np.where(np.abs(offsets)[None, :] <= h[:, None], w, np.nan), axis=1)


def rolling_nanmedian(x, window: int = 3) -> np.ndarray:
    """Running median over consecutive valid samples, skipping gaps.

    Windows shrink symmetrically at the ends; missing samples stay missing.
    """
    x = np.asarray(x, dtype=float)
    out = np.full(x.shape, np.nan)
    ok = np.isfinite(x)
    if ok.any():
        out[ok] = _shrinking_median(x[ok], window)
    return out


def running_mean(x, window: int) -> np.ndarray:
    """Centered running mean that shrinks symmetrically near the series ends; NaN ignored."""
    x = np.asarray(x, dtype=float)
    n = x.size
    half = window // 2
    idx = np.arange(n)
    h = np.minimum(half, np.minimum(idx, n - 1 - idx))
    ok = np.isfinite(x)
    cs = np.concatenate([[0.0], np.cumsum(np.where(ok, x, 0.0))])
    cn = np.concatenate([[0], np.cumsum(ok)])
    s = cs[idx + h + 1] - cs[idx - h]
    c = cn[idx + h + 1] - cn[idx - h]
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(c > 0, s / np.maximum(c, 1), np.nan)


def interpolate_gaps(x) -> np.ndarray:
    """Linear interpolation across interior NaN gaps; leading and trailing NaN stay."""
    x = np.asarray(x, dtype=float).copy()
    ok = np.flatnonzero(np.isfinite(x))
    if ok.size >= 2:
        inner = np.arange(ok[0], ok[-1] + 1)
        x[inner] = np.interp(inner, ok, x[ok])
    return x


def _despike_once(x: np.ndarray, k: float, window: int) -> np.ndarray:
    pos = np.flatnonzero(np.isfinite(x))
    v = x[pos]
    w = _centered_windows(v, window // 2)
    med = np.nanmedian(w, axis=1)
    mad = np.nanmedian(np.abs(w - med[:, None]), axis=1)
    keep = np.abs(v - med) <= k * mad
    y = np.full(x.shape, np.nan)
    y[pos[keep]] = _shrinking_median(v[keep], 3)
    return interpolate_gaps(y)


def despike(series, k: float = 3.0, window: int = 7, max_iter: int = 50) -> np.ndarray:
    """Remove spikes, apply a 3-day running median and fill interior gaps.

    A point is a spike when it deviates from the running median of the
    ``window`` nearest valid samples by more than ``k`` times their median
    absolute deviation. Windows count valid samples, not calendar days. The three passes repeat until the output stops
    changing (to 1e-12), so the result is a fixed point up to round-off.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise ValidationError("despike expects a 1-D series")
    if not np.isfinite(x).any():
        raise InsufficientDataError("series has no valid values")
    if window < 3 or window % 2 == 0:
        raise ValidationError("despike window must be odd and >= 3")
    y = x
    for _ in range(max_iter):
        z = _despike_once(y, k, window)
        done = np.allclose(z, y, rtol=0, atol=1e-12, equal_nan=True)
        y = z
        if done:
            break
    return y


@dataclass(frozen=True)
class BoundCurves:
    lower: np.ndarray
    upper: np.ndarray
    lower_raw: np.ndarray
    upper_raw: np.ndarray


def bound_curves(series, window: int = 15, lower_mean: int = 15, upper_mean: int = 7) -> BoundCurves:
    """Lower (upper) envelope: per day the largest minimum (smallest maximum) over
    the ``window``-day windows containing it, then smoothed by running means.

    The smoothed lower curve is capped by the smoothed upper curve so the
    envelope never inverts at sharp transitions.
    """
    x = np.asarray(series, dtype=float)
    n = x.size
    if n < window:
        raise InsufficientDataError(f"series of {n} days is shorter than the {window}-day window")
    w = sliding_window_view(x, window)
    with np.errstate(all="ignore"):
        valid = np.isfinite(w).any(axis=1)
        wmin = np.where(valid, np.nanmin(np.where(valid[:, None], w, 0.0), axis=1), np.nan)
        wmax = np.where(valid, np.nanmax(np.where(valid[:, None], w, 0.0), axis=1), np.nan)
    # day d lies in windows s = d-window+1 .. d
    pad = np.full(window - 1, np.nan)
    per_day_min = sliding_window_view(np.concatenate([pad, wmin, pad]), window)
    per_day_max = sliding_window_view(np.concatenate([pad, wmax, pad]), window)
    with np.errstate(all="ignore"):
        lower_raw = np.nanmax(np.where(np.isnan(per_day_min), -np.inf, per_day_min), axis=1)
        upper_raw = np.nanmin(np.where(np.isnan(per_day_max), np.inf, per_day_max), axis=1)
    lower_raw = np.where(np.isfinite(lower_raw), lower_raw, np.nan)
    upper_raw = np.where(np.isfinite(upper_raw), upper_raw, np.nan)
    lower = running_mean(lower_raw, lower_mean)
    upper = running_mean(upper_raw, upper_mean)
    lower = np.where(np.isfinite(upper), np.fmin(lower, upper), lower)
    return BoundCurves(lower, upper, lower_raw, upper_raw)


def nir_state(frac_above, frac_below, majority: float = MAJORITY) -> np.ndarray:
    """Step-one day states from the bright and dark NIR pixel fractions."""
    a = np.asarray(frac_above, dtype=float)
    b = np.asarray(frac_below, dtype=float)
    out = np.full(np.broadcast(a, b).shape, DayState.UNDECIDED, dtype=np.uint8)
    with np.errstate(invalid="ignore"):
        out[b >= majority] = DayState.OPEN
        out[a >= majority] = DayState.FROZEN
    out[np.isnan(a) & np.isnan(b)] = DayState.MISSING
    return out


def nearest_rank(values, pct: float) -> float:
    """The ``ceil(pct/100 * n)``-th smallest value (rank 1 for pct = 0)."""
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise InsufficientDataError("no samples for percentile")
    if not 0 <= pct <= 100:
        raise ValidationError("percentile must lie in [0, 100]")
    rank = max(1, math.ceil(Fraction(pct) * v.size / 100))
    return float(v[rank - 1])


@dataclass(frozen=True)
class LswtThresholds:
    thr_frozen: float
    thr_open: float
    n_frozen: int
    n_open: int
    fallback_frozen: bool = False
    fallback_open: bool = False
    warnings: tuple[str, ...] = ()


def lswt_thresholds(frozen_samples, open_samples, p_frozen: float = 90, p_open: float = 10,
                    min_samples: int = MIN_THRESHOLD_SAMPLES,
                    fallback: float = FALLBACK_THRESHOLD) -> LswtThresholds:
    """Nearest-rank percentiles of water temperature on NIR-frozen and NIR-open days."""
    fz = np.asarray(frozen_samples, dtype=float).ravel()
    op = np.asarray(open_samples, dtype=float).ravel()
    fz = fz[np.isfinite(fz)]
    op = op[np.isfinite(op)]
    warns = []
    thr = {}
    for name, s, p in (("frozen", fz, p_frozen), ("open", op, p_open)):
        if s.size == 0:
            thr[name] = None
            warns.append(f"no {name} samples; using fallback threshold {fallback} K")
            continue
        if s.size < min_samples:
            warns.append(f"only {s.size} {name} samples (< {min_samples}); threshold unreliable")
        thr[name] = nearest_rank(s, p)
    tf = thr["frozen"] if thr["frozen"] is not None else fallback
    to = thr["open"] if thr["open"] is not None else fallback
    if to < tf:
        warns.append(f"open-water threshold {to:.2f} K is below the frozen threshold {tf:.2f} K")
    return LswtThresholds(tf, to, int(fz.size), int(op.size), thr["frozen"] is None,
                          thr["open"] is None, tuple(warns))


@dataclass
class PhenologyEvents:
    lake: str = ""
    FUS: date | None = None
    FUE: date | None = None
    BUS: date | None = None
    BUE: date | None = None
    uncertainties_days: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    status: str = "ok"
    method: str = "two-step"

    @property
    def ice_on(self):
        return self.FUE

    @property
    def ice_off(self):
        return self.BUS

    def to_dict(self) -> dict:
        iso = lambda d: d.isoformat() if d else None
        return {"lake": self.lake, "FUS": iso(self.FUS), "FUE": iso(self.FUE), "BUS": iso(self.BUS),
                "BUE": iso(self.BUE), "ice_on": iso(self.ice_on), "ice_off": iso(self.ice_off),
                "uncertainties_days": dict(sorted(self.uncertainties_days.items())),
                "warnings": list(self.warnings), "status": self.status, "method": self.method}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _runs(states: np.ndarray):
    """(value, start, stop) for maximal constant runs."""
    if states.size == 0:
        return []
    edges = np.flatnonzero(np.diff(states)) + 1
    starts = np.r_[0, edges]
    stops = np.r_[edges, states.size]
    return [(int(states[a]), int(a), int(b)) for a, b in zip(starts, stops)]


def fill_missing(states: np.ndarray) -> np.ndarray:
    """Missing days take the state of their neighbours when both sides agree."""
    s = states.copy()
    for v, a, b in _runs(states):
        if v == DayState.MISSING and a > 0 and b < s.size and states[a - 1] == states[b] \
                and states[b] in (DayState.FROZEN, DayState.OPEN):
            s[a:b] = states[b]
    return s


def qualify_days(frac_frozen, frac_open, majority: float = MAJORITY) -> np.ndarray:
    ff = np.asarray(frac_frozen, dtype=float)
    fo = np.asarray(frac_open, dtype=float)
    with np.errstate(invalid="ignore"):
        fz = ff >= majority
        op = fo >= majority
    s = np.full(ff.shape, DayState.UNDECIDED, dtype=np.uint8)
    s[fz & ~op] = DayState.FROZEN
    s[op & ~fz] = DayState.OPEN
    s[np.isnan(ff) & np.isnan(fo)] = DayState.MISSING
    return s


def suppress_short_runs(states: np.ndarray, window: int) -> np.ndarray:
    """Frozen and open runs shorter than ``window`` days become undecided."""
    s = states.copy()
    for v, a, b in _runs(states):
        if v in (DayState.FROZEN, DayState.OPEN) and b - a < window:
            s[a:b] = DayState.UNDECIDED
    return s


def extract_phenology(frac_frozen, frac_open, start: date, window: int = 15,
                      majority: float = MAJORITY, lake: str = "") -> PhenologyEvents:
    """Date freeze-up and break-up from per-day qualified fractions.

    Parameters
    ----------
    frac_frozen, frac_open : array-like
        Per-day share of clear pixels colder than the frozen threshold and
        warmer than the open threshold; NaN marks a missing day.
    start : date
        Date of the first element.
    window : int
        Frozen and open runs shorter than this many days are discarded.

    Notes
    -----
    Surviving frozen runs not separated by a surviving open run form one
    ice season; the season with most frozen days is dated. FUE is its first
    day, BUS the first open-qualified day after it ends, FUS the last
    open-qualified day before FUE and BUE the first day of a surviving open
    run at or after BUS. The uncertainty of each event is the number of
    missing days immediately before it.
    """
    if window < 1:
        raise ValidationError("suppression window must be >= 1")
    raw = qualify_days(frac_frozen, frac_open, majority)
    filled = fill_missing(raw)
    kept = suppress_short_runs(filled, window)
    ev = PhenologyEvents(lake=lake)
    day = lambda i: start + timedelta(days=int(i))

    runs = _runs(kept)
    seasons = []  # [first frozen day, stop of last frozen run, frozen day count]
    separated = True
    for v, a, b in runs:
        if v == DayState.OPEN:
            separated = True
        elif v == DayState.FROZEN:
            if separated:
                seasons.append([a, b, b - a])
                separated = False
            else:
                seasons[-1][1] = b
                seasons[-1][2] += b - a
    if not seasons:
        ev.status = "no freeze detected"
        return ev
    fue, end, _ = max(seasons, key=lambda s: (s[2], -s[0]))
    ev.FUE = day(fue)
    open_days = np.flatnonzero(filled == DayState.OPEN)
    before = open_days[open_days < fue]
    after = open_days[open_days >= end]
    bus = None
    if before.size:
        ev.FUS = day(before[-1])
    if after.size:
        bus = int(after[0])
        ev.BUS = day(bus)
        for v, a, b in runs:
            if v == DayState.OPEN and a >= bus:
                ev.BUE = day(a)
                break
    else:
        ev.status = "no break-up detected"

    def gap_before(i):
        k = 0
        while i - k - 1 >= 0 and raw[i - k - 1] == DayState.MISSING:
            k += 1
        return k

    for name in ("FUS", "FUE", "BUS", "BUE"):
        d = getattr(ev, name)
        if d is not None:
            ev.uncertainties_days[name] = gap_before((d - start).days)
    return ev


@dataclass
class TwoStepResult:
    events: PhenologyEvents
    series: DailyLakeSeries
    thresholds: LswtThresholds
    nir_states: np.ndarray
    nir_smoothed: np.ndarray
    curves: BoundCurves | None


def two_step_phenology(observations, lake: str = "", window: int = 15, majority: float = MAJORITY,
                       nir_frozen: float = NIR_FROZEN, nir_open: float = NIR_OPEN,
                       start: date | None = None, end: date | None = None) -> TwoStepResult:
    """Full chain: daily aggregation, NIR states, LSWT thresholds, event dating."""
    obs = list(observations)
    series = aggregate_daily(obs, nir_frozen, nir_open, start=start, end=end)
    states = nir_state(series.frac_nir_gt, series.frac_nir_lt, majority)
    frozen_days = {series.start + timedelta(days=int(i)) for i in np.flatnonzero(states == DayState.FROZEN)}
    open_days = {series.start + timedelta(days=int(i)) for i in np.flatnonzero(states == DayState.OPEN)}
    fz = [np.asarray(o.lswt, float).ravel() for o in obs if o.day in frozen_days]
    op = [np.asarray(o.lswt, float).ravel() for o in obs if o.day in open_days]
    thr = lswt_thresholds(np.concatenate(fz) if fz else [], np.concatenate(op) if op else [])
    series = aggregate_daily(obs, nir_frozen, nir_open, thr.thr_frozen, thr.thr_open,
                             start=series.start, end=series.dates[-1])
    events = extract_phenology(series.frac_lswt_frozen, series.frac_lswt_open, series.start,
                               window, majority, lake)
    events.warnings.extend(thr.warnings)
    smoothed = despike(series.mean_nir) if np.isfinite(series.mean_nir).any() else series.mean_nir
    curves = bound_curves(smoothed, window) if len(series) >= window else None
    return TwoStepResult(events, series, thr, states, smoothed, curves)
