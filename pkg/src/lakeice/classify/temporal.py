"""Daily score aggregation, multi-temporal smoothing, frozen fractions and ice dates."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .._csv import numbered_rows, parse_date
from ..exceptions import ParseError, ValidationError

SCORE_CUT = 50.0
DEFAULT_FROZEN_THRESHOLD = 90.0
LABELS = ("Y", "N", "nd")


@dataclass(frozen=True, eq=False)
class DailyScoreCube:
    """Per-day, per-pixel scores in [0, 100] (0 frozen, 100 non-frozen); NaN is missing.

    ``scores`` has shape ``(n_days, n_pixels)`` over consecutive calendar days
    starting at ``start``.
    """

    start: date
    scores: np.ndarray
    lake: str = ""

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=float)
        if s.ndim != 2:
            raise ValidationError("score cube must be 2-D (days, pixels)")
        if np.any((s < 0) | (s > 100)):
            raise ValidationError("scores must lie in [0, 100]")
        object.__setattr__(self, "scores", s)

    @property
    def dates(self) -> list:
        return [self.start + timedelta(days=i) for i in range(self.scores.shape[0])]

    def frozen(self) -> np.ndarray:
        """1.0 frozen, 0.0 non-frozen, NaN missing."""
        return frozen_state(self.scores)


def frozen_state(scores) -> np.ndarray:
    """Scores above 50 are non-frozen, 50 and below frozen; NaN stays missing."""
    s = np.asarray(scores, dtype=float)
    with np.errstate(invalid="ignore"):
        return np.where(np.isnan(s), np.nan, (s <= SCORE_CUT).astype(float))


def daily_aggregate(acquisitions, start: date | None = None, end: date | None = None,
                    lake: str = "") -> DailyScoreCube:
    """Average the per-pixel scores of all acquisitions of each day.

    Parameters
    ----------
    acquisitions : iterable of (date, array_like)
        Scores of one acquisition for every pixel of the lake, NaN where
        the pixel was not scored (cloud).
    start, end : date, optional
        Calendar span of the cube; defaults to the span of the input.
    """
    acq = [(d, np.asarray(s, dtype=float).ravel()) for d, s in acquisitions]
    if not acq:
        raise ValidationError("no acquisitions to aggregate")
    n_pix = {s.size for _, s in acq}
    if len(n_pix) != 1:
        raise ValidationError(f"acquisitions disagree on pixel count: {sorted(n_pix)}")
    start = start or min(d for d, _ in acq)
    end = end or max(d for d, _ in acq)
    n_days = (end - start).days + 1
    if n_days < 1:
        raise ValidationError("end precedes start")
    total = np.zeros((n_days, n_pix.pop()))
    count = np.zeros_like(total)
    for d, s in acq:
        k = (d - start).days
        if not 0 <= k < n_days:
            continue
        ok = ~np.isnan(s)
        total[k, ok] += s[ok]
        count[k, ok] += 1
    with np.errstate(invalid="ignore"):
        mean = np.where(count > 0, total / np.maximum(count, 1), np.nan)
    return DailyScoreCube(start, mean, lake)


def gaussian_weights(window: int) -> np.ndarray:
    """Normalized Gaussian kernel of ``window`` taps with sigma = window / 4."""
    _check_window(window)
    h = window // 2
    o = np.arange(-h, h + 1, dtype=float)
    w = np.exp(-0.5 * (o / (window / 4.0)) ** 2)
    return w / w.sum()


def _check_window(window: int) -> None:
    if window < 1 or window % 2 == 0:
        raise ValidationError(f"window must be odd and >= 1, got {window}")


def mta_smooth(scores, scheme: str = "mean", window: int = 3):
    """Centered moving mean, median or Gaussian along the day axis.

    Each day uses only the available (non-NaN) days of its calendar window,
    and the window is narrowed symmetrically near the first and last day.
    Gaussian weights are renormalized over the days used. Days without a score
    stay missing. Accepts a ``DailyScoreCube`` or an array with days on
    axis 0 and returns the same kind.
    """
    _check_window(window)
    if scheme not in ("mean", "median", "gaussian"):
        raise ValidationError(f"unknown smoothing scheme {scheme!r}")
    cube = scores if isinstance(scores, DailyScoreCube) else None
    x = np.asarray(cube.scores if cube is not None else scores, dtype=float)
    if window == 1:
        out = x.copy()
    else:
        h = window // 2
        pad = [(h, h)] + [(0, 0)] * (x.ndim - 1)
        win = sliding_window_view(np.pad(x, pad, constant_values=np.nan), window, axis=0)
        # the window is cut symmetrically at the series ends so every estimate stays centered
        t = np.arange(x.shape[0])
        reach = np.minimum(np.minimum(t, x.shape[0] - 1 - t), h)
        inside = np.abs(np.arange(-h, h + 1))[None, :] <= reach[:, None]
        inside = inside.reshape(inside.shape[:1] + (1,) * (x.ndim - 1) + inside.shape[1:])
        win = np.where(inside, win, np.nan)
        have = ~np.isnan(win)
        with np.errstate(invalid="ignore", divide="ignore"):
            if scheme == "median":
                out = np.full(x.shape, np.nan)
                ok = have.any(axis=-1)
                out[ok] = np.nanmedian(win[ok], axis=-1)
            else:
                w = np.ones(window) if scheme == "mean" else gaussian_weights(window)
                ww = np.where(have, w, 0.0)
                out = np.where(have, win, 0.0) @ w / ww.sum(axis=-1)
                # a weighted mean cannot leave the window's range; clip the rounding
                out = np.clip(out, np.fmin.reduce(win, axis=-1), np.fmax.reduce(win, axis=-1))
        out = np.where(np.isnan(x), np.nan, out)
    if cube is not None:
        return DailyScoreCube(cube.start, out, cube.lake)
    return out


def frozen_fraction(day_scores) -> float:
    """Percent of scored pixels classified frozen; NaN when none was scored."""
    st = frozen_state(day_scores)
    n = int((~np.isnan(st)).sum())
    if n == 0:
        return math.nan
    return 100.0 * int(np.nansum(st)) / n


def label_day(pct_fp, threshold: float = DEFAULT_FROZEN_THRESHOLD) -> str:
    """``Y`` when %FP >= threshold, ``N`` otherwise, ``nd`` when missing."""
    if pct_fp is None or math.isnan(pct_fp):
        return "nd"
    return "Y" if pct_fp >= threshold else "N"


@dataclass(frozen=True, eq=False)
class DailyLabelSeries:
    dates: tuple
    pct_fp: np.ndarray
    labels: tuple

    def __post_init__(self):
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "pct_fp", np.asarray(self.pct_fp, dtype=float))
        if not len(self.dates) == len(self.labels) == self.pct_fp.size:
            raise ValidationError("dates, pct_fp and labels differ in length")
        bad = set(self.labels) - set(LABELS)
        if bad:
            raise ValidationError(f"unknown day labels {sorted(bad)}")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise ValidationError("label dates must be strictly increasing")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["date", "pct_fp", "label"])
            for d, p, lab in zip(self.dates, self.pct_fp, self.labels):
                w.writerow([d.isoformat(), "" if np.isnan(p) else _fmt_pct(p), lab])

    @classmethod
    def from_csv(cls, path) -> "DailyLabelSeries":
        path = Path(path)
        dates, pct, labels = [], [], []
        with open(path, newline="") as fh:
            for lineno, rec in numbered_rows(fh):
                if rec[0].strip().lower() == "date":
                    continue
                where = f"{path}:{lineno}: "
                if len(rec) != 3:
                    raise ParseError(f"{where}expected date,pct_fp,label")
                try:
                    dates.append(parse_date(rec[0]))
                    pct.append(float(rec[1]) if rec[1].strip() else math.nan)
                except ValueError as exc:
                    raise ParseError(f"{where}{exc}") from exc
                lab = rec[2].strip()
                if lab not in LABELS:
                    raise ParseError(f"{where}unknown label {lab!r}")
                labels.append(lab)
        try:
            return cls(dates, pct, labels)
        except ValidationError as exc:
            raise ParseError(f"{path}: {exc}") from exc


def _fmt_pct(p: float) -> str:
    return str(int(p)) if float(p).is_integer() else f"{p:.1f}"


def daily_labels(cube: DailyScoreCube, threshold: float = DEFAULT_FROZEN_THRESHOLD,
                 processable=None) -> DailyLabelSeries:
    """%FP and Y/N/nd label for every day of the cube.

    ``processable`` optionally marks days to keep; the others become nd.
    """
    pct = np.array([frozen_fraction(row) for row in cube.scores])
    if processable is not None:
        pct = np.where(np.asarray(processable, dtype=bool), pct, np.nan)
    return DailyLabelSeries(cube.dates, pct, [label_day(p, threshold) for p in pct])


@dataclass(frozen=True)
class IceDates:
    """Ice-on/off dates with the count of unobserved days right before each.

    ``alternates`` lists the on/off dates of the other frozen spells, if any.
    """

    ice_on: date | None
    ice_off: date | None
    uncertainty_on: int | None = None
    uncertainty_off: int | None = None
    alternates: tuple = ()
    status: str = "ok"
    spells: tuple = field(default=(), repr=False)

    def to_dict(self) -> dict:
        iso = lambda d: None if d is None else d.isoformat()
        return {"ice_on": iso(self.ice_on), "ice_off": iso(self.ice_off),
                "uncertainty_on_days": self.uncertainty_on, "uncertainty_off_days": self.uncertainty_off,
                "alternates": [[iso(a), iso(b)] for a, b in self.alternates], "status": self.status}


def _gap_before(dates, avail, k) -> int:
    """Unobserved calendar days between the previous available day and ``avail[k]``."""
    d = dates[avail[k]]
    prev = dates[avail[k - 1]] if k > 0 else dates[0] - timedelta(days=1)
    return (d - prev).days - 1


def _first_pair(labels, avail, start: int, want: str):
    for k in range(start, len(avail) - 1):
        if labels[avail[k]] == want and labels[avail[k + 1]] == want:
            return k
    return None


def extract_ice_dates(series: DailyLabelSeries) -> IceDates:
    """Ice-on is the first Y day whose next available day is also Y.

    Ice-off is the first N day after ice-on whose next available day is also
    N. Days labelled nd are skipped when looking for the next available day.
    When the lake refreezes after an ice-off, every on/off spell is found;
    the longest spell gives the reported dates and the others are listed as
    alternates.
    """
    labels, dates = series.labels, series.dates
    avail = [i for i, lab in enumerate(labels) if lab != "nd"]
    spells = []
    k = 0
    while True:
        on = _first_pair(labels, avail, k, "Y")
        if on is None:
            break
        off = _first_pair(labels, avail, on + 1, "N")
        spells.append((on, off))
        if off is None:
            break
        k = off + 1
    if not spells:
        return IceDates(None, None, status="no freeze detected")

    def span(s):
        end = dates[avail[s[1]]] if s[1] is not None else dates[-1]
        return (end - dates[avail[s[0]]]).days

    best = max(spells, key=span)
    on, off = best
    as_date = lambda kk: None if kk is None else dates[avail[kk]]
    alternates = tuple((as_date(a), as_date(b)) for a, b in spells if (a, b) != best)
    return IceDates(as_date(on), as_date(off), _gap_before(dates, avail, on),
                    None if off is None else _gap_before(dates, avail, off), alternates,
                    "ok" if off is not None else "no break-up detected",
                    tuple((as_date(a), as_date(b)) for a, b in spells))
