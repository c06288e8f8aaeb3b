"""Per-day label tables, ice-date summaries and cross-method disagreement flags."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

import numpy as np

from ._csv import numbered_rows, parse_date
from .classify.temporal import DailyLabelSeries, IceDates, _fmt_pct, extract_ice_dates
from .exceptions import ParseError, ValidationError

MAX_DISAGREEMENT_DAYS = 2


@dataclass(frozen=True)
class MethodResult:
    """Ice dates of one method on one lake, with its daily labels when it has them."""

    lake: str
    method: str
    ice_on: date | None
    ice_off: date | None
    alternates: tuple = ()
    uncertainty_on: int | None = None
    uncertainty_off: int | None = None
    remarks: str = ""
    daily: DailyLabelSeries | None = field(default=None, compare=False, repr=False)

    @classmethod
    def from_daily(cls, lake: str, method: str, daily: DailyLabelSeries) -> "MethodResult":
        r: IceDates = extract_ice_dates(daily)
        remarks = [] if r.status == "ok" else [r.status]
        for name, d, u in (("ice-on", r.ice_on, r.uncertainty_on), ("ice-off", r.ice_off, r.uncertainty_off)):
            if d is not None and u:
                remarks.append(f"{u} unobserved day(s) before {name}")
        return cls(lake, method, r.ice_on, r.ice_off, r.alternates, r.uncertainty_on, r.uncertainty_off,
                   "; ".join(remarks), daily)


def _iso(d) -> str:
    return "" if d is None else d.isoformat()


def daily_table_rows(results) -> tuple:
    """Header and rows of the per-day table for methods that carry daily labels."""
    methods = [r for r in results if r.daily is not None]
    if not methods:
        raise ValidationError("no method with daily labels")
    names = [r.method for r in methods]
    if len(set(names)) != len(names):
        raise ValidationError(f"duplicate method names {names}")
    days = sorted({d for r in methods for d in r.daily.dates})
    lookup = [dict(zip(r.daily.dates, zip(r.daily.labels, r.daily.pct_fp))) for r in methods]
    header = ["date"] + [c for n in names for c in (n, f"{n}_pct_fp")]
    rows = []
    for d in days:
        row = [d.isoformat()]
        for lk in lookup:
            lab, pct = lk.get(d, ("nd", math.nan))
            row += [lab, "" if np.isnan(pct) else _fmt_pct(pct)]
        rows.append(row)
    return header, rows


def read_daily_table(path) -> dict:
    """Inverse of the per-day table: ``{method: DailyLabelSeries}``."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(numbered_rows(fh))
    if not rows or rows[0][1][0] != "date" or len(rows[0][1]) % 2 != 1:
        raise ParseError(f"{path}: expected header date,<method>,<method>_pct_fp,...")
    header = rows[0][1]
    names = header[1::2]
    dates, cols = [], {n: ([], []) for n in names}
    for lineno, rec in rows[1:]:
        if len(rec) != len(header):
            raise ParseError(f"{path}:{lineno}: expected {len(header)} fields")
        try:
            dates.append(parse_date(rec[0]))
            for k, n in enumerate(names):
                cols[n][0].append(rec[1 + 2 * k])
                cols[n][1].append(float(rec[2 + 2 * k]) if rec[2 + 2 * k] else math.nan)
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
    try:
        return {n: DailyLabelSeries(dates, cols[n][1], cols[n][0]) for n in names}
    except ValidationError as exc:
        raise ParseError(f"{path}: {exc}") from exc


@dataclass(frozen=True)
class Disagreement:
    lake: str
    event: str
    method_a: str
    method_b: str
    date_a: date
    date_b: date

    @property
    def days(self) -> int:
        return abs((self.date_a - self.date_b).days)

    @property
    def flagged(self) -> bool:
        return self.days > MAX_DISAGREEMENT_DAYS


def compare_methods(results) -> list:
    """Every pair of methods on the same lake and event where both have a date."""
    out = []
    by_lake = {}
    for r in results:
        by_lake.setdefault(r.lake, []).append(r)
    for lake in sorted(by_lake):
        for a, b in itertools.combinations(by_lake[lake], 2):
            for event in ("ice_on", "ice_off"):
                da, db = getattr(a, event), getattr(b, event)
                if da is not None and db is not None:
                    out.append(Disagreement(lake, event, a.method, b.method, da, db))
    return out


def summary_rows(results) -> tuple:
    pairs = compare_methods(results)
    flagged = {(p.lake, p.event, m) for p in pairs if p.flagged for m in (p.method_a, p.method_b)}
    header = ["lake", "method", "ice_on", "ice_off", "uncertainty_on_days", "uncertainty_off_days",
              "alternates", "flag_ice_on", "flag_ice_off", "remarks"]
    rows = []
    for r in results:
        alt = " ".join(f"{_iso(a)}/{_iso(b)}" for a, b in r.alternates)
        rows.append([r.lake, r.method, _iso(r.ice_on), _iso(r.ice_off),
                     "" if r.uncertainty_on is None else str(r.uncertainty_on),
                     "" if r.uncertainty_off is None else str(r.uncertainty_off), alt,
                     str((r.lake, "ice_on", r.method) in flagged).lower(),
                     str((r.lake, "ice_off", r.method) in flagged).lower(), r.remarks])
    return header, rows


def disagreement_rows(results) -> tuple:
    header = ["lake", "event", "method_a", "method_b", "date_a", "date_b", "diff_days", "flag"]
    rows = [[p.lake, p.event, p.method_a, p.method_b, _iso(p.date_a), _iso(p.date_b), str(p.days),
             str(p.flagged).lower()] for p in compare_methods(results)]
    return header, rows


def _write_csv(path, header, rows, comment: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def summary_text(results) -> str:
    """Fixed-width summary in the layout of the ice-date comparison tables."""
    lines = []
    pairs = compare_methods(results)
    width = max(len("method"), *(len(r.method) for r in results)) + 2
    for lake in sorted({r.lake for r in results}):
        lines.append(f"Lake {lake}")
        lines.append(f"  {'method':<{width}}{'ice-on':<12}{'ice-off':<12}remarks")
        for r in (r for r in results if r.lake == lake):
            on = _iso(r.ice_on) or "nd"
            off = _iso(r.ice_off) or "nd"
            notes = [r.remarks] if r.remarks else []
            if r.alternates:
                notes.append("alternates " + ", ".join(f"{_iso(a) or 'nd'}/{_iso(b) or 'nd'}" for a, b in r.alternates))
            lines.append(f"  {r.method:<{width}}{on:<12}{off:<12}{'; '.join(notes)}".rstrip())
        for p in pairs:
            if p.lake == lake and p.flagged:
                lines.append(f"  ! {p.event} differs by {p.days} days between {p.method_a} and {p.method_b}")
        lines.append("")
    return "\n".join(lines)


def emit_report(results, out_dir, comment: str | None = None) -> list:
    """Write the per-day tables, the summary CSV and text, and the pairwise flags.

    Returns the written paths.
    """
    results = list(results)
    if not results:
        raise ValidationError("report needs at least one method result")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for lake in sorted({r.lake for r in results}):
        lake_results = [r for r in results if r.lake == lake and r.daily is not None]
        if lake_results:
            p = out / f"daily_{lake}.csv"
            _write_csv(p, *daily_table_rows(lake_results), comment=comment)
            written.append(p)
    p = out / "summary.csv"
    _write_csv(p, *summary_rows(results), comment=comment)
    written.append(p)
    p = out / "disagreements.csv"
    _write_csv(p, *disagreement_rows(results), comment=comment)
    written.append(p)
    p = out / "summary.txt"
    p.write_text((f"# {comment}\n" if comment else "") + summary_text(results))
    written.append(p)
    return written
