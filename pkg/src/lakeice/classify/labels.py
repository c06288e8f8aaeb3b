"""Ground-truth label vocabulary, gap filling and spike smoothing."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import timedelta
from pathlib import Path

import numpy as np

from .._csv import numbered_rows, parse_date
from ..exceptions import ParseError

# freezing/melting proceeds w <-> mw <-> mi/ms <-> i/s; c, u, n carry no state
LEVELS = {"w": 0, "mw": 1, "mi": 2, "ms": 2, "i": 3, "s": 3, "c": None, "u": None, "n": None}
LEVEL_CODE = {0: "w", 1: "mw", 2: "mi", 3: "i"}
FROZEN, NON_FROZEN, UNKNOWN = 1, 0, -1


def check_code(code: str, where: str = "") -> str:
    c = code.strip().lower()
    if c not in LEVELS:
        raise ParseError(f"{where}unknown ground-truth code {code!r}; expected one of {sorted(LEVELS)}")
    return c


@dataclass(frozen=True, eq=False)
class EnrichedLabels:
    """Cleaned daily labels.

    ``target`` is 1 (frozen: i, s, mi, ms), 0 (non-frozen: w, mw) or -1
    (unknown). ``transition`` marks the partial states mw, mi and ms, which
    are kept out of training sets.
    """

    codes: tuple
    target: np.ndarray
    transition: np.ndarray

    @property
    def trainable(self) -> np.ndarray:
        return (self.target != UNKNOWN) & ~self.transition


def _fill_unknown_runs(codes: list) -> list:
    out = list(codes)
    n = len(out)
    i = 0
    while i < n:
        if LEVELS[out[i]] is not None:
            i += 1
            continue
        j = i
        while j < n and LEVELS[out[j]] is None:
            j += 1
        if i > 0 and j < n:
            a, b = LEVELS[out[i - 1]], LEVELS[out[j]]
            if a == b and a in (0, 3):
                out[i:j] = [out[i - 1]] * (j - i)
        i = j
    return out


def _smooth_spikes(codes: list) -> list:
    out = list(codes)
    lv = [LEVELS[c] for c in codes]
    for k in range(1, len(codes) - 1):
        a, m, b = lv[k - 1], lv[k], lv[k + 1]
        if a is None or m is None or b is None:
            continue
        if abs(m - a) >= 2 and abs(m - b) >= 2 and (m - a) * (m - b) > 0:
            mid = (a + b) / 2
            level = int(np.ceil(mid)) if m > mid else int(np.floor(mid))
            out[k] = next((codes[t] for t in (k - 1, k + 1) if lv[t] == level), LEVEL_CODE[level])
    return out


def enrich_labels(codes) -> EnrichedLabels:
    """Clean a consecutive daily sequence of ground-truth codes.

    Unknown days (c, u, n) between two fully frozen or two fully open days
    take that state. A single day that jumps two or more levels away from
    both neighbours in the same direction is replaced by the level between
    its neighbours.
    """
    raw = [check_code(c, f"day {i}: ") for i, c in enumerate(codes)]
    clean = _smooth_spikes(_fill_unknown_runs(raw))
    lv = [LEVELS[c] for c in clean]
    target = np.array([UNKNOWN if v is None else (FROZEN if v >= 2 else NON_FROZEN) for v in lv], dtype=np.int8)
    transition = np.array([v in (1, 2) for v in lv], dtype=bool)
    return EnrichedLabels(tuple(clean), target, transition)


def read_label_csv(path) -> tuple:
    """Read ``date,code`` rows; calendar gaps are filled with ``n``.

    Returns ``(dates, codes)`` covering every day from the first to the last row.
    """
    path = Path(path)
    rows = {}
    with open(path, newline="") as fh:
        for lineno, rec in numbered_rows(fh):
            if rec[0].strip().lower() == "date":
                continue
            where = f"{path}:{lineno}: "
            if len(rec) != 2:
                raise ParseError(f"{where}expected 2 fields, got {len(rec)}")
            try:
                d = parse_date(rec[0])
            except ValueError as exc:
                raise ParseError(f"{where}bad date {rec[0]!r}") from exc
            if d in rows:
                raise ParseError(f"{where}duplicate date {d}")
            rows[d] = check_code(rec[1], where)
    if not rows:
        raise ParseError(f"{path}: no label rows")
    start, end = min(rows), max(rows)
    dates = [start + timedelta(days=i) for i in range((end - start).days + 1)]
    return dates, [rows.get(d, "n") for d in dates]


def write_label_csv(path, dates, codes) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "code"])
        for d, c in zip(dates, codes):
            w.writerow([d.isoformat(), c])
