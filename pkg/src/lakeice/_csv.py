"""CSV helpers shared by the readers: comment lines and date parsing."""

from __future__ import annotations

import csv
import re
from datetime import date

_DMY = re.compile(r"^(\d{1,2})\.(\d{1,2})\.(\d{2}|\d{4})$")


def numbered_rows(fh):
    """Yield ``(line_number, fields)`` skipping blank lines and ``#`` comments."""
    for lineno, rec in enumerate(csv.reader(fh), start=1):
        if not rec or not "".join(rec).strip() or rec[0].lstrip().startswith("#"):
            continue
        yield lineno, rec


def parse_date(text: str) -> date:
    """ISO ``YYYY-MM-DD`` or day-first ``D.M.YY`` / ``D.M.YYYY``."""
    s = text.strip()
    m = _DMY.match(s)
    if m:
        d, mo, y = (int(g) for g in m.groups())
        return date(2000 + y if y < 100 else y, mo, d)
    return date.fromisoformat(s)
