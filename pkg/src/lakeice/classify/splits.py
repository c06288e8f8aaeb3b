"""Date-grouped data splits."""

from __future__ import annotations

import numpy as np

from ..exceptions import ValidationError


def _unique_dates(dates) -> list:
    u = sorted(set(dates))
    if not u:
        raise ValidationError("no dates to split")
    return u


def kfold_split(dates, k: int, seed: int = 0) -> list:
    """Partition the distinct dates into ``k`` shuffled folds.

    All samples of one date land in the same fold. Returns a list of ``k``
    sorted date lists.
    """
    if k < 2:
        raise ValidationError(f"k must be >= 2, got {k}")
    u = _unique_dates(dates)
    if len(u) < k:
        raise ValidationError(f"{len(u)} distinct dates cannot fill {k} folds")
    order = np.random.default_rng(seed).permutation(len(u))
    return [sorted(u[i] for i in part) for part in np.array_split(order, k)]


def interleaved_split(dates, step: int = 2) -> tuple:
    """Alternate runs of ``step`` consecutive distinct dates between two splits."""
    if step < 1:
        raise ValidationError(f"step must be >= 1, got {step}")
    u = _unique_dates(dates)
    s1 = [d for i, d in enumerate(u) if (i // step) % 2 == 0]
    s2 = [d for i, d in enumerate(u) if (i // step) % 2 == 1]
    return s1, s2


def fold_masks(dates, folds) -> list:
    """Boolean row masks selecting the samples of each fold."""
    return [np.array([d in f for d in dates], dtype=bool) for f in map(set, folds)]
