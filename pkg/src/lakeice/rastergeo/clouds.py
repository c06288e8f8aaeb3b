"""Cloud masks: four-level codes, binarization and lake cloud fractions."""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from ..exceptions import InsufficientDataError, ParseError
from .grid import GridGeometry, check_same_geometry
from .polygon import LakeMask

MAX_CLOUDY_FRACTION = 0.70


class CloudCode(IntEnum):
    CONFIDENT_CLEAR = 0
    PROBABLY_CLEAR = 1
    UNCERTAIN_CLEAR = 2
    CLOUDY = 3


@dataclass(frozen=True, eq=False)
class CloudMask:
    """Per-pixel cloud state.

    A four-level mask stores :class:`CloudCode` values. A binary mask stores
    0 (clear) and 1 (cloudy) and has ``binary=True``.
    """

    geometry: GridGeometry
    codes: np.ndarray
    binary: bool = False

    def __post_init__(self):
        codes = np.asarray(self.codes)
        if codes.shape != self.geometry.shape:
            raise ParseError(f"cloud mask shape {codes.shape} does not match grid {self.geometry.shape}")
        allowed = (0, 1) if self.binary else tuple(int(c) for c in CloudCode)
        bad = ~np.isin(codes, allowed)
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise ParseError(f"unknown cloud code {codes[r, c]!r} at row {r}, column {c}")
        object.__setattr__(self, "codes", codes.astype(np.uint8))

    @property
    def cloudy(self) -> np.ndarray:
        if self.binary:
            return self.codes == 1
        return self.codes >= CloudCode.UNCERTAIN_CLEAR

    @classmethod
    def from_cloudy(cls, geometry: GridGeometry, cloudy) -> "CloudMask":
        return cls(geometry, np.asarray(cloudy, dtype=np.uint8), binary=True)


def binarize_cloud_mask(mask: CloudMask) -> CloudMask:
    """Group {cloudy, uncertain clear} as cloudy and {probably, confident clear} as clear."""
    if mask.binary:
        return mask
    return CloudMask.from_cloudy(mask.geometry, mask.cloudy)


def cloud_fraction(mask: CloudMask, lake: LakeMask, allow_mixed_fallback: bool = False) -> float:
    """Fraction of the lake's clean pixels that are cloudy.

    With no clean pixels an :class:`InsufficientDataError` is raised unless
    ``allow_mixed_fallback`` is set, in which case mixed pixels are used.
    """
    check_same_geometry(mask.geometry, lake.geometry, what="cloud mask and lake mask")
    pixels = lake.clean
    if not pixels.any():
        if not allow_mixed_fallback:
            raise InsufficientDataError(f"lake {lake.lake_id!r} has no clean pixels")
        pixels = lake.mixed
        if not pixels.any():
            raise InsufficientDataError(f"lake {lake.lake_id!r} has neither clean nor mixed pixels")
    return float(np.count_nonzero(mask.cloudy & pixels) / np.count_nonzero(pixels))


def is_processable(fraction: float, max_cloudy: float = MAX_CLOUDY_FRACTION) -> bool:
    """A lake is processed unless more than ``max_cloudy`` of it is cloudy."""
    return bool(fraction <= max_cloudy + 1e-12)
