"""Per-pixel feature rows from co-registered band rasters."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date

import numpy as np

from ..exceptions import InsufficientDataError, ValidationError
from ..rastergeo import (CloudMask, LakeMask, RasterGrid, check_same_geometry, cloud_fraction,
                         is_processable, upsample_bilinear)
from ..rastergeo.clouds import MAX_CLOUDY_FRACTION


@dataclass(frozen=True, eq=False)
class Acquisition:
    """One overpass: band rasters by name and an optional cloud mask."""

    date: date
    bands: dict
    clouds: CloudMask | None = None
    name: str = ""


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Samples of (clean pixel, acquisition) with one column per band.

    ``pixels`` holds the (row, col) of each sample in the lake grid and
    ``acquisition`` the index of its source acquisition.
    """

    X: np.ndarray
    bands: tuple
    lake: str
    dates: tuple
    pixels: np.ndarray
    acquisition: np.ndarray

    @property
    def mean(self) -> np.ndarray:
        return self.X.mean(axis=0)

    @property
    def std(self) -> np.ndarray:
        return self.X.std(axis=0)

    def __len__(self) -> int:
        return self.X.shape[0]

    def subset(self, rows) -> "FeatureMatrix":
        rows = np.asarray(rows)
        return FeatureMatrix(self.X[rows], self.bands, self.lake, tuple(np.asarray(self.dates, dtype=object)[rows]),
                             self.pixels[rows], self.acquisition[rows])


def _band_on_grid(g: RasterGrid, lake: LakeMask) -> np.ndarray:
    if g.geometry.close_to(lake.geometry):
        return g.masked()
    return upsample_bilinear(g, lake.geometry).masked()


def assemble_features(acquisitions, lake: LakeMask, bands, max_cloudy: float = MAX_CLOUDY_FRACTION,
                      strict: bool = True) -> FeatureMatrix:
    """Stack the band values of every cloud-free clean pixel.

    Acquisitions whose clean-pixel cloud fraction exceeds ``max_cloudy`` are
    skipped. Bands on a coarser grid than the lake mask are upsampled
    bilinearly. Pixels with a missing band value are dropped.

    Raises
    ------
    InsufficientDataError
        If no row survives and ``strict`` is true.
    """
    bands = tuple(bands)
    if not bands:
        raise ValidationError("no bands selected")
    rows_all = []
    meta_dates, meta_pix, meta_acq = [], [], []
    clean = lake.clean
    for k, acq in enumerate(acquisitions):
        missing = [b for b in bands if b not in acq.bands]
        if missing:
            raise ValidationError(f"acquisition {acq.name or acq.date} lacks bands {missing}")
        if acq.clouds is not None:
            check_same_geometry(acq.clouds.geometry, lake.geometry, what="cloud mask and lake mask")
            if not is_processable(cloud_fraction(acq.clouds, lake), max_cloudy):
                continue
            use = clean & ~acq.clouds.cloudy
        else:
            use = clean.copy()
        cube = np.stack([_band_on_grid(acq.bands[b], lake) for b in bands], axis=-1)
        use &= np.isfinite(cube).all(axis=-1)
        r, c = np.nonzero(use)
        if r.size == 0:
            continue
        rows_all.append(cube[r, c])
        meta_pix.append(np.column_stack([r, c]))
        meta_dates.extend([acq.date] * r.size)
        meta_acq.append(np.full(r.size, k))
    if not rows_all:
        if strict:
            raise InsufficientDataError(f"no cloud-free clean pixels for lake {lake.lake_id!r}")
        return FeatureMatrix(np.empty((0, len(bands))), bands, lake.lake_id, (), np.empty((0, 2), int),
                             np.empty(0, int))
    return FeatureMatrix(np.concatenate(rows_all), bands, lake.lake_id, tuple(meta_dates),
                         np.concatenate(meta_pix), np.concatenate(meta_acq))
