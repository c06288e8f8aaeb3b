"""Per-pixel ice detection from snow index, NIR reflectance and water temperature."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

from .exceptions import ValidationError
from .rastergeo import (CloudMask, GridGeometry, LakeMask, LakeOutline, PixelClass, RasterGrid,
                        check_same_geometry, distance_to_ring, write_ascii_grid)


class IceState(IntEnum):
    OPEN_WATER = 0
    ICE = 1
    CLOUD = 2
    OUTSIDE = 255


@dataclass(frozen=True)
class IceThresholds:
    """Ice when ``ndsi > ndsi_min``, ``i2 > i2_refl_min`` and ``lswt < lswt_max``.

    ``strict=False`` switches all three comparisons to their inclusive form.
    """

    ndsi_min: float = 0.45
    i2_refl_min: float = 0.08
    lswt_max: float = 275.0
    strict: bool = True

    def __post_init__(self):
        if not -1 < self.ndsi_min < 1:
            raise ValidationError("ndsi_min must lie in (-1, 1)")
        if not 0 < self.i2_refl_min < 1:
            raise ValidationError("i2_refl_min must lie in (0, 1)")
        if not self.lswt_max > 0:
            raise ValidationError("lswt_max must be positive")

    def is_ice(self, ndsi, i2, lswt):
        if self.strict:
            return (ndsi > self.ndsi_min) & (i2 > self.i2_refl_min) & (lswt < self.lswt_max)
        return (ndsi >= self.ndsi_min) & (i2 >= self.i2_refl_min) & (lswt <= self.lswt_max)


def ndsi(r1, r2):
    """Normalized difference ``(r1 - r2) / (r1 + r2)``; NaN where the sum is zero."""
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    s = r1 + r2
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(s != 0, (r1 - r2) / np.where(s != 0, s, 1.0), np.nan)
    return float(out) if out.ndim == 0 else out


def classify_pixel(ndsi_value, i2_refl, lswt, thr: IceThresholds = IceThresholds(), cloud=False):
    """Ice state of one pixel (or an array of pixels).

    Cloudy pixels and pixels with any non-finite input are reported as cloud.
    """
    n = np.asarray(ndsi_value, dtype=float)
    i2 = np.asarray(i2_refl, dtype=float)
    t = np.asarray(lswt, dtype=float)
    invalid = np.asarray(cloud, dtype=bool) | ~np.isfinite(n) | ~np.isfinite(i2) | ~np.isfinite(t)
    with np.errstate(invalid="ignore"):
        ice = thr.is_ice(n, i2, t)
    out = np.where(invalid, IceState.CLOUD, np.where(ice, IceState.ICE, IceState.OPEN_WATER)).astype(np.uint8)
    if out.ndim == 0:
        return IceState(int(out))
    return out


def buffered_lake_mask(mask: LakeMask, outline: LakeOutline, buffer: float) -> LakeMask:
    """Demote clean pixels whose center lies within ``buffer`` of the outline to mixed."""
    if not buffer >= 0:
        raise ValidationError(f"buffer must be >= 0, got {buffer}")
    if buffer == 0:
        return mask
    cx, cy = mask.geometry.centers()
    clean = mask.clean
    d = np.full(mask.geometry.shape, np.inf)
    d[clean] = distance_to_ring(outline, cx[clean], cy[clean])
    demote = clean & (d <= buffer)
    codes = mask.codes.copy()
    codes[demote] = PixelClass.MIXED
    if clean.any() and demote.sum() == clean.sum():
        warnings.warn(f"buffer of {buffer} m removes every clean pixel of lake {mask.lake_id!r}", stacklevel=2)
    return LakeMask(mask.geometry, codes, mask.lake_id)


@dataclass(frozen=True, eq=False)
class IceMap:
    geometry: GridGeometry
    states: np.ndarray
    lake_id: str = ""

    def summary(self) -> dict:
        s = self.states
        return {"lake": self.lake_id,
                "n_ice": int((s == IceState.ICE).sum()),
                "n_water": int((s == IceState.OPEN_WATER).sum()),
                "n_cloud": int((s == IceState.CLOUD).sum()),
                "n_clean": int((s != IceState.OUTSIDE).sum())}


def ice_map(bands: dict, clouds: CloudMask | None, lake: LakeMask,
            thr: IceThresholds = IceThresholds()) -> IceMap:
    """Classify the clean pixels of one acquisition.

    Parameters
    ----------
    bands : dict of RasterGrid
        Must hold ``"I2"`` and ``"I3"`` reflectances (the snow index uses
        them as the first and second band) and ``"LSWT"`` in kelvin.
    clouds : CloudMask or None
    lake : LakeMask
        Pixels other than clean ones are reported as outside.
    """
    missing = {"I2", "I3", "LSWT"} - set(bands)
    if missing:
        raise ValidationError(f"ice map needs bands {sorted(missing)}")
    geoms = [bands[k].geometry for k in ("I2", "I3", "LSWT")] + [lake.geometry]
    if clouds is not None:
        geoms.append(clouds.geometry)
    check_same_geometry(*geoms, what="ice-map inputs")
    i2 = bands["I2"].masked()
    i3 = bands["I3"].masked()
    t = bands["LSWT"].masked()
    cloudy = clouds.cloudy if clouds is not None else np.zeros(lake.geometry.shape, bool)
    states = classify_pixel(ndsi(i2, i3), i2, t, thr, cloudy)
    states = np.where(lake.clean, states, IceState.OUTSIDE).astype(np.uint8)
    return IceMap(lake.geometry, states, lake.lake_id)


def write_ice_map(path, m: IceMap, extra: dict | None = None) -> None:
    """ASCII grid of state codes plus a ``<name>.summary.json`` sidecar."""
    path = Path(path)
    write_ascii_grid(path, RasterGrid(m.geometry, m.states.astype(int), nodata=int(IceState.OUTSIDE)))
    summary = m.summary()
    if extra:
        summary.update(extra)
    path.with_name(path.stem + ".summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
