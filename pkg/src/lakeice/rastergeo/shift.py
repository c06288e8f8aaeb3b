"""Geolocation shift estimation by matching lake outlines to image water masks."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..exceptions import InsufficientDataError, ValidationError
from .clouds import CloudMask
from .grid import GridGeometry, RasterGrid, check_same_geometry
from .polygon import LakeMask, LakeOutline, coverage_fraction, rasterize_outline

MIN_CLEAN_PIXELS = 500
MIN_CLOUD_FREE = 0.40
MIN_QUADRANTS = 3


@dataclass(frozen=True)
class GeoShift:
    """Mean image offset in pixels (x east, y north).

    Imagery is displaced by ``(-sx*dx, -sy*dy)`` relative to the true
    outline position, which is the translation :func:`apply_shift` applies.
    """

    sx: float
    sy: float
    n_lakes_used: int = 0
    n_dates_used: int = 0
    rounded: bool = False

    def __post_init__(self):
        if not (np.isfinite(self.sx) and np.isfinite(self.sy)):
            raise ValidationError(f"shift must be finite, got ({self.sx}, {self.sy})")

    def __neg__(self) -> "GeoShift":
        return replace(self, sx=-self.sx, sy=-self.sy)

    def round_nearest(self) -> "GeoShift":
        """Whole-pixel variant, halves rounded away from zero."""
        return replace(self, sx=_round_half_away(self.sx), sy=_round_half_away(self.sy), rounded=True)


def _round_half_away(v: float) -> float:
    return float(np.sign(v) * np.floor(abs(v) + 0.5))


def apply_shift(obj, shift: GeoShift, geometry: GridGeometry | None = None, rounding: str = "none"):
    """Translate an outline or a lake mask so it lines up with shifted imagery.

    Outlines move by ``(-sx*dx, -sy*dy)`` ground units, with the pixel size
    taken from ``geometry``. Masks move by whole pixels only, so a
    fractional shift needs ``rounding="nearest"``.
    """
    if rounding not in ("none", "nearest"):
        raise ValidationError(f"rounding must be 'none' or 'nearest', got {rounding!r}")
    if rounding == "nearest":
        shift = shift.round_nearest()
    if isinstance(obj, LakeOutline):
        if geometry is None:
            raise ValidationError("shifting an outline needs the grid geometry for the pixel size")
        if shift.sx == 0 and shift.sy == 0:
            return obj
        return obj.translated(-shift.sx * geometry.dx, -shift.sy * geometry.dy)
    if isinstance(obj, LakeMask):
        if shift.sx != int(shift.sx) or shift.sy != int(shift.sy):
            raise ValidationError("lake masks can only be shifted by whole pixels; use rounding='nearest'")
        # x east -> columns, y north -> rows run the other way
        return obj.shifted(dcol=-int(shift.sx), drow=int(shift.sy))
    raise ValidationError(f"cannot shift object of type {type(obj).__name__}")


def otsu_threshold(values: np.ndarray) -> float:
    """Otsu's threshold evaluated exactly over every split of the sorted values.

    Returns the midpoint between the last value of the lower class and the
    first of the upper class.
    """
    v = np.sort(np.asarray(values, dtype=float).ravel())
    v = v[np.isfinite(v)]
    if v.size < 2 or v[0] == v[-1]:
        raise InsufficientDataError("Otsu threshold needs at least two distinct values")
    n = v.size
    k = np.arange(1, n)
    # only split between distinct values
    splits = k[v[1:] != v[:-1]]
    csum = np.cumsum(v)
    w0 = splits / n
    m0 = csum[splits - 1] / splits
    m1 = (csum[-1] - csum[splits - 1]) / (n - splits)
    between = w0 * (1 - w0) * (m0 - m1) ** 2
    best = splits[int(np.argmax(between))]
    return 0.5 * (v[best - 1] + v[best])


def _parabolic_offset(fm: float, f0: float, fp: float) -> float:
    denom = fm - 2.0 * f0 + fp
    if denom >= 0:
        return 0.0
    return float(np.clip(0.5 * (fm - fp) / denom, -0.5, 0.5))


def _soft_dice(pred: np.ndarray, water: np.ndarray, valid: np.ndarray) -> float:
    p = pred[valid]
    w = water[valid]
    denom = p.sum() + w.sum()
    return 0.0 if denom == 0 else 2.0 * float(np.dot(p, w)) / denom


def match_lake_shift(image: np.ndarray, cloudy: np.ndarray, coverage: np.ndarray,
                     search: int = 3, water_is_dark: bool = True) -> tuple[float, float, float]:
    """Shift (sx, sy) in pixels that best aligns ``coverage`` with the image water mask.

    ``coverage`` is the fractional lake coverage padded by ``search`` pixels
    on every side relative to ``image``. Returns ``(sx, sy, score)``.
    """
    nr, nc = image.shape
    if coverage.shape != (nr + 2 * search, nc + 2 * search):
        raise ValidationError("coverage must be padded by the search radius")
    valid = ~cloudy & np.isfinite(image)
    thr = otsu_threshold(image[valid])
    water = (image <= thr) if water_is_dark else (image > thr)
    water = water.astype(float)

    offsets = np.arange(-search, search + 1)
    scores = np.empty((offsets.size, offsets.size))
    for i, sy in enumerate(offsets):
        for j, sx in enumerate(offsets):
            # content at outline + (-sx*dx, -sy*dy): columns move by -sx, rows by +sy
            r0 = search - sy
            c0 = search + sx
            scores[i, j] = _soft_dice(coverage[r0:r0 + nr, c0:c0 + nc], water, valid)

    i, j = np.unravel_index(int(np.argmax(scores)), scores.shape)
    sx = float(offsets[j])
    sy = float(offsets[i])
    if 0 < j < offsets.size - 1:
        sx += _parabolic_offset(scores[i, j - 1], scores[i, j], scores[i, j + 1])
    if 0 < i < offsets.size - 1:
        sy += _parabolic_offset(scores[i - 1, j], scores[i, j], scores[i + 1, j])
    return sx, sy, float(scores[i, j])


def _lake_window(outline: LakeOutline, geom: GridGeometry, margin: int):
    xmin, ymin, xmax, ymax = outline.bounds
    c_lo, r_lo = geom.to_pixel(xmin, ymax)
    c_hi, r_hi = geom.to_pixel(xmax, ymin)
    c_lo = max(int(np.floor(c_lo)) - margin, 0)
    r_lo = max(int(np.floor(r_lo)) - margin, 0)
    c_hi = min(int(np.ceil(c_hi)) + margin, geom.ncols)
    r_hi = min(int(np.ceil(r_hi)) + margin, geom.nrows)
    if c_lo >= c_hi or r_lo >= r_hi:
        return None
    return slice(r_lo, r_hi), slice(c_lo, c_hi)


def _quadrant(outline: LakeOutline, geom: GridGeometry) -> int:
    c = outline.ring.mean(axis=0)
    col, row = geom.to_pixel(c[0], c[1])
    return int(row >= geom.nrows / 2) * 2 + int(col >= geom.ncols / 2)


def estimate_geolocation_shift(acquisitions, outlines, *, search: int = 3, oversample: int = 8,
                               min_clean_pixels: int = MIN_CLEAN_PIXELS,
                               min_cloud_free: float = MIN_CLOUD_FREE,
                               min_quadrants: int = MIN_QUADRANTS,
                               water_is_dark: bool = True) -> GeoShift:
    """Mean geolocation offset over a set of acquisitions.

    Parameters
    ----------
    acquisitions : sequence of (RasterGrid, CloudMask)
        One reference-band grid and its binary (or four-level) cloud mask
        per date.
    outlines : sequence of LakeOutline
        Lake outlines in the grid's coordinate system.
    search : int
        Half-width of the integer search window in pixels.
    min_clean_pixels, min_cloud_free, min_quadrants
        Gating: a lake contributes when it has at least ``min_clean_pixels``
        clean pixels and at least ``min_cloud_free`` of them are clear; a
        date contributes when its usable lakes cover ``min_quadrants``
        image quadrants.

    Returns
    -------
    GeoShift
        Per-date shifts are averaged over lakes weighted by cloud-free pixel
        count, then averaged over dates.
    """
    date_shifts = []
    lakes_used = set()
    for grid, clouds in acquisitions:
        if not isinstance(grid, RasterGrid) or not isinstance(clouds, CloudMask):
            raise ValidationError("each acquisition must be a (RasterGrid, CloudMask) pair")
        geom = check_same_geometry(grid.geometry, clouds.geometry, what="reference band and cloud mask")
        image = grid.masked()
        cloudy = clouds.cloudy | np.isnan(image)
        per_lake = []
        for outline in outlines:
            win = _lake_window(outline, geom, search + 2)
            if win is None:
                continue
            rs, cs = win
            sub = GridGeometry(cs.stop - cs.start, rs.stop - rs.start,
                               geom.x0 + cs.start * geom.dx, geom.y0 - rs.start * geom.dy, geom.dx, geom.dy)
            lake = rasterize_outline(outline, sub)
            if lake.n_clean < min_clean_pixels:
                continue
            clear_clean = np.count_nonzero(lake.clean & ~cloudy[rs, cs])
            if clear_clean < min_cloud_free * lake.n_clean:
                continue
            padded = GridGeometry(sub.ncols + 2 * search, sub.nrows + 2 * search,
                                  sub.x0 - search * geom.dx, sub.y0 + search * geom.dy, geom.dx, geom.dy)
            cov = coverage_fraction(outline, padded, oversample)
            try:
                sx, sy, _ = match_lake_shift(image[rs, cs], cloudy[rs, cs], cov, search, water_is_dark)
            except InsufficientDataError:
                continue
            per_lake.append((outline.lake_id, _quadrant(outline, geom), clear_clean, sx, sy))
        if len({q for _, q, _, _, _ in per_lake}) < min_quadrants:
            continue
        w = np.array([p[2] for p in per_lake], dtype=float)
        sx = float(np.dot(w, [p[3] for p in per_lake]) / w.sum())
        sy = float(np.dot(w, [p[4] for p in per_lake]) / w.sum())
        date_shifts.append((sx, sy))
        lakes_used.update(p[0] for p in per_lake)
    if not date_shifts:
        raise InsufficientDataError("no acquisition passed the shift-estimation gating")
    arr = np.array(date_shifts)
    return GeoShift(float(arr[:, 0].mean()), float(arr[:, 1].mean()),
                    n_lakes_used=len(lakes_used), n_dates_used=len(date_shifts))
