"""Raster grids, grid geometry and resampling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import GeometryMismatchError, ValidationError


@dataclass(frozen=True)
class GridGeometry:
    """Georeferencing of a north-up grid.

    ``x0, y0`` is the upper-left corner of the upper-left pixel. Rows run
    south, so pixel ``(r, c)`` covers ``[x0 + c*dx, x0 + (c+1)*dx]`` by
    ``[y0 - (r+1)*dy, y0 - r*dy]``.
    """

    ncols: int
    nrows: int
    x0: float
    y0: float
    dx: float
    dy: float

    def __post_init__(self):
        if self.ncols < 1 or self.nrows < 1:
            raise ValidationError(f"grid must have at least one row and column, got {self.nrows}x{self.ncols}")
        if not (self.dx > 0 and self.dy > 0):
            raise ValidationError(f"cell sizes must be positive, got dx={self.dx}, dy={self.dy}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nrows, self.ncols)

    @property
    def extent(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax)"""
        return (self.x0, self.y0 - self.nrows * self.dy, self.x0 + self.ncols * self.dx, self.y0)

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Pixel-center coordinates as two ``(nrows, ncols)`` arrays."""
        xs = self.x0 + (np.arange(self.ncols) + 0.5) * self.dx
        ys = self.y0 - (np.arange(self.nrows) + 0.5) * self.dy
        return np.meshgrid(xs, ys)

    def corner_coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinates of the ``(nrows+1, ncols+1)`` pixel-corner lattice."""
        xs = self.x0 + np.arange(self.ncols + 1) * self.dx
        ys = self.y0 - np.arange(self.nrows + 1) * self.dy
        return np.meshgrid(xs, ys)

    def to_pixel(self, x, y):
        """Continuous (col, row) index coordinates; pixel centers sit at +0.5."""
        return (np.asarray(x) - self.x0) / self.dx, (self.y0 - np.asarray(y)) / self.dy

    def translated(self, ox: float, oy: float) -> "GridGeometry":
        return GridGeometry(self.ncols, self.nrows, self.x0 + ox, self.y0 + oy, self.dx, self.dy)

    def refined(self, factor: int) -> "GridGeometry":
        """Same extent with each pixel split into ``factor x factor``."""
        if factor < 1:
            raise ValidationError("refinement factor must be >= 1")
        return GridGeometry(self.ncols * factor, self.nrows * factor, self.x0, self.y0,
                            self.dx / factor, self.dy / factor)

    def close_to(self, other: "GridGeometry", rtol: float = 1e-9) -> bool:
        if self.shape != other.shape:
            return False
        a = np.array([self.x0, self.y0, self.dx, self.dy])
        b = np.array([other.x0, other.y0, other.dx, other.dy])
        scale = max(np.abs(a).max(), 1.0)
        return bool(np.all(np.abs(a - b) <= rtol * scale))


def check_same_geometry(*geoms: GridGeometry, what: str = "grids") -> GridGeometry:
    first = geoms[0]
    for g in geoms[1:]:
        if not first.close_to(g):
            raise GeometryMismatchError(f"{what} do not share the same geometry: {first} vs {g}")
    return first


@dataclass
class RasterGrid:
    """One band of values on a :class:`GridGeometry`.

    ``values`` is stored as a ``(nrows, ncols)`` array. ``nodata`` marks
    invalid cells; NaN is always treated as invalid as well.
    """

    geometry: GridGeometry
    values: np.ndarray
    nodata: float | None = None
    name: str = field(default="", compare=False)

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim == 1 and v.size == self.geometry.ncols * self.geometry.nrows:
            v = v.reshape(self.geometry.shape)
        if v.shape != self.geometry.shape:
            raise ValidationError(
                f"values shape {v.shape} does not match grid {self.geometry.shape}")
        self.values = v

    ncols = property(lambda self: self.geometry.ncols)
    nrows = property(lambda self: self.geometry.nrows)
    x0 = property(lambda self: self.geometry.x0)
    y0 = property(lambda self: self.geometry.y0)
    dx = property(lambda self: self.geometry.dx)
    dy = property(lambda self: self.geometry.dy)

    @property
    def valid(self) -> np.ndarray:
        v = self.values.astype(float)
        ok = ~np.isnan(v)
        if self.nodata is not None:
            ok &= v != self.nodata
        return ok

    def masked(self) -> np.ndarray:
        """Float copy of the values with invalid cells set to NaN."""
        out = self.values.astype(float)
        out[~self.valid] = np.nan
        return out


def bilinear_sample(values: np.ndarray, rows, cols, valid: np.ndarray | None = None,
                    fill: float = np.nan) -> np.ndarray:
    """Bilinear interpolation at fractional sample indices.

    ``rows``/``cols`` index the sample lattice directly (``values[i, j]``
    sits at ``(i, j)``); positions outside the lattice are clamped to the
    border. If any of the four neighbours is invalid the nearest valid one
    is used; if none is valid the result is ``fill``.
    """
    values = np.asarray(values, dtype=float)
    nr, nc = values.shape
    if valid is None:
        valid = ~np.isnan(values)
    r = np.clip(np.asarray(rows, dtype=float), 0.0, nr - 1)
    c = np.clip(np.asarray(cols, dtype=float), 0.0, nc - 1)
    r0 = np.minimum(np.floor(r).astype(int), max(nr - 2, 0))
    c0 = np.minimum(np.floor(c).astype(int), max(nc - 2, 0))
    r1 = np.minimum(r0 + 1, nr - 1)
    c1 = np.minimum(c0 + 1, nc - 1)
    fr = r - r0
    fc = c - c0

    corners = [(r0, c0, (1 - fr) * (1 - fc)), (r0, c1, (1 - fr) * fc),
               (r1, c0, fr * (1 - fc)), (r1, c1, fr * fc)]
    out = np.zeros(np.broadcast(r, c).shape)
    all_valid = np.ones(out.shape, dtype=bool)
    for ri, ci, w in corners:
        all_valid &= valid[ri, ci]
    for ri, ci, w in corners:
        out += np.where(all_valid, w * np.where(valid[ri, ci], values[ri, ci], 0.0), 0.0)

    if not all_valid.all():
        # nearest valid neighbour among the four
        best = np.full(out.shape, np.inf)
        best_val = np.full(out.shape, fill, dtype=float)
        for ri, ci, _ in corners:
            d = (r - ri) ** 2 + (c - ci) ** 2
            take = valid[ri, ci] & (d < best)
            best = np.where(take, d, best)
            best_val = np.where(take, values[ri, ci], best_val)
        out = np.where(all_valid, out, best_val)
    return out


def _check_target(src: GridGeometry, dst: GridGeometry) -> None:
    sx0, sy0, sx1, sy1 = src.extent
    tx0, ty0, tx1, ty1 = dst.extent
    tol = 1e-6 * max(src.dx, src.dy)
    if tx0 < sx0 - tol or ty0 < sy0 - tol or tx1 > sx1 + tol or ty1 > sy1 + tol:
        raise ValidationError("target geometry extends beyond the source grid")
    if dst.dx > src.dx + tol or dst.dy > src.dy + tol:
        raise ValidationError("target cells must not be coarser than the source cells")


def upsample_bilinear(g: RasterGrid, target: GridGeometry) -> RasterGrid:
    """Resample ``g`` onto a finer grid by bilinear interpolation at pixel centers."""
    if g.values.size == 0:
        raise ValidationError("cannot resample an empty grid")
    _check_target(g.geometry, target)
    xc, yc = target.centers()
    col, row = g.geometry.to_pixel(xc, yc)
    fill = g.nodata if g.nodata is not None else np.nan
    out = bilinear_sample(g.values.astype(float), row - 0.5, col - 0.5, valid=g.valid, fill=fill)
    return RasterGrid(target, out, g.nodata, name=g.name)


def upsample_nearest(g: RasterGrid, target: GridGeometry) -> RasterGrid:
    """Nearest-neighbour resampling; used for categorical grids such as cloud masks."""
    if g.values.size == 0:
        raise ValidationError("cannot resample an empty grid")
    _check_target(g.geometry, target)
    xc, yc = target.centers()
    col, row = g.geometry.to_pixel(xc, yc)
    ci = np.clip(np.floor(col).astype(int), 0, g.ncols - 1)
    ri = np.clip(np.floor(row).astype(int), 0, g.nrows - 1)
    return RasterGrid(target, g.values[ri, ci], g.nodata, name=g.name)
