"""Lake outlines: validation, simplification, point-in-polygon and rasterization."""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from ..exceptions import InvalidGeometryError
from .grid import GridGeometry


class PixelClass(IntEnum):
    OUTSIDE = 0
    MIXED = 1
    CLEAN = 2


def _open_ring(vertices) -> np.ndarray:
    v = np.asarray(vertices, dtype=float)
    if v.ndim != 2 or v.shape[1] != 2:
        raise InvalidGeometryError(f"outline vertices must be an (n, 2) array, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidGeometryError("outline contains non-finite coordinates")
    if len(v) > 1 and np.array_equal(v[0], v[-1]):
        v = v[:-1]
    # drop consecutive duplicates
    if len(v) > 1:
        keep = np.ones(len(v), dtype=bool)
        keep[1:] = np.any(v[1:] != v[:-1], axis=1)
        v = v[keep]
    return v


def _segments_cross(p1, p2, q1, q2) -> np.ndarray:
    """Proper-or-touching intersection of segments p1p2 with each q1q2 (vectorized over q)."""
    def orient(a, b, c):
        return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    proper = (np.sign(d1) * np.sign(d2) < 0) & (np.sign(d3) * np.sign(d4) < 0)

    def on_seg(a, b, c, d):
        return (d == 0) & (np.minimum(a[..., 0], b[..., 0]) <= c[..., 0]) & (c[..., 0] <= np.maximum(a[..., 0], b[..., 0])) \
            & (np.minimum(a[..., 1], b[..., 1]) <= c[..., 1]) & (c[..., 1] <= np.maximum(a[..., 1], b[..., 1]))

    p1b = np.broadcast_to(p1, q1.shape)
    p2b = np.broadcast_to(p2, q1.shape)
    touch = on_seg(q1, q2, p1b, d1) | on_seg(q1, q2, p2b, d2) | on_seg(p1b, p2b, q1, d3) | on_seg(p1b, p2b, q2, d4)
    return proper | touch


def ring_is_simple(ring: np.ndarray) -> bool:
    """True if no two non-adjacent edges of the open ring touch or cross."""
    n = len(ring)
    if n < 3:
        return False
    a = ring
    b = np.roll(ring, -1, axis=0)
    for i in range(n):
        # edges i+2 .. n-1 (skipping the neighbour that shares vertex 0 when i == 0)
        j = np.arange(i + 2, n if i > 0 else n - 1)
        if j.size == 0:
            continue
        if np.any(_segments_cross(a[i], b[i], a[j], b[j])):
            return False
    return True


@dataclass(frozen=True, eq=False)
class LakeOutline:
    """A closed, simple polygon ring in projected coordinates.

    ``vertices`` is stored closed (first vertex repeated at the end). The
    constructor accepts either an open or a closed ring.
    """

    vertices: np.ndarray
    lake_id: str = ""

    def __post_init__(self):
        ring = _open_ring(self.vertices)
        if len(ring) < 3:
            raise InvalidGeometryError(f"outline {self.lake_id!r} has fewer than 3 distinct vertices")
        x, y = ring[:, 0], ring[:, 1]
        if np.dot(x, np.roll(y, -1)) == np.dot(np.roll(x, -1), y):
            raise InvalidGeometryError(f"outline {self.lake_id!r} has zero area")
        if not ring_is_simple(ring):
            raise InvalidGeometryError(f"outline {self.lake_id!r} is self-intersecting")
        closed = np.vstack([ring, ring[:1]])
        closed.setflags(write=False)
        object.__setattr__(self, "vertices", closed)

    @property
    def ring(self) -> np.ndarray:
        """Open ring (without the repeated closing vertex)."""
        return self.vertices[:-1]

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        v = self.vertices
        return (v[:, 0].min(), v[:, 1].min(), v[:, 0].max(), v[:, 1].max())

    def area(self) -> float:
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * abs(np.dot(x[:-1], y[1:]) - np.dot(x[1:], y[:-1]))

    def translated(self, ox: float, oy: float) -> "LakeOutline":
        return LakeOutline(self.vertices + np.array([ox, oy]), self.lake_id)

    def __eq__(self, other):
        if not isinstance(other, LakeOutline):
            return NotImplemented
        return self.lake_id == other.lake_id and np.array_equal(self.vertices, other.vertices)

    def __hash__(self):
        return hash((self.lake_id, self.vertices.tobytes()))


def _on_segment_mask(px, py, x1, y1, x2, y2, eps) -> np.ndarray:
    cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
    seg_len = np.hypot(x2 - x1, y2 - y1)
    within = (px >= min(x1, x2) - eps) & (px <= max(x1, x2) + eps) \
        & (py >= min(y1, y2) - eps) & (py <= max(y1, y2) + eps)
    return within & (np.abs(cross) <= eps * seg_len)


def points_in_polygon(outline: LakeOutline, x, y) -> np.ndarray:
    """Even-odd point-in-polygon test. Points on an edge are reported as outside."""
    px = np.asarray(x, dtype=float)
    py = np.asarray(y, dtype=float)
    v = outline.vertices
    scale = max(1.0, float(np.abs(v).max()))
    eps = 1e-12 * scale
    inside = np.zeros(np.broadcast(px, py).shape, dtype=bool)
    on_edge = np.zeros_like(inside)
    for (x1, y1), (x2, y2) in zip(v[:-1], v[1:]):
        straddle = (y1 > py) != (y2 > py)
        if y1 != y2:
            x_cross = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
            inside ^= straddle & (px < x_cross)
        on_edge |= _on_segment_mask(px, py, x1, y1, x2, y2, eps)
    return inside & ~on_edge


def distance_to_ring(outline: LakeOutline, x, y) -> np.ndarray:
    """Euclidean distance from each point to the nearest ring edge."""
    px = np.asarray(x, dtype=float)
    py = np.asarray(y, dtype=float)
    best = np.full(np.broadcast(px, py).shape, np.inf)
    v = outline.vertices
    for (x1, y1), (x2, y2) in zip(v[:-1], v[1:]):
        best = np.minimum(best, _point_segment_distance(px, py, x1, y1, x2, y2))
    return best


def _point_segment_distance(px, py, x1, y1, x2, y2):
    ex, ey = x2 - x1, y2 - y1
    ll = ex * ex + ey * ey
    if ll == 0:
        return np.hypot(px - x1, py - y1)
    t = np.clip(((px - x1) * ex + (py - y1) * ey) / ll, 0.0, 1.0)
    return np.hypot(px - (x1 + t * ex), py - (y1 + t * ey))


def _douglas_peucker(points: np.ndarray, tolerance: float) -> np.ndarray:
    """Indices kept by Douglas-Peucker on an open polyline (endpoints always kept)."""
    n = len(points)
    keep = np.zeros(n, dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, n - 1)]
    while stack:
        i, j = stack.pop()
        if j <= i + 1:
            continue
        mid = points[i + 1:j]
        d = _point_segment_distance(mid[:, 0], mid[:, 1], *points[i], *points[j])
        k = int(np.argmax(d))
        if d[k] > tolerance:
            k += i + 1
            keep[k] = True
            stack.append((i, k))
            stack.append((k, j))
    return np.flatnonzero(keep)


def generalize_outline(outline: LakeOutline, tolerance: float) -> LakeOutline:
    """Douglas-Peucker simplification of a closed ring.

    The first vertex anchors the ring, which is treated as the polyline
    ``v0 .. v_{n-1}, v0`` and closed again afterwards. Every retained vertex
    is an original vertex.
    """
    if not tolerance >= 0:
        raise InvalidGeometryError(f"tolerance must be >= 0, got {tolerance}")
    ring = outline.ring
    kept = [int(i) for i in _douglas_peucker(outline.vertices, float(tolerance))[:-1]]
    # a large tolerance collapses the ring; grow it back to a triangle
    while len(kept) < 3:
        a = ring[kept[0]]
        b = ring[kept[-1]]
        d = _point_segment_distance(ring[:, 0], ring[:, 1], *a, *b)
        d[kept] = -1.0
        kept = sorted(set(kept) | {int(np.argmax(d))})
    return LakeOutline(ring[kept], outline.lake_id)


@dataclass(frozen=True, eq=False)
class LakeMask:
    """Per-pixel membership codes (:class:`PixelClass`) on a grid."""

    geometry: GridGeometry
    codes: np.ndarray
    lake_id: str = ""

    @property
    def clean(self) -> np.ndarray:
        return self.codes == PixelClass.CLEAN

    @property
    def mixed(self) -> np.ndarray:
        return self.codes == PixelClass.MIXED

    @property
    def n_clean(self) -> int:
        return int(self.clean.sum())

    @property
    def n_mixed(self) -> int:
        return int(self.mixed.sum())

    @property
    def n_outside(self) -> int:
        return int((self.codes == PixelClass.OUTSIDE).sum())

    def shifted(self, dcol: int, drow: int) -> "LakeMask":
        """Translate the codes by whole pixels; cells moved in from outside become OUTSIDE."""
        out = np.full_like(self.codes, PixelClass.OUTSIDE)
        nr, nc = self.codes.shape
        src_r = slice(max(0, -drow), min(nr, nr - drow))
        dst_r = slice(max(0, drow), min(nr, nr + drow))
        src_c = slice(max(0, -dcol), min(nc, nc - dcol))
        dst_c = slice(max(0, dcol), min(nc, nc + dcol))
        if src_r.start < src_r.stop and src_c.start < src_c.stop:
            out[dst_r, dst_c] = self.codes[src_r, src_c]
        return LakeMask(self.geometry, out, self.lake_id)


def _edges_touching_pixels(outline: LakeOutline, geom: GridGeometry) -> np.ndarray:
    """Pixels whose closed footprint touches any ring edge."""
    touched = np.zeros(geom.shape, dtype=bool)
    v = outline.vertices
    cols, rows = geom.to_pixel(v[:, 0], v[:, 1])
    for k in range(len(v) - 1):
        c_lo = max(int(np.floor(min(cols[k], cols[k + 1]))) - 1, 0)
        c_hi = min(int(np.floor(max(cols[k], cols[k + 1]))) + 1, geom.ncols - 1)
        r_lo = max(int(np.floor(min(rows[k], rows[k + 1]))) - 1, 0)
        r_hi = min(int(np.floor(max(rows[k], rows[k + 1]))) + 1, geom.nrows - 1)
        if c_lo > c_hi or r_lo > r_hi:
            continue
        cc, rr = np.meshgrid(np.arange(c_lo, c_hi + 1), np.arange(r_lo, r_hi + 1))
        # work in pixel index space: pixel (r, c) is the square [c, c+1] x [r, r+1]
        x1, y1, x2, y2 = cols[k], rows[k], cols[k + 1], rows[k + 1]
        bbox = (np.minimum(x1, x2) <= cc + 1) & (np.maximum(x1, x2) >= cc) \
            & (np.minimum(y1, y2) <= rr + 1) & (np.maximum(y1, y2) >= rr)
        s = np.stack([(x2 - x1) * (ry - y1) - (y2 - y1) * (rx - x1)
                      for rx, ry in ((cc, rr), (cc + 1, rr), (cc, rr + 1), (cc + 1, rr + 1))])
        straddles = (s.min(axis=0) <= 0) & (s.max(axis=0) >= 0)
        touched[rr[bbox & straddles], cc[bbox & straddles]] = True
    return touched


def rasterize_outline(outline: LakeOutline, geom: GridGeometry) -> LakeMask:
    """Classify every pixel of ``geom`` as clean, mixed or outside.

    A pixel is clean when its four corners and its center are strictly
    inside the ring and no ring edge touches the pixel footprint. A pixel
    is mixed when it is not clean but either one of those sample points is
    inside or a ring edge touches it.
    """
    xc, yc = geom.corner_coords()
    corner_in = points_in_polygon(outline, xc, yc)
    cx, cy = geom.centers()
    center_in = points_in_polygon(outline, cx, cy)
    corners_all = corner_in[:-1, :-1] & corner_in[:-1, 1:] & corner_in[1:, :-1] & corner_in[1:, 1:]
    corners_any = corner_in[:-1, :-1] | corner_in[:-1, 1:] | corner_in[1:, :-1] | corner_in[1:, 1:]
    touched = _edges_touching_pixels(outline, geom)

    clean = corners_all & center_in & ~touched
    mixed = ~clean & (corners_any | center_in | touched)
    codes = np.full(geom.shape, PixelClass.OUTSIDE, dtype=np.uint8)
    codes[mixed] = PixelClass.MIXED
    codes[clean] = PixelClass.CLEAN
    return LakeMask(geom, codes, outline.lake_id)


def coverage_fraction(outline: LakeOutline, geom: GridGeometry, oversample: int = 8) -> np.ndarray:
    """Fraction of each pixel inside the outline, estimated on an ``oversample``² lattice."""
    fine = geom.refined(oversample)
    fx, fy = fine.centers()
    inside = points_in_polygon(outline, fx, fy).astype(float)
    return inside.reshape(geom.nrows, oversample, geom.ncols, oversample).mean(axis=(1, 3))
