"""ESRI ASCII grid and outline CSV readers and writers."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .._csv import numbered_rows
from ..exceptions import InvalidGeometryError, ParseError
from .clouds import CloudMask
from .grid import GridGeometry, RasterGrid
from .polygon import LakeOutline

_HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "xllcenter", "yllcenter",
                "cellsize", "dx", "dy", "nodata_value")


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def read_ascii_grid(path) -> RasterGrid:
    """Read an ESRI ASCII grid. A ``<file>.json`` sidecar may override ``dx``/``dy``."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ParseError(f"{path}: cannot read ({exc.strerror})") from exc
    header = {}
    i = 0
    while i < len(lines):
        parts = lines[i].split()
        if not parts:
            i += 1
            continue
        key = parts[0].lower()
        if key not in _HEADER_KEYS:
            break
        if len(parts) != 2:
            raise ParseError(f"{path}:{i + 1}: malformed header line {lines[i]!r}")
        try:
            header[key] = float(parts[1])
        except ValueError:
            raise ParseError(f"{path}:{i + 1}: non-numeric header value {parts[1]!r}") from None
        i += 1
    for key in ("ncols", "nrows"):
        if key not in header:
            raise ParseError(f"{path}: missing {key.upper()} header")
    ncols, nrows = int(header["ncols"]), int(header["nrows"])
    dx = header.get("dx", header.get("cellsize"))
    dy = header.get("dy", header.get("cellsize"))
    side = sidecar_path(path)
    if side.exists():
        try:
            meta = json.loads(side.read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(f"{side}: invalid JSON ({exc.msg})") from exc
        dx = float(meta.get("dx", dx)) if meta.get("dx", dx) is not None else None
        dy = float(meta.get("dy", dy)) if meta.get("dy", dy) is not None else None
    if dx is None or dy is None:
        raise ParseError(f"{path}: missing CELLSIZE header")
    if "xllcorner" in header:
        xll = header["xllcorner"]
    elif "xllcenter" in header:
        xll = header["xllcenter"] - 0.5 * dx
    else:
        raise ParseError(f"{path}: missing XLLCORNER header")
    if "yllcorner" in header:
        yll = header["yllcorner"]
    elif "yllcenter" in header:
        yll = header["yllcenter"] - 0.5 * dy
    else:
        raise ParseError(f"{path}: missing YLLCORNER header")

    tokens = " ".join(lines[i:]).split()
    if len(tokens) != ncols * nrows:
        raise ParseError(f"{path}: expected {ncols * nrows} values, found {len(tokens)}")
    try:
        values = np.array(tokens, dtype=float).reshape(nrows, ncols)
    except ValueError as exc:
        raise ParseError(f"{path}: non-numeric cell value ({exc})") from None
    try:
        geom = GridGeometry(ncols, nrows, xll, yll + nrows * dy, dx, dy)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None
    return RasterGrid(geom, values, header.get("nodata_value"), name=path.stem)


def _fmt(v) -> str:
    f = float(v)
    if f.is_integer() and abs(f) < 1e15:
        return str(int(f))
    return repr(f)


def write_ascii_grid(path, grid: RasterGrid) -> None:
    """Write a grid in ESRI ASCII format; non-square cells also get a JSON sidecar."""
    path = Path(path)
    g = grid.geometry
    yll = g.y0 - g.nrows * g.dy
    head = [f"NCOLS {g.ncols}", f"NROWS {g.nrows}", f"XLLCORNER {_fmt(g.x0)}",
            f"YLLCORNER {_fmt(yll)}", f"CELLSIZE {_fmt(g.dx)}"]
    if grid.nodata is not None:
        head.append(f"NODATA_VALUE {_fmt(grid.nodata)}")
    values = grid.values
    if grid.nodata is not None and np.issubdtype(values.dtype, np.floating):
        values = np.where(np.isnan(values), grid.nodata, values)
    rows = [" ".join(_fmt(v) for v in row) for row in values]
    path.write_text("\n".join(head + rows) + "\n")
    side = sidecar_path(path)
    if g.dx != g.dy:
        side.write_text(json.dumps({"dx": g.dx, "dy": g.dy}, sort_keys=True) + "\n")
    elif side.exists():
        side.unlink()


def read_cloud_mask(path) -> CloudMask:
    """Read a four-level cloud mask stored as an ASCII grid of integer codes."""
    grid = read_ascii_grid(path)
    v = grid.values
    if not np.all(v == np.round(v)):
        raise ParseError(f"{path}: cloud mask codes must be integers")
    try:
        return CloudMask(grid.geometry, v.astype(int))
    except ParseError as exc:
        raise ParseError(f"{path}: {exc}") from None


def read_outline_csv(path, lake_id: str | None = None) -> LakeOutline:
    """Read an ``x,y`` vertex CSV (header optional). The ring is closed implicitly."""
    path = Path(path)
    pts = []
    try:
        with path.open(newline="") as fh:
            for lineno, row in numbered_rows(fh):
                if not pts and [c.strip().lower() for c in row] == ["x", "y"]:
                    continue
                if len(row) != 2:
                    raise ParseError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
                try:
                    pts.append((float(row[0]), float(row[1])))
                except ValueError:
                    raise ParseError(f"{path}:{lineno}: non-numeric coordinate") from None
    except OSError as exc:
        raise ParseError(f"{path}: cannot read ({exc.strerror})") from exc
    try:
        return LakeOutline(np.array(pts).reshape(-1, 2), lake_id if lake_id is not None else path.stem)
    except InvalidGeometryError as exc:
        raise InvalidGeometryError(f"{path}: {exc}") from None


def write_outline_csv(path, outline: LakeOutline) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y"])
        for x, y in outline.ring:
            w.writerow([_fmt(x), _fmt(y)])
