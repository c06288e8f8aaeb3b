"""Run configuration, raster manifest ingestion and the stage runners behind the CLI."""

from __future__ import annotations

import csv
import hashlib
import json
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import date, datetime
from pathlib import Path

import numpy as np

from . import icedetect, insitu, lswt, phenology, report
from ._csv import numbered_rows, parse_date
from .classify import (Acquisition, DailyLabelSeries, SMOClassifier, assemble_features, band_importance,
                       confusion_matrix, daily_aggregate, daily_labels, enrich_labels, extract_ice_dates,
                       fold_masks, kfold_split, metrics, mta_smooth, read_label_csv)
from .exceptions import (GeometryMismatchError, InsufficientDataError, LakeIceError, ParseError,
                         ValidationError)
from .rastergeo import (GeoShift, GridGeometry, RasterGrid, apply_shift, cloud_fraction,
                        estimate_geolocation_shift, is_processable, rasterize_outline, read_ascii_grid,
                        read_cloud_mask, read_outline_csv, upsample_bilinear, write_ascii_grid)
from .rastergeo.clouds import MAX_CLOUDY_FRACTION

COMMANDS = ("lswt", "icemap", "phenology", "train", "predict", "insitu", "report")
MANIFEST_HEADER = ["timestamp", "sensor", "band", "path", "cloudmask_path"]
LSWT_BAND = "LSWT"
MTA_SCHEMES = ("mean", "median", "gaussian")
TOP_LEVEL_KEYS = {"seed", "lakes", "sensors", "thresholds", "paths", "lswt", "classify", "insitu", "report"}


# configuration

@dataclass(frozen=True)
class LakeConfig:
    id: str
    outline: Path
    frozen_threshold: float = 90.0
    shift: tuple | str = (0.0, 0.0)
    buffer_m: float = 0.0


@dataclass(frozen=True)
class SensorConfig:
    name: str
    bands: tuple
    resolution: float | None = None
    reference_band: str | None = None


@dataclass(frozen=True, eq=False)
class RunConfig:
    """Validated run configuration; relative paths resolve against the config file."""

    raw: dict
    base: Path
    lakes: tuple
    sensors: dict
    ice: icedetect.IceThresholds
    seed: int = 0
    date_from: date | None = None
    date_to: date | None = None

    @property
    def sha256(self) -> str:
        """Hash of the canonical configuration plus the run overrides (not the output dir)."""
        body = {"config": self.raw, "seed": self.seed, "lakes": [lk.id for lk in self.lakes],
                "from": self.date_from.isoformat() if self.date_from else None,
                "to": self.date_to.isoformat() if self.date_to else None}
        return hashlib.sha256(json.dumps(body, sort_keys=True, separators=(",", ":")).encode()).hexdigest()

    def section(self, name: str) -> dict:
        return self.raw.get(name) or {}

    @property
    def thresholds(self) -> dict:
        return self.section("thresholds")

    def path(self, value) -> Path:
        return (self.base / value).resolve()

    def paths(self) -> dict:
        return self.section("paths")

    def lake_path(self, key: str, lake: str, required: bool = True):
        table = self.paths().get(key) or {}
        if lake not in table:
            if required:
                raise ValidationError(f"paths.{key} has no entry for lake {lake!r}")
            return None
        v = table[lake]
        return {k: self.path(p) for k, p in v.items()} if isinstance(v, dict) else self.path(v)


def _check_range(name: str, v, lo: float, hi: float):
    if not isinstance(v, (int, float)) or isinstance(v, bool) or not lo <= v <= hi:
        raise ValidationError(f"{name} must be a number in [{lo}, {hi}], got {v!r}")
    return float(v)


def _referenced_paths(raw: dict):
    for lk in raw.get("lakes", []):
        yield f"lakes[{lk.get('id')}].outline", lk.get("outline")
    for key, v in (raw.get("paths") or {}).items():
        if key == "model":
            continue  # produced by train
        stack = [(f"paths.{key}", v)]
        while stack:
            name, item = stack.pop()
            if isinstance(item, dict):
                stack.extend((f"{name}.{k}", x) for k, x in sorted(item.items(), reverse=True))
            else:
                yield name, item
    for key in ("band_spec", "atm"):
        if key in (raw.get("lswt") or {}):
            yield f"lswt.{key}", raw["lswt"][key]


def load_config(path, *, seed: int | None = None, lake: str | None = None,
                date_from: date | None = None, date_to: date | None = None) -> RunConfig:
    """Read and validate a JSON run configuration, applying command-line overrides."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ValidationError(f"{path}: cannot read config ({exc.strerror})") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from exc
    if not isinstance(raw, dict):
        raise ParseError(f"{path}: config must be a JSON object")
    unknown = set(raw) - TOP_LEVEL_KEYS
    if unknown:
        raise ValidationError(f"{path}: unknown config keys {sorted(unknown)}")
    base = path.resolve().parent

    for name, p in _referenced_paths(raw):
        if not isinstance(p, str) or not (base / p).exists():
            raise ValidationError(f"{path}: {name} refers to a missing file {p!r}")

    lakes = []
    for lk in raw.get("lakes") or []:
        if "id" not in lk or "outline" not in lk:
            raise ValidationError(f"{path}: every lake needs 'id' and 'outline'")
        shift = lk.get("shift", [0.0, 0.0])
        if shift != "estimate":
            if not (isinstance(shift, list) and len(shift) == 2):
                raise ValidationError(f"{path}: lake {lk['id']!r} shift must be [sx, sy] or \"estimate\"")
            shift = tuple(_check_range(f"lake {lk['id']} shift", float(s), -50, 50) for s in shift)
        lakes.append(LakeConfig(str(lk["id"]), (base / lk["outline"]).resolve(),
                                _check_range(f"lake {lk['id']} frozen_threshold",
                                             lk.get("frozen_threshold", 90.0), 0, 100),
                                shift, _check_range(f"lake {lk['id']} buffer_m", lk.get("buffer_m", 0.0), 0, 1e4)))
    ids = [lk.id for lk in lakes]
    if len(set(ids)) != len(ids):
        raise ValidationError(f"{path}: duplicate lake ids {ids}")
    if lake is not None:
        if lake not in ids:
            raise ValidationError(f"lake {lake!r} is not in the config (known: {ids})")
        lakes = [lk for lk in lakes if lk.id == lake]

    sensors = {}
    for name, s in (raw.get("sensors") or {}).items():
        bands = tuple(s.get("bands") or ())
        if not bands:
            raise ValidationError(f"{path}: sensor {name!r} lists no bands")
        ref = s.get("reference_band")
        if ref is not None and ref not in bands:
            raise ValidationError(f"{path}: reference band {ref!r} of sensor {name!r} is not in its bands")
        sensors[name] = SensorConfig(name, bands, s.get("resolution"), ref)

    thr = raw.get("thresholds") or {}
    try:
        ice = icedetect.IceThresholds(**(thr.get("ice") or {}))
    except TypeError as exc:
        raise ValidationError(f"{path}: thresholds.ice: {exc}") from exc
    mta = thr.get("mta") or {}
    if mta.get("scheme", "mean") not in MTA_SCHEMES:
        raise ValidationError(f"{path}: thresholds.mta.scheme must be one of {MTA_SCHEMES}")
    w = mta.get("window", 3)
    if not isinstance(w, int) or w < 1 or w % 2 == 0:
        raise ValidationError(f"{path}: thresholds.mta.window must be a positive odd integer")
    _check_range("thresholds.max_cloudy", thr.get("max_cloudy", MAX_CLOUDY_FRACTION), 0, 1)
    ph = thr.get("phenology") or {}
    _check_range("thresholds.phenology.majority", ph.get("majority", phenology.MAJORITY), 0.5, 1)
    pw = ph.get("window", 15)
    if not isinstance(pw, int) or pw < 1:
        raise ValidationError(f"{path}: thresholds.phenology.window must be a positive integer")

    seed = raw.get("seed", 0) if seed is None else seed
    if not isinstance(seed, int) or seed < 0:
        raise ValidationError(f"seed must be a non-negative integer, got {seed!r}")
    if date_from and date_to and date_to < date_from:
        raise ValidationError("--to precedes --from")
    return RunConfig(raw, base, tuple(lakes), sensors, ice, seed, date_from, date_to)


# raster manifest

@dataclass(frozen=True, eq=False)
class AcquisitionHandle:
    """All grids of one (timestamp, sensor) overpass, parsed and checked."""

    timestamp: datetime
    sensor: str
    bands: dict
    clouds: object = None
    files: dict = field(default_factory=dict)

    @property
    def day(self) -> date:
        return self.timestamp.date()

    @property
    def key(self) -> str:
        return f"{self.sensor}_{self.timestamp.strftime('%Y%m%dT%H%M%S')}"

    @property
    def geometry(self) -> GridGeometry:
        """Grid of the cloud mask, or of the finest band when there is none."""
        if self.clouds is not None:
            return self.clouds.geometry
        return min((g.geometry for g in self.bands.values()), key=lambda g: g.dx * g.dy)


def _extent(g: GridGeometry) -> np.ndarray:
    return np.array([g.x0, g.y0, g.x0 + g.ncols * g.dx, g.y0 - g.nrows * g.dy])


def _same_extent(a: GridGeometry, b: GridGeometry) -> bool:
    tol = 1e-6 * max(a.dx, a.dy, b.dx, b.dy)
    return bool(np.all(np.abs(_extent(a) - _extent(b)) <= tol))


def _parse_timestamp(text: str) -> datetime:
    s = text.strip()
    if s.endswith("Z"):
        s = s[:-1]
    return datetime.fromisoformat(s).replace(tzinfo=None)


def ingest(manifest, sensors: dict | None = None) -> list:
    """Parse every grid referenced by a raster manifest.

    Parameters
    ----------
    manifest : path
        CSV with header ``timestamp,sensor,band,path,cloudmask_path``; one
        row per band file, paths relative to the manifest.
    sensors : dict of SensorConfig, optional
        Known sensors and their bands. An unknown sensor or band is a parse
        error; ``LSWT`` is always accepted as a precomputed temperature band.

    Returns
    -------
    list of AcquisitionHandle
        Sorted by timestamp (stable for equal timestamps). A warning is
        emitted when the manifest rows were out of order.
    """
    manifest = Path(manifest)
    base = manifest.parent
    groups, order, times = {}, [], []
    with open(manifest, newline="") as fh:
        rows = numbered_rows(fh)
        first = next(rows, None)
        if first is None or [h.strip() for h in first[1]] != MANIFEST_HEADER:
            raise ParseError(f"{manifest}:{first[0] if first else 1}: expected header {','.join(MANIFEST_HEADER)}")
        for lineno, rec in rows:
            where = f"{manifest}:{lineno}"
            if len(rec) != len(MANIFEST_HEADER):
                raise ParseError(f"{where}: expected {len(MANIFEST_HEADER)} fields, got {len(rec)}")
            ts_text, sensor, band, path, cpath = (c.strip() for c in rec)
            try:
                ts = _parse_timestamp(ts_text)
            except ValueError as exc:
                raise ParseError(f"{where}: bad timestamp {ts_text!r}") from exc
            if sensors is not None:
                if sensor not in sensors:
                    raise ParseError(f"{where}: unknown sensor {sensor!r}")
                if band not in sensors[sensor].bands and band != LSWT_BAND:
                    raise ParseError(f"{where}: unknown band {band!r} for sensor {sensor!r}")
            key = (ts, sensor)
            if key not in groups:
                groups[key] = {"bands": {}, "clouds": None, "line": lineno}
                order.append(key)
            g = groups[key]
            if band in g["bands"]:
                raise ParseError(f"{where}: band {band!r} listed twice for {ts_text} {sensor}")
            g["bands"][band] = (base / path).resolve()
            if cpath:
                cp = (base / cpath).resolve()
                if g["clouds"] is not None and g["clouds"] != cp:
                    raise ParseError(f"{where}: conflicting cloud masks for {ts_text} {sensor}")
                g["clouds"] = cp
            times.append(ts)
    if not order:
        raise ParseError(f"{manifest}: no acquisitions")
    if any(b < a for a, b in zip(times, times[1:])):
        warnings.warn(f"{manifest}: timestamps out of order; acquisitions sorted by time", stacklevel=2)
    order.sort(key=lambda k: k[0])  # stable: equal timestamps keep manifest order

    cache = {}

    def grid(p: Path) -> RasterGrid:
        if p not in cache:
            if not p.exists():
                raise ParseError(f"{p}: referenced grid does not exist")
            cache[p] = read_ascii_grid(p)
        return cache[p]

    out = []
    for ts, sensor in order:
        g = groups[(ts, sensor)]
        bands = {b: grid(p) for b, p in g["bands"].items()}
        names = list(bands)
        ref = bands[names[0]].geometry
        for b in names[1:]:
            if not _same_extent(ref, bands[b].geometry):
                raise GeometryMismatchError(f"{g['bands'][b]}: extent {tuple(_extent(bands[b].geometry))} differs "
                                            f"from {g['bands'][names[0]]} {tuple(_extent(ref))}")
        clouds = None
        if g["clouds"] is not None:
            if not g["clouds"].exists():
                raise ParseError(f"{g['clouds']}: referenced cloud mask does not exist")
            clouds = read_cloud_mask(g["clouds"])
            if not any(clouds.geometry.close_to(x.geometry) for x in bands.values()):
                raise GeometryMismatchError(f"{g['clouds']}: cloud mask grid matches none of the band grids")
        out.append(AcquisitionHandle(ts, sensor, bands, clouds, dict(g["bands"])))
    return out


# artifact writing

class ArtifactWriter:
    """Single writer for one command's outputs; every file carries the config hash."""

    def __init__(self, out_dir, command: str, config: RunConfig):
        self.root = Path(out_dir)
        self.dir = self.root / command
        self.dir.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.config = config
        self.written = []

    @property
    def stamp(self) -> str:
        return f"config_sha256={self.config.sha256}"

    def _target(self, name: str) -> Path:
        p = self.dir / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.written.append(p)
        return p

    def json(self, name: str, body: dict) -> Path:
        p = self._target(name)
        p.write_text(json.dumps({**body, "config_sha256": self.config.sha256}, sort_keys=True, indent=2) + "\n")
        return p

    def csv(self, name: str, header, rows) -> Path:
        p = self._target(name)
        with open(p, "w", newline="") as fh:
            fh.write(f"# {self.stamp}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        return p

    def stamped(self, name: str, write) -> Path:
        """Let ``write(path)`` produce a CSV, then prefix the hash comment line."""
        p = self._target(name)
        write(p)
        p.write_text(f"# {self.stamp}\n" + p.read_text())
        return p

    def grid(self, name: str, g: RasterGrid, meta: dict) -> Path:
        p = self._target(name)
        write_ascii_grid(p, g)
        side = p.with_name(p.name + ".json")
        if side.exists():
            self.written.append(side)
        self.json(Path(name).with_suffix(".meta.json").as_posix(), meta)
        return p

    def adopt(self, paths) -> None:
        self.written.extend(Path(p) for p in paths)

    def finish(self) -> Path:
        files = {}
        for p in sorted(set(self.written)):
            files[p.relative_to(self.dir).as_posix()] = hashlib.sha256(p.read_bytes()).hexdigest()
        return self.json("manifest.json", {"command": self.command, "seed": self.config.seed, "files": files})


def fmt(v) -> str:
    if v is None:
        return ""
    v = float(v)
    return "" if not np.isfinite(v) else f"{v:.9g}"


# parallel fan-out

def thread_count() -> int:
    env = os.environ.get("LAKEICE_THREADS")
    if env is None or env.strip() == "":
        return os.cpu_count() or 1
    try:
        n = int(env)
    except ValueError:
        raise ValidationError(f"LAKEICE_THREADS must be a positive integer, got {env!r}") from None
    if n < 1:
        raise ValidationError(f"LAKEICE_THREADS must be a positive integer, got {env!r}")
    return n


def fan_out(fn, items) -> list:
    """``[fn(x) for x in items]`` on a thread pool; results keep the input order."""
    items = list(items)
    n = min(thread_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


# shared raster helpers

def _on_grid(g: RasterGrid, geom: GridGeometry) -> np.ndarray:
    if g.geometry.close_to(geom):
        return g.masked()
    return upsample_bilinear(g, geom).masked()


def _in_range(cfg: RunConfig, d: date) -> bool:
    return (cfg.date_from is None or d >= cfg.date_from) and (cfg.date_to is None or d <= cfg.date_to)


class Scene:
    """Acquisitions, outlines and lake masks shared by the raster stages."""

    def __init__(self, cfg: RunConfig, sensor: str | None = None):
        if "manifest" not in cfg.paths():
            raise ValidationError("paths.manifest is required for raster stages")
        self.cfg = cfg
        acqs = ingest(cfg.path(cfg.paths()["manifest"]), cfg.sensors or None)
        self.acquisitions = [a for a in acqs if _in_range(cfg, a.day) and (sensor is None or a.sensor == sensor)]
        if not self.acquisitions:
            raise InsufficientDataError(f"no acquisitions{' for sensor ' + sensor if sensor else ''} in range")
        self.outlines = {lk.id: read_outline_csv(lk.outline, lk.id) for lk in cfg.lakes}
        self._shifts = {}
        self._masks = {}

    def shift(self, lake: LakeConfig, sensor: str) -> GeoShift:
        if lake.shift != "estimate":
            return GeoShift(*lake.shift)
        if sensor not in self._shifts:
            sc = self.cfg.sensors.get(sensor)
            ref = (sc.reference_band if sc and sc.reference_band else None)
            pairs = []
            for a in self.acquisitions:
                if a.sensor != sensor or a.clouds is None:
                    continue
                band = ref or sorted(a.bands)[0]
                if band in a.bands:
                    pairs.append((RasterGrid(a.clouds.geometry, _on_grid(a.bands[band], a.clouds.geometry)), a.clouds))
            if not pairs:
                raise InsufficientDataError(f"no cloud-masked acquisitions of {sensor!r} to estimate the shift")
            all_outlines = [self.outlines[lk.id] for lk in self.cfg.lakes]
            self._shifts[sensor] = estimate_geolocation_shift(pairs, all_outlines)
        return self._shifts[sensor]

    def mask(self, lake: LakeConfig, acq: AcquisitionHandle):
        geom = acq.geometry
        key = (lake.id, acq.sensor, geom.ncols, geom.nrows, geom.x0, geom.y0, geom.dx, geom.dy)
        if key not in self._masks:
            outline = apply_shift(self.outlines[lake.id], self.shift(lake, acq.sensor), geom)
            m = rasterize_outline(outline, geom)
            if lake.buffer_m > 0:
                m = icedetect.buffered_lake_mask(m, outline, lake.buffer_m)
            self._masks[key] = m
        return self._masks[key]


# lswt

def _lswt_setup(cfg: RunConfig):
    sec = cfg.section("lswt")
    for k in ("band", "band_spec", "atm"):
        if k not in sec:
            raise ValidationError(f"lswt.{k} is required")
    return sec, lswt.BandSpec.from_json(cfg.path(sec["band_spec"])), lswt.read_atm_csv(cfg.path(sec["atm"]))


def _lswt_grid(acq: AcquisitionHandle, band_name: str, band: lswt.BandSpec, atm_table: dict):
    """Water temperature grid of one acquisition, or None when it cannot be derived."""
    if LSWT_BAND in acq.bands:
        return acq.bands[LSWT_BAND]
    if band_name not in acq.bands or acq.timestamp not in atm_table:
        return None
    tir = acq.bands[band_name]
    cloudy = acq.clouds.cloudy if acq.clouds is not None and acq.clouds.geometry.close_to(tir.geometry) else None
    T, _ = lswt.invert_pmw_array(tir.masked(), atm_table[acq.timestamp], band, cloudy)
    return RasterGrid(tir.geometry, T, nodata=-9999.0)


def run_lswt(cfg: RunConfig, w: ArtifactWriter) -> None:
    sec, band, atm_table = _lswt_setup(cfg)
    scene = Scene(cfg, sec.get("sensor"))
    band_name = sec["band"]
    series = {lk.id: [] for lk in cfg.lakes}
    n_missing_atm = 0
    for acq in scene.acquisitions:
        if band_name not in acq.bands:
            continue
        if acq.timestamp not in atm_table:
            n_missing_atm += 1
            continue
        g = _lswt_grid(acq, band_name, band, atm_table)
        n_ok = int(np.isfinite(g.values).sum())
        w.grid(f"{acq.key}.asc", g, {"timestamp": acq.timestamp.isoformat(), "sensor": acq.sensor,
                                      "band": band.name, "n_valid": n_ok})
        for lk in cfg.lakes:
            m = scene.mask(lk, acq)
            t = _on_grid(g, m.geometry)[m.clean]
            if acq.clouds is not None:
                t = t[~acq.clouds.cloudy[m.clean]]
            t = t[np.isfinite(t)]
            series[lk.id].append([acq.timestamp.isoformat(), acq.sensor, fmt(t.mean() if t.size else None),
                                  fmt(np.median(t) if t.size else None), str(t.size)])
    if n_missing_atm:
        warnings.warn(f"{n_missing_atm} acquisition(s) without atmospheric parameters skipped", stacklevel=2)
    for lake, rows in series.items():
        w.csv(f"series_{lake}.csv", ["timestamp", "sensor", "mean_lswt_k", "median_lswt_k", "n_pixels"], rows)


# icemap

def run_icemap(cfg: RunConfig, w: ArtifactWriter) -> None:
    sec = cfg.section("lswt")
    band_setup = _lswt_setup(cfg) if sec else None
    scene = Scene(cfg)

    def one_lake(lk: LakeConfig):
        maps = []
        for acq in scene.acquisitions:
            if not {"I2", "I3"} <= set(acq.bands):
                continue
            t = acq.bands.get(LSWT_BAND)
            if t is None and band_setup is not None:
                t = _lswt_grid(acq, band_setup[0]["band"], band_setup[1], band_setup[2])
            if t is None:
                continue
            m = scene.mask(lk, acq)
            bands = {k: RasterGrid(m.geometry, _on_grid(g, m.geometry)) for k, g in
                     (("I2", acq.bands["I2"]), ("I3", acq.bands["I3"]), ("LSWT", t))}
            clouds = acq.clouds if acq.clouds is not None and acq.clouds.geometry.close_to(m.geometry) else None
            maps.append((acq, icedetect.ice_map(bands, clouds, m, cfg.ice)))
        return maps

    results = fan_out(one_lake, cfg.lakes)
    for lk, maps in zip(cfg.lakes, results):
        rows = []
        for acq, m in maps:
            name = f"{lk.id}/{acq.key}.asc"
            target = w._target(name)
            sh = scene.shift(lk, acq.sensor)
            icedetect.write_ice_map(target, m, {"timestamp": acq.timestamp.isoformat(), "sensor": acq.sensor,
                                      "shift_px": [sh.sx, sh.sy], "config_sha256": cfg.sha256})
            w.adopt([target.with_name(target.stem + ".summary.json")])
            s = m.summary()
            pct = 100.0 * s["n_ice"] / (s["n_ice"] + s["n_water"]) if s["n_ice"] + s["n_water"] else None
            rows.append([acq.timestamp.isoformat(), acq.sensor, s["n_ice"], s["n_water"], s["n_cloud"],
                         s["n_clean"], fmt(pct)])
        w.csv(f"timeline_{lk.id}.csv", ["timestamp", "sensor", "n_ice", "n_water", "n_cloud", "n_clean",
                                         "pct_ice"], rows)
    for sensor, sh in sorted(scene._shifts.items()):
        w.json(f"geolocation_{sensor}.json", {"sensor": sensor, "sx": sh.sx, "sy": sh.sy,
                                              "n_lakes_used": sh.n_lakes_used, "n_dates_used": sh.n_dates_used})


# phenology

def read_observations_csv(path) -> list:
    """Per-pixel ``date,nir,lswt`` rows grouped into one observation per day."""
    path = Path(path)
    days = {}
    with open(path, newline="") as fh:
        rows = numbered_rows(fh)
        first = next(rows, None)
        if first is None or [h.strip().lower() for h in first[1]] != ["date", "nir", "lswt"]:
            raise ParseError(f"{path}:{first[0] if first else 1}: expected header date,nir,lswt")
        for lineno, rec in rows:
            if len(rec) != 3:
                raise ParseError(f"{path}:{lineno}: expected 3 fields, got {len(rec)}")
            try:
                d = parse_date(rec[0])
                nir = float(rec[1]) if rec[1].strip() else np.nan
                t = float(rec[2]) if rec[2].strip() else np.nan
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
            days.setdefault(d, ([], []))
            days[d][0].append(nir)
            days[d][1].append(t)
    if not days:
        raise ParseError(f"{path}: no observations")
    return [phenology.DayObservation(d, np.array(v[0]), np.array(v[1])) for d, v in sorted(days.items())]


def run_phenology(cfg: RunConfig, w: ArtifactWriter) -> None:
    ph = cfg.thresholds.get("phenology") or {}
    kw = {k: ph[k] for k in ("window", "majority", "nir_frozen", "nir_open") if k in ph}

    def one_lake(lk: LakeConfig):
        obs = [o for o in read_observations_csv(cfg.lake_path("observations", lk.id)) if _in_range(cfg, o.day)]
        if not obs:
            raise InsufficientDataError(f"no observations for lake {lk.id!r} in range")
        return phenology.two_step_phenology(obs, lk.id, start=cfg.date_from, end=cfg.date_to, **kw)

    for lk, r in zip(cfg.lakes, fan_out(one_lake, cfg.lakes)):
        t = r.thresholds
        w.json(f"events_{lk.id}.json", {**r.events.to_dict(),
                                        "thresholds_k": {"frozen": t.thr_frozen, "open": t.thr_open,
                                                         "n_frozen": t.n_frozen, "n_open": t.n_open}})
        w.stamped(f"daily_{lk.id}.csv", r.series.to_csv)
        lower = r.curves.lower if r.curves is not None else np.full(len(r.series), np.nan)
        upper = r.curves.upper if r.curves is not None else np.full(len(r.series), np.nan)
        rows = [[d.isoformat(), fmt(r.series.mean_nir[i]), fmt(r.nir_smoothed[i]), int(r.nir_states[i]),
                 fmt(lower[i]), fmt(upper[i]), fmt(r.series.mean_lswt[i])] for i, d in enumerate(r.series.dates)]
        w.csv(f"curves_{lk.id}.csv", ["date", "mean_nir", "nir_smoothed", "nir_state", "lower", "upper",
                                       "mean_lswt_k"], rows)


# train / predict

def _classify_setup(cfg: RunConfig):
    sec = cfg.section("classify")
    sensor = sec.get("sensor")
    if sensor is None:
        raise ValidationError("classify.sensor is required")
    bands = tuple(sec.get("bands") or (cfg.sensors[sensor].bands if sensor in cfg.sensors else ()))
    if not bands:
        raise ValidationError("classify.bands is required")
    return sec, sensor, bands


def _max_cloudy(cfg: RunConfig) -> float:
    return float(cfg.thresholds.get("max_cloudy", MAX_CLOUDY_FRACTION))


def _training_rows(cfg, scene, sensor, bands, lk):
    dates, codes = read_label_csv(cfg.lake_path("labels", lk.id))
    enriched = enrich_labels(codes)
    keep = {d: int(t) for d, t, ok in zip(dates, enriched.target, enriched.trainable) if ok}
    handles = [a for a in scene.acquisitions if a.sensor == sensor and a.day in keep]
    if not handles:
        return None
    acqs = [Acquisition(a.day, a.bands, a.clouds, a.key) for a in handles]
    fm = assemble_features(acqs, scene.mask(lk, handles[0]), bands, _max_cloudy(cfg), strict=False)
    # classifier positive class is non-frozen, so scores grow with open water
    y = np.array([1 - keep[d] for d in fm.dates], dtype=int)
    return fm, y


def run_train(cfg: RunConfig, w: ArtifactWriter) -> None:
    sec, sensor, bands = _classify_setup(cfg)
    scene = Scene(cfg, sensor)
    parts = [p for p in fan_out(lambda lk: _training_rows(cfg, scene, sensor, bands, lk), cfg.lakes) if p]
    if not parts:
        raise InsufficientDataError("no labelled, processable acquisitions to train on")
    X = np.concatenate([fm.X for fm, _ in parts])
    y = np.concatenate([yy for _, yy in parts])
    dates = [d for fm, _ in parts for d in fm.dates]
    if np.unique(y).size < 2:
        raise InsufficientDataError("training labels contain a single class")
    max_samples = int(sec.get("max_samples", 4000))
    rng = np.random.default_rng(cfg.seed)
    if len(y) > max_samples:
        idx = np.sort(rng.choice(len(y), max_samples, replace=False))
        X, y, dates = X[idx], y[idx], [dates[i] for i in idx]
    params = {"kernel": sec.get("kernel", "rbf"), "C": float(sec.get("C", 1.0)),
              "kernel_scale": float(sec.get("kernel_scale", 1.0))}
    model = SMOClassifier(**params).fit(X, y)
    meta = {"bands": list(bands), "sensor": sensor, "lakes": [lk.id for lk in cfg.lakes],
            "n_samples": int(len(y)), "config_sha256": cfg.sha256}
    p = w._target("model.json")
    model.save(p, meta)

    ranking = band_importance(X, y, bands, int(sec.get("importance_rounds", 20)), int(sec.get("tree_depth", 2)))
    w.csv("importance.csv", ["band", "fscore"], [[b, fmt(s)] for b, s in ranking])

    k = int(sec.get("cv_folds", 0))
    if k >= 2:
        folds = kfold_split(dates, k, seed=cfg.seed)
        total = np.zeros((2, 2), dtype=int)
        per_fold = []
        for f, test in enumerate(fold_masks(dates, folds)):
            if test.all() or np.unique(y[~test]).size < 2:
                raise InsufficientDataError(f"fold {f} leaves a single training class")
            m = SMOClassifier(**params).fit(X[~test], y[~test])
            cm = confusion_matrix(y[test], m.predict(X[test]), 2)
            total += cm
            per_fold.append(metrics(cm).to_dict())
        w.json("cv_metrics.json", {"k": k, "seed": cfg.seed, "folds": per_fold,
                                   "pooled": metrics(total).to_dict(), "confusion": total.tolist()})


def _model_path(cfg: RunConfig, out_dir: Path) -> Path:
    p = cfg.paths().get("model")
    path = cfg.path(p) if p else Path(out_dir) / "train" / "model.json"
    if not path.exists():
        raise ValidationError(f"model required: no model file at {path.name}; run 'train' or set paths.model")
    return path


def run_predict(cfg: RunConfig, w: ArtifactWriter) -> None:
    sec, sensor, bands = _classify_setup(cfg)
    model = SMOClassifier.load(_model_path(cfg, w.root))
    mb = model.to_dict()["metadata"].get("bands")
    if mb is not None and tuple(mb) != bands:
        raise ValidationError(f"model was trained on bands {mb}, config selects {list(bands)}")
    scene = Scene(cfg, sensor)
    mta = cfg.thresholds.get("mta") or {}
    scheme, window = mta.get("scheme", "mean"), mta.get("window", 3)

    def one_lake(lk: LakeConfig):
        scored = []
        for a in scene.acquisitions:
            m = scene.mask(lk, a)
            if m.n_clean == 0:
                raise InsufficientDataError(f"lake {lk.id!r} has no clean pixels on the {a.sensor} grid")
            if a.clouds is not None and not is_processable(cloud_fraction(a.clouds, m), _max_cloudy(cfg)):
                continue
            fm = assemble_features([Acquisition(a.day, a.bands, a.clouds, a.key)], m, bands,
                                   _max_cloudy(cfg), strict=False)
            if not len(fm):
                continue
            grid = np.full(m.geometry.shape, np.nan)
            grid[fm.pixels[:, 0], fm.pixels[:, 1]] = model.predict_scores(fm.X)
            scored.append((a.day, grid[m.clean], fm))
        if not scored:
            raise InsufficientDataError(f"no processable acquisitions for lake {lk.id!r}")
        cube = daily_aggregate([(d, s) for d, s, _ in scored], cfg.date_from, cfg.date_to, lk.id)
        cube = mta_smooth(cube, scheme, window)
        series = daily_labels(cube, lk.frozen_threshold)
        evaluation = None
        lp = cfg.lake_path("labels", lk.id, required=False)
        if lp is not None:
            ldates, codes = read_label_csv(lp)
            enriched = enrich_labels(codes)
            truth = {d: int(t) for d, t, ok in zip(ldates, enriched.target, enriched.trainable) if ok}
            yt, yp = [], []
            for d, s, fm in scored:
                if d in truth:
                    pix = s[np.isfinite(s)]
                    yt.extend([truth[d]] * pix.size)
                    yp.extend((pix <= 50).astype(int).tolist())
            if yt:
                cm = confusion_matrix(np.array(yt), np.array(yp), 2)
                evaluation = {"classes": ["non-frozen", "frozen"], "confusion": cm.tolist(),
                              **metrics(cm).to_dict()}
        return series, evaluation

    for lk, (series, evaluation) in zip(cfg.lakes, fan_out(one_lake, cfg.lakes)):
        w.stamped(f"daily_labels_{lk.id}.csv", series.to_csv)
        dates = extract_ice_dates(series)
        w.json(f"ice_dates_{lk.id}.json", {"lake": lk.id, "method": f"{sensor}_svm", **dates.to_dict(),
                                           "frozen_threshold": lk.frozen_threshold,
                                           "mta": {"scheme": scheme, "window": window}})
        if evaluation is not None:
            w.json(f"metrics_{lk.id}.json", {"lake": lk.id, **evaluation})


# in-situ loggers

def _run_detectors(cfg: RunConfig, lk: LakeConfig) -> list:
    files = cfg.lake_path("loggers", lk.id)
    if not isinstance(files, dict):
        raise ValidationError(f"paths.loggers.{lk.id} must map logger roles to files")
    opts = cfg.section("insitu")
    out = []
    if "shallow" in files and "deeper" in files:
        out.append(insitu.detect_by_correlation(insitu.read_logger_csv(files["shallow"]),
                                                insitu.read_logger_csv(files["deeper"]),
                                                **(opts.get("correlation") or {})))
    spectral = files.get("spectral", files.get("shallow"))
    if spectral is not None:
        out.append(insitu.detect_by_spectral_energy(insitu.read_logger_csv(spectral),
                                                    **(opts.get("spectral") or {})))
    if "pressure" in files:
        out.append(insitu.detect_by_pressure(insitu.read_logger_csv(files["pressure"], kind="pressure"),
                                             **(opts.get("pressure") or {})))
    if not out:
        raise ValidationError(f"paths.loggers.{lk.id} names no usable logger roles")
    return out


def run_insitu(cfg: RunConfig, w: ArtifactWriter) -> None:
    lakes = [lk for lk in cfg.lakes if lk.id in (cfg.paths().get("loggers") or {})]
    if not lakes:
        raise ValidationError("paths.loggers has no entry for the selected lakes")
    for lk, intervals in zip(lakes, fan_out(lambda lk: _run_detectors(cfg, lk), lakes)):
        w.json(f"intervals_{lk.id}.json", {"lake": lk.id, "intervals": [iv.to_dict() for iv in intervals]})
        w.stamped(f"diagnostics_{lk.id}.csv", lambda p, iv=intervals: insitu.write_diagnostics_csv(p, iv))


# report

def _clip(series: DailyLabelSeries, cfg: RunConfig) -> DailyLabelSeries:
    keep = [i for i, d in enumerate(series.dates) if _in_range(cfg, d)]
    if not keep:
        raise InsufficientDataError("no daily labels in the selected date range")
    return DailyLabelSeries([series.dates[i] for i in keep], series.pct_fp[keep], [series.labels[i] for i in keep])


def _event_dates(path: Path):
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: cannot read event JSON ({exc})") from exc
    on = d.get("ice_on", d.get("freeze_up"))
    off = d.get("ice_off", d.get("break_up"))
    try:
        return (parse_date(on) if on else None), (parse_date(off) if off else None), d.get("status", "ok")
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def collect_results(cfg: RunConfig, out_dir: Path) -> list:
    """Method results per lake from configured label/event files and earlier stage outputs."""
    results = []
    include = cfg.section("report").get("include_outputs", True)
    for lk in cfg.lakes:
        for method, p in sorted((cfg.lake_path("daily_labels", lk.id, required=False) or {}).items()):
            results.append(report.MethodResult.from_daily(lk.id, method, _clip(DailyLabelSeries.from_csv(p), cfg)))
        for method, p in sorted((cfg.lake_path("events", lk.id, required=False) or {}).items()):
            on, off, status = _event_dates(p)
            results.append(report.MethodResult(lk.id, method, on, off, remarks="" if status == "ok" else status))
        if not include:
            continue
        pred = out_dir / "predict" / f"daily_labels_{lk.id}.csv"
        if pred.exists():
            sensor = cfg.section("classify").get("sensor", "svm")
            results.append(report.MethodResult.from_daily(lk.id, f"{sensor}_svm",
                                                          _clip(DailyLabelSeries.from_csv(pred), cfg)))
        ev = out_dir / "phenology" / f"events_{lk.id}.json"
        if ev.exists():
            on, off, status = _event_dates(ev)
            results.append(report.MethodResult(lk.id, "two_step", on, off, remarks="" if status == "ok" else status))
        iv = out_dir / "insitu" / f"intervals_{lk.id}.json"
        if iv.exists():
            for item in json.loads(iv.read_text())["intervals"]:
                on = parse_date(item["freeze_up"]) if item["freeze_up"] else None
                off = parse_date(item["break_up"]) if item["break_up"] else None
                results.append(report.MethodResult(lk.id, f"insitu_{item['method']}", on, off,
                                                   remarks="" if item["status"] == "ok" else item["status"]))
    return results


def run_report(cfg: RunConfig, w: ArtifactWriter) -> None:
    results = collect_results(cfg, w.root)
    if not results:
        raise InsufficientDataError("no method results to report")
    w.adopt(report.emit_report(results, w.dir, comment=w.stamp))


RUNNERS = {"lswt": run_lswt, "icemap": run_icemap, "phenology": run_phenology, "train": run_train,
           "predict": run_predict, "insitu": run_insitu, "report": run_report}


def run_pipeline(cfg: RunConfig, command: str, out_dir) -> Path:
    """Run one stage and write its artifacts under ``out_dir/<command>``.

    Returns the path of the stage's ``manifest.json`` (file hashes).
    Module errors are re-raised with the stage name prefixed.
    """
    if command not in RUNNERS:
        raise ValidationError(f"unknown command {command!r}; choose from {', '.join(COMMANDS)}")
    w = ArtifactWriter(out_dir, command, cfg)
    try:
        RUNNERS[command](cfg, w)
    except LakeIceError as exc:
        raise type(exc)(f"{command}: {exc}") from exc
    return w.finish()
