import json
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lakeice.exceptions import GeometryMismatchError, ValidationError
from lakeice.icedetect import (IceState, IceThresholds, buffered_lake_mask, classify_pixel, ice_map, ndsi,
                               write_ice_map)
from lakeice.rastergeo import (CloudMask, GridGeometry, LakeOutline, RasterGrid, rasterize_outline,
                               read_ascii_grid)
from synth import regular_polygon

ICE, WATER, CLOUD = IceState.ICE, IceState.OPEN_WATER, IceState.CLOUD


def test_ndsi_values():
    assert ndsi(0.3, 0.3) == 0.0
    assert ndsi(0.6, 0.2) == pytest.approx(0.5)
    assert ndsi(0.05, 0.45) == pytest.approx(-0.8)
    assert np.isnan(ndsi(0.0, 0.0))


@given(st.floats(0, 1), st.floats(0, 1))
def test_ndsi_range_and_antisymmetry(a, b):
    if a + b == 0:
        return
    v = ndsi(a, b)
    assert -1 <= v <= 1
    assert v == -ndsi(b, a)


@pytest.mark.parametrize("args,state", [
    ((0.5, 0.6, 270.0), ICE),
    ((0.5, 0.6, 276.0), WATER),
    ((0.45, 0.6, 270.0), WATER),
    ((0.5, 0.08, 270.0), WATER),
    ((0.5, 0.6, 275.0), WATER),
])
def test_classify_examples(args, state):
    assert classify_pixel(*args) is state


def test_classify_cloud_and_missing_lswt():
    assert classify_pixel(0.9, 0.9, 260.0, cloud=True) is CLOUD
    assert classify_pixel(0.9, 0.9, float("nan")) is CLOUD


def test_inclusive_thresholds():
    thr = IceThresholds(strict=False)
    assert classify_pixel(0.45, 0.08, 275.0, thr) is ICE


def test_threshold_validation():
    with pytest.raises(ValidationError):
        IceThresholds(ndsi_min=1.5)


@given(st.floats(-1, 1), st.floats(0, 1), st.floats(250, 300), st.floats(0, 20))
def test_classify_monotone(n, i2, t, dt):
    if classify_pixel(n, i2, t) is WATER:
        assert classify_pixel(n, i2, t + dt) is WATER
    if classify_pixel(n, i2, t) is ICE:
        assert classify_pixel(min(n + dt / 20, 1.0), i2, t) is ICE


def circle_lake(radius=1000.0, n=64):
    geom = GridGeometry(30, 30, -1500.0, 1500.0, 100.0, 100.0)
    outline = LakeOutline(regular_polygon(0, 0, radius, n))
    return geom, outline, rasterize_outline(outline, geom)


def test_buffer_zero_identity():
    _, outline, mask = circle_lake()
    assert buffered_lake_mask(mask, outline, 0) is mask


def test_buffer_distance_field():
    geom, outline, mask = circle_lake()
    out = buffered_lake_mask(mask, outline, 600.0)
    cx, cy = geom.centers()
    r = np.hypot(cx, cy)
    assert out.n_clean > 0
    assert r[out.clean].max() <= 400.0
    # every demoted pixel was clean and close to the shore
    demoted = mask.clean & ~out.clean
    assert out.mixed[demoted].all()


def test_buffer_demotes_only_shore_pixels():
    geom = GridGeometry(20, 20, -3750.0, 3750.0, 375.0, 375.0)
    outline = LakeOutline(regular_polygon(110, -60, 3000, 80))
    mask = rasterize_outline(outline, geom)
    out = buffered_lake_mask(mask, outline, 300.0)
    demoted = mask.clean & ~out.clean
    assert demoted.any()
    # a clean pixel center is at least half a pixel from shore, so only the outermost clean ring can go
    padded = np.pad(mask.clean, 1)
    interior = padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    assert not (demoted & interior).any()


def test_buffer_larger_than_lake_warns():
    _, outline, mask = circle_lake()
    with pytest.warns(UserWarning):
        out = buffered_lake_mask(mask, outline, 5000.0)
    assert out.n_clean == 0


@given(st.floats(0, 500), st.floats(0, 500))
def test_buffer_monotone(a, b):
    _, outline, mask = circle_lake()
    lo, hi = sorted((a, b))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert buffered_lake_mask(mask, outline, hi).n_clean <= buffered_lake_mask(mask, outline, lo).n_clean


def bands_for(geom, i2, i3, t):
    full = lambda v: RasterGrid(geom, np.broadcast_to(np.asarray(v, float), geom.shape).copy())
    return {"I2": full(i2), "I3": full(i3), "LSWT": full(t)}


def test_ice_map_all_snow():
    geom, outline, mask = circle_lake()
    m = ice_map(bands_for(geom, 0.7, 0.1, 268.0), None, mask)
    s = m.summary()
    assert s["n_ice"] == mask.n_clean and s["n_water"] == 0
    assert (m.states[~mask.clean] == IceState.OUTSIDE).all()


def test_ice_map_all_cloud():
    geom, outline, mask = circle_lake()
    clouds = CloudMask.from_cloudy(geom, np.ones(geom.shape, bool))
    s = ice_map(bands_for(geom, 0.7, 0.1, 268.0), clouds, mask).summary()
    assert s["n_cloud"] == s["n_clean"] == mask.n_clean and s["n_ice"] == s["n_water"] == 0


def test_ice_map_checkerboard():
    geom, outline, mask = circle_lake()
    board = (np.add.outer(np.arange(30), np.arange(30)) % 2).astype(bool)
    i2 = np.where(board, 0.7, 0.04)
    i3 = np.where(board, 0.1, 0.03)
    t = np.where(board, 268.0, 280.0)
    m = ice_map(bands_for(geom, i2, i3, t), None, mask)
    s = m.summary()
    assert s["n_ice"] == int((board & mask.clean).sum())
    assert s["n_water"] == int((~board & mask.clean).sum())
    assert s["n_ice"] + s["n_water"] + s["n_cloud"] == mask.n_clean


def test_ice_map_geometry_mismatch():
    geom, outline, mask = circle_lake()
    other = GridGeometry(30, 30, -1400.0, 1500.0, 100.0, 100.0)
    bands = bands_for(geom, 0.7, 0.1, 268.0)
    bands["LSWT"] = RasterGrid(other, np.full(other.shape, 268.0))
    with pytest.raises(GeometryMismatchError):
        ice_map(bands, None, mask)


def test_ice_map_export(tmp_path):
    geom, outline, mask = circle_lake()
    m = ice_map(bands_for(geom, 0.7, 0.1, 268.0), None, mask)
    write_ice_map(tmp_path / "map.asc", m)
    back = read_ascii_grid(tmp_path / "map.asc")
    assert np.array_equal(back.values.astype(int), m.states.astype(int))
    assert back.nodata == 255
    summary = json.loads((tmp_path / "map.summary.json").read_text())
    assert summary["n_ice"] == mask.n_clean
