"""Grids, lake outlines, cloud masks and geolocation correction."""

from .clouds import CloudCode, CloudMask, binarize_cloud_mask, cloud_fraction, is_processable
from .grid import (GridGeometry, RasterGrid, bilinear_sample, check_same_geometry,
                   upsample_bilinear, upsample_nearest)
from .io import (read_ascii_grid, read_cloud_mask, read_outline_csv, write_ascii_grid,
                 write_outline_csv)
from .polygon import (LakeMask, LakeOutline, PixelClass, coverage_fraction, distance_to_ring,
                      generalize_outline, points_in_polygon, rasterize_outline)
from .shift import GeoShift, apply_shift, estimate_geolocation_shift, otsu_threshold

__all__ = [
    "CloudCode", "CloudMask", "GeoShift", "GridGeometry", "LakeMask", "LakeOutline", "PixelClass",
    "RasterGrid", "apply_shift", "bilinear_sample", "binarize_cloud_mask", "check_same_geometry",
    "cloud_fraction", "coverage_fraction", "distance_to_ring", "estimate_geolocation_shift",
    "generalize_outline", "is_processable", "otsu_threshold", "points_in_polygon",
    "rasterize_outline", "read_ascii_grid", "read_cloud_mask", "read_outline_csv",
    "upsample_bilinear", "upsample_nearest", "write_ascii_grid", "write_outline_csv",
]
