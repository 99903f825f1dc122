"""Cyclic encoding of geographic coordinates and per-pixel coordinate grids.

Longitude wraps at the +/-180 dateline, so it is mapped onto a circle via
(sin, cos) of an angle proportional to the coordinate.  Two variants exist:

* ``full-circle`` (default): angle = pi * lon / 180, period 360 degrees.
  Distinct longitudes get distinct encodings and the dateline is continuous.
* ``paper-literal``: angle = 2 * pi * lon / 180, period 180 degrees, kept
  for fidelity with the published formula (antipodal longitudes collide).

Latitude does not wrap; the third grid channel is the linear scalar lat/90.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidCoordinateError

FULL_CIRCLE = "full-circle"
PAPER_LITERAL = "paper-literal"
_MODES = (FULL_CIRCLE, PAPER_LITERAL)


@dataclass(frozen=True)
class GeoPoint:
    """A point on the globe, latitude in [-90, 90], longitude in degrees."""
    lat_deg: float
    lon_deg: float

    def __post_init__(self):
        if not (math.isfinite(self.lat_deg) and math.isfinite(self.lon_deg)):
            raise InvalidCoordinateError(
                f"non-finite coordinate ({self.lat_deg}, {self.lon_deg})")
        if not -90.0 <= self.lat_deg <= 90.0:
            raise InvalidCoordinateError(f"latitude {self.lat_deg} outside [-90, 90]")


def normalize_longitude(lon_deg):
    """Wrap longitude into the half-open range [-180, 180)."""
    return np.mod(np.asarray(lon_deg, dtype=np.float64) + 180.0, 360.0) - 180.0


def encode_longitude(lon_deg, mode: str = FULL_CIRCLE):
    """Return the (sin, cos) pair of the cyclic longitude encoding.

    Accepts scalars or arrays; input is normalized to [-180, 180) first so
    +180 and -180 encode to the identical pair.
    """
    if mode not in _MODES:
        raise InvalidCoordinateError(f"unknown encoding mode {mode!r}")
    lon = np.asarray(lon_deg, dtype=np.float64)
    if not np.all(np.isfinite(lon)):
        raise InvalidCoordinateError("non-finite longitude")
    lon = normalize_longitude(lon)
    theta = lon * (math.pi / 180.0 if mode == FULL_CIRCLE else 2.0 * math.pi / 180.0)
    return np.sin(theta), np.cos(theta)


def encode_latitude(lat_deg):
    """Scale latitude linearly to [-1, 1] (lat / 90)."""
    lat = np.asarray(lat_deg, dtype=np.float64)
    if not np.all(np.isfinite(lat)):
        raise InvalidCoordinateError("non-finite latitude")
    if np.any(lat < -90.0) or np.any(lat > 90.0):
        raise InvalidCoordinateError("latitude outside [-90, 90]")
    return lat / 90.0


def build_geo_grid(center: GeoPoint, h: int, w: int, pixel_size_deg: float,
                   mode: str = FULL_CIRCLE) -> np.ndarray:
    """Rasterize encoded coordinates into an h x w x 3 grid.

    Pixel (i, j) encodes that pixel's center coordinate, offset linearly from
    the grid center (row 0 is north).  Channels are (sin-lon, cos-lon,
    lat/90).  ``pixel_size_deg = 0`` yields constant planes from the center
    coordinate.
    """
    if h < 1 or w < 1:
        raise InvalidCoordinateError(f"grid extent {h}x{w} must be >= 1")
    if pixel_size_deg < 0:
        raise InvalidCoordinateError("pixel_size_deg must be >= 0")
    cols = (np.arange(w, dtype=np.float64) - (w - 1) / 2.0) * pixel_size_deg
    rows = ((h - 1) / 2.0 - np.arange(h, dtype=np.float64)) * pixel_size_deg
    lons = center.lon_deg + cols
    lats = center.lat_deg + rows
    if np.any(lats < -90.0) or np.any(lats > 90.0):
        raise InvalidCoordinateError(
            f"grid rows reach latitude outside [-90, 90] (center {center.lat_deg}, "
            f"pixel size {pixel_size_deg}, {h} rows)")
    sin_lon, cos_lon = encode_longitude(lons, mode)
    lat_term = encode_latitude(lats)
    grid = np.empty((h, w, 3), dtype=np.float32)
    grid[:, :, 0] = sin_lon[None, :]
    grid[:, :, 1] = cos_lon[None, :]
    grid[:, :, 2] = lat_term[:, None]
    return grid
