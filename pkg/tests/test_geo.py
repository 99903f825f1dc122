import math

import numpy as np
import pytest

from naturamap.errors import InvalidCoordinateError
from naturamap.geo import (FULL_CIRCLE, PAPER_LITERAL, GeoPoint, build_geo_grid,
                           encode_latitude, encode_longitude)


def test_zero_longitude():
    s, c = encode_longitude(0.0)
    assert s == 0.0 and c == 1.0


def test_wrap_point_identical_both_modes():
    for mode in (FULL_CIRCLE, PAPER_LITERAL):
        assert encode_longitude(180.0, mode) == encode_longitude(-180.0, mode)


def test_quarter_turn_values():
    s, c = encode_longitude(90.0, FULL_CIRCLE)
    assert abs(s - 1.0) < 1e-12 and abs(c) < 1e-12
    s, c = encode_longitude(90.0, PAPER_LITERAL)
    assert abs(s) < 1e-12 and abs(c + 1.0) < 1e-12


def test_latitude_examples():
    assert encode_latitude(0.0) == 0.0
    assert encode_latitude(90.0) == 1.0
    assert encode_latitude(-45.0) == -0.5


def test_invalid_inputs():
    with pytest.raises(InvalidCoordinateError):
        encode_longitude(float("nan"))
    with pytest.raises(InvalidCoordinateError):
        encode_longitude(float("inf"))
    with pytest.raises(InvalidCoordinateError):
        encode_latitude(90.5)
    with pytest.raises(InvalidCoordinateError):
        encode_longitude(0.0, mode="bogus")
    with pytest.raises(InvalidCoordinateError):
        GeoPoint(lat_deg=91.0, lon_deg=0.0)


def test_wrap_identity_property(rng):
    lons = rng.uniform(-720, 720, size=200)
    for mode in (FULL_CIRCLE, PAPER_LITERAL):
        s1, c1 = encode_longitude(lons, mode)
        s2, c2 = encode_longitude(lons + 360.0, mode)
        assert np.max(np.abs(s1 - s2)) < 1e-9
        assert np.max(np.abs(c1 - c2)) < 1e-9


def test_dateline_continuity():
    for eps in np.linspace(1e-4, 0.1, 50):
        s1, c1 = encode_longitude(180.0 - eps, FULL_CIRCLE)
        s2, c2 = encode_longitude(-180.0 + eps, FULL_CIRCLE)
        dist = math.hypot(s1 - s2, c1 - c2)
        assert dist <= 0.07 * eps


def test_pythagorean_everywhere(rng):
    grid = build_geo_grid(GeoPoint(12.0, 34.0), 16, 16, 0.01)
    assert np.max(np.abs(grid[:, :, 0] ** 2 + grid[:, :, 1] ** 2 - 1.0)) < 1e-6
    assert grid.min() >= -1.0 and grid.max() <= 1.0


def test_full_circle_injective(rng):
    lons = np.concatenate([rng.uniform(-180, 180, 500),
                           np.linspace(-180, 179.9999, 500)])
    s, c = encode_longitude(lons, FULL_CIRCLE)
    pairs = {(float(a), float(b)) for a, b in zip(s, c)}
    assert len(pairs) == len(np.unique(lons))


def test_paper_literal_collides_antipodes():
    # the printed formula has period 180 degrees: 0 and 180 coincide
    assert np.allclose(encode_longitude(0.0, PAPER_LITERAL),
                       encode_longitude(180.0, PAPER_LITERAL), atol=1e-12)


def test_phase_complementarity():
    for lon in (0.0, 180.0, -180.0):
        s, c = encode_longitude(lon, FULL_CIRCLE)
        assert abs(s) < 1e-12
        assert abs(abs(c) - 1.0) < 1e-12
    for lon in (0.0, 90.0, -90.0, 180.0):
        s, c = encode_longitude(lon, PAPER_LITERAL)
        assert abs(s) < 1e-9
        assert abs(abs(c) - 1.0) < 1e-9


def test_grid_constant_planes():
    grid = build_geo_grid(GeoPoint(0.0, 0.0), 2, 2, 0.0)
    assert grid.shape == (2, 2, 3)
    assert np.array_equal(grid, np.broadcast_to(np.array([0.0, 1.0, 0.0],
                                                         dtype=np.float32), (2, 2, 3)))


def test_grid_offset_arithmetic():
    grid = build_geo_grid(GeoPoint(0.0, 0.0), 1, 2, 90.0)
    expect = math.sin(math.pi / 4.0)
    assert abs(grid[0, 0, 0] + expect) < 1e-6
    assert abs(grid[0, 1, 0] - expect) < 1e-6


def test_grid_dateline_wrap():
    grid = build_geo_grid(GeoPoint(10.0, 179.95), 1, 2, 0.1)
    # pixel centers at 179.90 and 180.00 (wrapping to -180); the encoded
    # channels stay continuous across the dateline
    diff = np.abs(grid[0, 0] - grid[0, 1])
    assert diff.max() < 0.004


def test_grid_latitude_orientation_and_bounds():
    grid = build_geo_grid(GeoPoint(10.0, 0.0), 3, 1, 1.0)
    # row 0 is north of the center
    assert grid[0, 0, 2] > grid[1, 0, 2] > grid[2, 0, 2]
    assert abs(grid[1, 0, 2] - 10.0 / 90.0) < 1e-7
    with pytest.raises(InvalidCoordinateError):
        build_geo_grid(GeoPoint(89.9, 0.0), 9, 1, 1.0)


def test_grid_rejects_bad_sizes():
    with pytest.raises(InvalidCoordinateError):
        build_geo_grid(GeoPoint(0.0, 0.0), 0, 2, 1.0)
    with pytest.raises(InvalidCoordinateError):
        build_geo_grid(GeoPoint(0.0, 0.0), 2, 2, -1.0)
