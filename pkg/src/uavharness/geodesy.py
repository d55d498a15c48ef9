"""Geodetic <-> local NED conversions and heightmap terrain queries.

The local frame is a flat tangent plane anchored at a geodetic origin. Scale
factors come from the WGS-84 meridional (M) and prime-vertical (N) radii of
curvature at the origin latitude, which keeps the error under 0.1% inside
10 km. Conversions beyond 50 km are refused.

Sign rule used everywhere in the package: ``down = origin.alt - alt``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

from .errors import OutOfBounds, OutOfFrame, PolarOrigin

WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)

MAX_ORIGIN_LAT_DEG = 89.0
MAX_FRAME_RADIUS_M = 50_000.0


def normalize_lon(lon_deg: float) -> float:
    """Wrap a longitude into [-180, 180)."""
    lon = (lon_deg + 180.0) % 360.0 - 180.0
    # fmod rounding can produce exactly 180.0 for inputs just below -180
    return -180.0 if lon >= 180.0 else lon


@dataclass(frozen=True)
class GeodeticCoord:
    latitude_deg: float
    longitude_deg: float
    altitude_m: float = 0.0

    def __post_init__(self):
        for name in ("latitude_deg", "longitude_deg", "altitude_m"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not -90.0 <= self.latitude_deg <= 90.0:
            raise ValueError(f"latitude {self.latitude_deg} outside [-90, 90]")
        object.__setattr__(self, "longitude_deg", normalize_lon(self.longitude_deg))


class NedPosition(NamedTuple):
    north_m: float
    east_m: float
    down_m: float

    @property
    def height_m(self) -> float:
        """Height above the frame origin (positive up)."""
        return -self.down_m


@dataclass(frozen=True)
class FrameOrigin:
    origin: GeodeticCoord
    lat_scale_m_per_deg: float
    lon_scale_m_per_deg: float


def radii_of_curvature(lat_deg: float) -> tuple[float, float]:
    """Return (meridional M, prime-vertical N) radii in meters."""
    s = math.sin(math.radians(lat_deg))
    w2 = 1.0 - WGS84_E2 * s * s
    n = WGS84_A / math.sqrt(w2)
    m = WGS84_A * (1.0 - WGS84_E2) / (w2 * math.sqrt(w2))
    return m, n


def make_origin(origin: GeodeticCoord) -> FrameOrigin:
    if abs(origin.latitude_deg) >= MAX_ORIGIN_LAT_DEG:
        raise PolarOrigin(
            f"origin latitude {origin.latitude_deg} too close to a pole "
            f"(|lat| must be < {MAX_ORIGIN_LAT_DEG})"
        )
    m, n = radii_of_curvature(origin.latitude_deg)
    deg = math.pi / 180.0
    return FrameOrigin(
        origin=origin,
        lat_scale_m_per_deg=m * deg,
        lon_scale_m_per_deg=n * math.cos(math.radians(origin.latitude_deg)) * deg,
    )


def geodetic_to_ned(frame: FrameOrigin, p: GeodeticCoord) -> NedPosition:
    o = frame.origin
    dlon = normalize_lon(p.longitude_deg - o.longitude_deg)
    north = (p.latitude_deg - o.latitude_deg) * frame.lat_scale_m_per_deg
    east = dlon * frame.lon_scale_m_per_deg
    if math.hypot(north, east) > MAX_FRAME_RADIUS_M:
        raise OutOfFrame(
            f"point ({p.latitude_deg}, {p.longitude_deg}) is "
            f"{math.hypot(north, east):.0f} m from the frame origin (limit {MAX_FRAME_RADIUS_M:.0f} m)"
        )
    return NedPosition(north, east, o.altitude_m - p.altitude_m)


def ned_to_geodetic(frame: FrameOrigin, p: Sequence[float]) -> GeodeticCoord:
    north, east, down = p
    if not (math.isfinite(north) and math.isfinite(east) and math.isfinite(down)):
        raise ValueError("NED position must be finite")
    o = frame.origin
    return GeodeticCoord(
        o.latitude_deg + north / frame.lat_scale_m_per_deg,
        o.longitude_deg + east / frame.lon_scale_m_per_deg,
        o.altitude_m - down,
    )


def ned_to_geodetic_tuple(frame: FrameOrigin, north: float, east: float, down: float) -> tuple[float, float, float]:
    """Unvalidated fast path used when writing telemetry."""
    o = frame.origin
    return (
        o.latitude_deg + north / frame.lat_scale_m_per_deg,
        normalize_lon(o.longitude_deg + east / frame.lon_scale_m_per_deg),
        o.altitude_m - down,
    )


@dataclass(frozen=True)
class Heightmap:
    """Regular elevation grid, row-major with rows running north.

    Sample ``[r][c]`` sits at ``(north_min + r*cell, east_min + c*cell)``.
    Elevations are heights above the frame origin altitude, in meters.
    """

    north_min_m: float
    east_min_m: float
    cell_size_m: float
    rows: int
    cols: int
    samples: tuple[float, ...]

    @property
    def north_max_m(self) -> float:
        return self.north_min_m + (self.rows - 1) * self.cell_size_m

    @property
    def east_max_m(self) -> float:
        return self.east_min_m + (self.cols - 1) * self.cell_size_m

    def sample(self, r: int, c: int) -> float:
        return self.samples[r * self.cols + c]

    def contains(self, north_m: float, east_m: float) -> bool:
        return (self.north_min_m <= north_m <= self.north_max_m
                and self.east_min_m <= east_m <= self.east_max_m)

    def elevation(self, north_m: float, east_m: float) -> float:
        if not self.contains(north_m, east_m):
            raise OutOfBounds(
                f"({north_m}, {east_m}) outside heightmap extent "
                f"north [{self.north_min_m}, {self.north_max_m}] east [{self.east_min_m}, {self.east_max_m}]"
            )
        return self._bilinear(north_m, east_m)

    def elevation_clamped(self, north_m: float, east_m: float) -> float:
        """Elevation with the query clamped onto the grid (edge extension)."""
        n = min(max(north_m, self.north_min_m), self.north_max_m)
        e = min(max(east_m, self.east_min_m), self.east_max_m)
        return self._bilinear(n, e)

    def _bilinear(self, north_m: float, east_m: float) -> float:
        if self.rows == 1 and self.cols == 1:
            return self.samples[0]
        fr = (north_m - self.north_min_m) / self.cell_size_m
        fc = (east_m - self.east_min_m) / self.cell_size_m
        r = min(int(fr), max(self.rows - 2, 0))
        c = min(int(fc), max(self.cols - 2, 0))
        u = fr - r if self.rows > 1 else 0.0
        v = fc - c if self.cols > 1 else 0.0
        r1 = r + 1 if self.rows > 1 else r
        c1 = c + 1 if self.cols > 1 else c
        cols = self.cols
        s = self.samples
        s00 = s[r * cols + c]
        s01 = s[r * cols + c1]
        s10 = s[r1 * cols + c]
        s11 = s[r1 * cols + c1]
        if u == 0.0 and v == 0.0:
            return s00
        return (s00 * (1.0 - u) * (1.0 - v) + s01 * (1.0 - u) * v
                + s10 * u * (1.0 - v) + s11 * u * v)


def terrain_elevation(world, north_m: float, east_m: float) -> float:
    """Bilinear terrain height at a local position; raises OutOfBounds off-grid."""
    return world.heightmap.elevation(north_m, east_m)
