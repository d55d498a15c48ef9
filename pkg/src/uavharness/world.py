"""Environment model: terrain, box obstacles, wind, and 2D zone geometry.

Map file format (JSON)::

    {
      "name": "hills",
      "origin": {"lat": 38.63, "lon": -90.23, "alt": 150.0},
      "heightmap": {"cell_size_m": 10.0, "rows": 3, "cols": 3,
                    "samples": [0, 0, 0, 0, 5, 0, 0, 0, 0]},
      "obstacles": [{"center_ned": [0, 5, -10], "half_extents": [2, 2, 10]}],
      "bounds": {"north_min_m": -10, "north_max_m": 10,
                 "east_min_m": -10, "east_max_m": 10}
    }

The heightmap is anchored at the south-west corner of ``bounds`` and must
cover them. See docs/map_format.md for the full field table.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from pydantic import Field, field_validator

from ._model import Model
from .errors import MapParseError, PolarOrigin, UnknownMap
from .geodesy import FrameOrigin, GeodeticCoord, Heightmap, NedPosition, make_origin

Point2 = tuple[float, float]

BOUNDARY_EPS = 1e-9


class WindField(Model):
    """Wind blowing *toward* ``direction_deg`` (clockwise from north)."""

    direction_deg: float = 0.0
    speed_mps: float = Field(0.0, ge=0)
    gust_amplitude_mps: float = Field(0.0, ge=0)
    gust_period_s: float = Field(10.0, gt=0)

    @field_validator("direction_deg")
    @classmethod
    def _wrap_direction(cls, v: float) -> float:
        return v % 360.0


def wind_at(wind: WindField, t: float) -> tuple[float, float, float]:
    """NED wind velocity at time ``t``; the down component is always 0."""
    mag = wind.speed_mps
    if wind.gust_amplitude_mps > 0:
        mag += wind.gust_amplitude_mps * math.sin(2.0 * math.pi * t / wind.gust_period_s)
    if mag == 0.0:
        return (0.0, 0.0, 0.0)
    rad = math.radians(wind.direction_deg)
    # exact axes for the cardinal directions; cos(pi/2) is not 0 in floats
    if wind.direction_deg == 0.0:
        return (mag, 0.0, 0.0)
    if wind.direction_deg == 90.0:
        return (0.0, mag, 0.0)
    if wind.direction_deg == 180.0:
        return (-mag, 0.0, 0.0)
    if wind.direction_deg == 270.0:
        return (0.0, -mag, 0.0)
    return (mag * math.cos(rad), mag * math.sin(rad), 0.0)


@dataclass(frozen=True)
class ObstacleBox:
    center: NedPosition
    half_extents: tuple[float, float, float]

    def __post_init__(self):
        if any(h <= 0 for h in self.half_extents):
            raise ValueError("obstacle half extents must be > 0")

    def distance_to(self, p: Sequence[float]) -> float:
        """Euclidean distance from a point to the closed box (0 inside)."""
        dn = abs(p[0] - self.center[0]) - self.half_extents[0]
        de = abs(p[1] - self.center[1]) - self.half_extents[1]
        dd = abs(p[2] - self.center[2]) - self.half_extents[2]
        dn = dn if dn > 0.0 else 0.0
        de = de if de > 0.0 else 0.0
        dd = dd if dd > 0.0 else 0.0
        return math.sqrt(dn * dn + de * de + dd * dd)

    def contains(self, p: Sequence[float]) -> bool:
        return self.distance_to(p) == 0.0


@dataclass(frozen=True)
class Bounds:
    north_min_m: float
    north_max_m: float
    east_min_m: float
    east_max_m: float

    def contains(self, north_m: float, east_m: float) -> bool:
        return (self.north_min_m <= north_m <= self.north_max_m
                and self.east_min_m <= east_m <= self.east_max_m)


def _segments_intersect(p1: Point2, p2: Point2, q1: Point2, q2: Point2) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return 0 if abs(v) < 1e-12 else (1 if v > 0 else -1)

    def on_seg(a, b, c):
        return (min(a[0], b[0]) - 1e-12 <= c[0] <= max(a[0], b[0]) + 1e-12
                and min(a[1], b[1]) - 1e-12 <= c[1] <= max(a[1], b[1]) + 1e-12)

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    return ((o1 == 0 and on_seg(p1, p2, q1)) or (o2 == 0 and on_seg(p1, p2, q2))
            or (o3 == 0 and on_seg(q1, q2, p1)) or (o4 == 0 and on_seg(q1, q2, p2)))


def polygon_area(vertices: Sequence[Point2]) -> float:
    s = 0.0
    n = len(vertices)
    for i in range(n):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % n]
        s += x1 * y2 - x2 * y1
    return 0.5 * s


def polygon_problems(vertices: Sequence[Point2]) -> list[str]:
    """Reasons a vertex list is not a valid simple polygon (empty if valid)."""
    if len(vertices) < 3:
        return ["polygon needs at least 3 vertices"]
    if any(not (math.isfinite(a) and math.isfinite(b)) for a, b in vertices):
        return ["polygon vertices must be finite"]
    if abs(polygon_area(vertices)) < 1e-9:
        return ["polygon has zero area"]
    n = len(vertices)
    edges = [(vertices[i], vertices[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            # adjacent edges share a vertex by construction
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_intersect(*edges[i], *edges[j]):
                return [f"polygon edges {i} and {j} intersect (not simple)"]
    return []


@dataclass(frozen=True)
class Polygon2D:
    vertices: tuple[Point2, ...]

    def __post_init__(self):
        verts = tuple((float(a), float(b)) for a, b in self.vertices)
        object.__setattr__(self, "vertices", verts)
        problems = polygon_problems(verts)
        if problems:
            raise ValueError(problems[0])


@dataclass(frozen=True)
class AltitudeBand:
    """Heights above the frame origin; ``ceiling_m=None`` means unbounded."""

    floor_m: float = -math.inf
    ceiling_m: Optional[float] = None

    def __post_init__(self):
        if self.ceiling_m is not None and not self.floor_m < self.ceiling_m:
            raise ValueError("altitude band floor must be below ceiling")

    def contains(self, height_m: float) -> bool:
        if height_m < self.floor_m:
            return False
        return self.ceiling_m is None or height_m <= self.ceiling_m


def _on_segment_2d(px, py, ax, ay, bx, by, eps=BOUNDARY_EPS) -> bool:
    return _dist_point_segment_2d(px, py, ax, ay, bx, by) <= eps


def _dist_point_segment_2d(px, py, ax, ay, bx, by) -> float:
    dx, dy = bx - ax, by - ay
    den = dx * dx + dy * dy
    if den == 0.0:
        return math.hypot(px - ax, py - ay)
    t = ((px - ax) * dx + (py - ay) * dy) / den
    t = 0.0 if t < 0.0 else (1.0 if t > 1.0 else t)
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def point_in_polygon(poly: Polygon2D, north_m: float, east_m: float) -> bool:
    """Even-odd ray cast; points on the boundary count as inside."""
    verts = poly.vertices
    n = len(verts)
    inside = False
    j = n - 1
    for i in range(n):
        ni, ei = verts[i]
        nj, ej = verts[j]
        if _on_segment_2d(north_m, east_m, ni, ei, nj, ej):
            return True
        if (ei > east_m) != (ej > east_m):
            n_cross = ni + (east_m - ei) * (nj - ni) / (ej - ei)
            if north_m < n_cross:
                inside = not inside
        j = i
    return inside


def distance_to_polygon_boundary(poly: Polygon2D, north_m: float, east_m: float) -> float:
    verts = poly.vertices
    n = len(verts)
    return min(
        _dist_point_segment_2d(north_m, east_m, *verts[i], *verts[(i + 1) % n])
        for i in range(n)
    )


@dataclass(frozen=True)
class WorldModel:
    name: str
    frame: FrameOrigin
    heightmap: Heightmap
    obstacles: tuple[ObstacleBox, ...]
    bounds: Bounds
    extra: dict = field(default_factory=dict, compare=False)

    def terrain_height(self, north_m: float, east_m: float) -> float:
        """Terrain height used by physics; clamps queries outside the grid."""
        return self.heightmap.elevation_clamped(north_m, east_m)

    def with_origin(self, origin: GeodeticCoord) -> "WorldModel":
        return WorldModel(self.name, make_origin(origin), self.heightmap,
                          self.obstacles, self.bounds, self.extra)


# Built-in "blocks" map: flat ground at the origin altitude over a 1 km square,
# with a 4x4 grid of 40 m x 40 m x 60 m blocks centred at +-100 m and +-300 m
# north/east. The origin itself and the corridors between blocks are clear.
BLOCKS_ORIGIN = GeodeticCoord(38.6357, -90.2346, 160.0)
BLOCKS_HALF_SIZE_M = 500.0
BLOCKS_OFFSETS_M = (-300.0, -100.0, 100.0, 300.0)
BLOCKS_HALF_EXTENTS = (20.0, 20.0, 30.0)
BLOCKS_CELL_M = 100.0


def blocks_map() -> WorldModel:
    cells = int(2 * BLOCKS_HALF_SIZE_M / BLOCKS_CELL_M) + 1
    obstacles = tuple(
        ObstacleBox(NedPosition(n, e, -BLOCKS_HALF_EXTENTS[2]), BLOCKS_HALF_EXTENTS)
        for n in BLOCKS_OFFSETS_M
        for e in BLOCKS_OFFSETS_M
    )
    return WorldModel(
        name="blocks",
        frame=make_origin(BLOCKS_ORIGIN),
        heightmap=Heightmap(-BLOCKS_HALF_SIZE_M, -BLOCKS_HALF_SIZE_M, BLOCKS_CELL_M,
                            cells, cells, (0.0,) * (cells * cells)),
        obstacles=obstacles,
        bounds=Bounds(-BLOCKS_HALF_SIZE_M, BLOCKS_HALF_SIZE_M, -BLOCKS_HALF_SIZE_M, BLOCKS_HALF_SIZE_M),
    )


BUILTIN_MAPS = {"blocks": blocks_map}


def _num(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise MapParseError(f"{where}: expected a number, got {value!r}")
    if not math.isfinite(value):
        raise MapParseError(f"{where}: must be finite")
    return float(value)


def _vec3(value, where: str) -> tuple[float, float, float]:
    if not isinstance(value, list) or len(value) != 3:
        raise MapParseError(f"{where}: expected a list of 3 numbers")
    return tuple(_num(v, f"{where}[{i}]") for i, v in enumerate(value))


def _require(doc: dict, key: str, where: str):
    if not isinstance(doc, dict):
        raise MapParseError(f"{where}: expected an object")
    if key not in doc:
        raise MapParseError(f"{where}: missing field '{key}'")
    return doc[key]


def parse_map(doc: dict, source: str = "<map>") -> WorldModel:
    if not isinstance(doc, dict):
        raise MapParseError(f"{source}: top level must be an object")
    allowed = {"name", "origin", "heightmap", "obstacles", "bounds"}
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise MapParseError(f"{source}: unknown field(s) {unknown}")

    name = _require(doc, "name", source)
    if not isinstance(name, str) or not name:
        raise MapParseError(f"{source}: name must be a non-empty string")

    o = _require(doc, "origin", source)
    try:
        origin = GeodeticCoord(
            _num(_require(o, "lat", "origin"), "origin.lat"),
            _num(_require(o, "lon", "origin"), "origin.lon"),
            _num(o.get("alt", 0.0), "origin.alt"),
        )
        frame = make_origin(origin)
    except (ValueError, PolarOrigin) as exc:
        raise MapParseError(f"origin: {exc}") from exc

    b = _require(doc, "bounds", source)
    bounds = Bounds(*(_num(_require(b, k, "bounds"), f"bounds.{k}")
                      for k in ("north_min_m", "north_max_m", "east_min_m", "east_max_m")))
    if not (bounds.north_min_m < bounds.north_max_m and bounds.east_min_m < bounds.east_max_m):
        raise MapParseError("bounds: min must be below max on both axes")

    h = _require(doc, "heightmap", source)
    cell = _num(_require(h, "cell_size_m", "heightmap"), "heightmap.cell_size_m")
    if cell <= 0:
        raise MapParseError("heightmap.cell_size_m: must be > 0")
    rows, cols = _require(h, "rows", "heightmap"), _require(h, "cols", "heightmap")
    for key, val in (("rows", rows), ("cols", cols)):
        if isinstance(val, bool) or not isinstance(val, int) or val < 1:
            raise MapParseError(f"heightmap.{key}: must be a positive integer")
    samples = _require(h, "samples", "heightmap")
    if not isinstance(samples, list) or len(samples) != rows * cols:
        raise MapParseError(f"heightmap.samples: expected {rows * cols} values (rows*cols)")
    samples = tuple(_num(s, f"heightmap.samples[{i}]") for i, s in enumerate(samples))
    hm = Heightmap(bounds.north_min_m, bounds.east_min_m, cell, rows, cols, samples)
    if hm.north_max_m < bounds.north_max_m or hm.east_max_m < bounds.east_max_m:
        raise MapParseError("heightmap: grid extent does not cover bounds")

    obstacles = []
    for i, ob in enumerate(doc.get("obstacles", [])):
        where = f"obstacles[{i}]"
        center = _vec3(_require(ob, "center_ned", where), f"{where}.center_ned")
        half = _vec3(_require(ob, "half_extents", where), f"{where}.half_extents")
        if any(v <= 0 for v in half):
            raise MapParseError(f"{where}.half_extents: must all be > 0")
        if not (bounds.north_min_m <= center[0] - half[0] and center[0] + half[0] <= bounds.north_max_m
                and bounds.east_min_m <= center[1] - half[1] and center[1] + half[1] <= bounds.east_max_m):
            raise MapParseError(f"{where}: obstacle index {i} lies outside map bounds")
        obstacles.append(ObstacleBox(NedPosition(*center), half))

    return WorldModel(name=name, frame=frame, heightmap=hm, obstacles=tuple(obstacles), bounds=bounds)


def load_map(ref: str, base_dir: Optional[Path] = None) -> WorldModel:
    """Load a built-in map by name or a JSON map file by path."""
    if ref in BUILTIN_MAPS:
        return BUILTIN_MAPS[ref]()
    path = Path(ref)
    if not path.is_absolute() and base_dir is not None:
        path = Path(base_dir) / path
    if not path.suffix or not path.is_file():
        raise UnknownMap(f"unknown map '{ref}' (built-ins: {sorted(BUILTIN_MAPS)})")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MapParseError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    return parse_map(doc, str(path))
