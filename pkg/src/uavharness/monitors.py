"""Safety properties and their runtime monitors.

Five property kinds are supported: maximum path deviation, minimum
separation, no collision, safe landing, and no-fly zones. Monitors observe
post-step snapshots and fold per-tick violations into episodes: one
ViolationRecord per maximal run of consecutive violating ticks per subject.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Annotated, Any, Literal, Mapping, Optional, Sequence, Union

from pydantic import Discriminator, Field, Tag, field_validator

from ._model import Model
from .errors import NotLanded
from .geodesy import NedPosition
from .vehicle import Phase, UavState
from .world import (
    AltitudeBand,
    Polygon2D,
    WorldModel,
    distance_to_polygon_boundary,
    point_in_polygon,
    polygon_problems,
)

Scope = Union[Literal["all"], tuple[str, ...]]
Vertices = tuple[tuple[float, float], ...]


def _check_polygon(v: Vertices) -> Vertices:
    problems = polygon_problems(v)
    if problems:
        raise ValueError(problems[0])
    return v


class _PropertyBase(Model):
    id: str = Field(min_length=1)

    def applies_to(self, uav_id: str) -> bool:
        scope = getattr(self, "scope", "all")
        return scope == "all" or uav_id in scope


class MaxPathDeviation(_PropertyBase):
    kind: Literal["max_path_deviation"]
    max_m: float = Field(gt=0)
    scope: Scope = "all"


class MinSeparation(_PropertyBase):
    kind: Literal["min_separation"]
    min_m: float = Field(gt=0)


class NoCollision(_PropertyBase):
    kind: Literal["no_collision"]
    scope: Scope = "all"


class CircleZone(Model):
    center: tuple[float, float]
    radius_m: float = Field(gt=0)


class PolygonZone(Model):
    polygon: Vertices

    @field_validator("polygon")
    @classmethod
    def _simple(cls, v: Vertices) -> Vertices:
        return _check_polygon(v)


def _zone_kind(v: Any) -> str:
    if isinstance(v, dict):
        return "polygon" if "polygon" in v else "circle"
    return "polygon" if isinstance(v, PolygonZone) else "circle"


LandingZone = Annotated[
    Union[Annotated[CircleZone, Tag("circle")], Annotated[PolygonZone, Tag("polygon")]],
    Discriminator(_zone_kind),
]


class SafeLanding(_PropertyBase):
    kind: Literal["safe_landing"]
    zones: tuple[LandingZone, ...] = Field(min_length=1)
    scope: Scope = "all"


class NoFlyZone(_PropertyBase):
    kind: Literal["no_fly_zone"]
    polygon: Vertices
    floor_m: Optional[float] = None
    ceiling_m: Optional[float] = None
    scope: Scope = "all"

    @field_validator("polygon")
    @classmethod
    def _simple(cls, v: Vertices) -> Vertices:
        return _check_polygon(v)

    def band(self) -> AltitudeBand:
        return AltitudeBand(-math.inf if self.floor_m is None else self.floor_m, self.ceiling_m)


SafetyProperty = Annotated[
    Union[MaxPathDeviation, MinSeparation, NoCollision, SafeLanding, NoFlyZone],
    Field(discriminator="kind"),
]


# ---------------------------------------------------------------- geometry

def cross_track_deviation(pos: Sequence[float], segment: tuple[Sequence[float], Sequence[float]]) -> float:
    """Distance from ``pos`` to the closed 3D segment (not the infinite line)."""
    a, b = segment
    dx, dy, dz = b[0] - a[0], b[1] - a[1], b[2] - a[2]
    px, py, pz = pos[0] - a[0], pos[1] - a[1], pos[2] - a[2]
    den = dx * dx + dy * dy + dz * dz
    t = 0.0 if den == 0.0 else (px * dx + py * dy + pz * dz) / den
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    ex, ey, ez = px - t * dx, py - t * dy, pz - t * dz
    return math.sqrt(ex * ex + ey * ey + ez * ez)


def _dist3(a: Sequence[float], b: Sequence[float]) -> float:
    dx, dy, dz = a[0] - b[0], a[1] - b[1], a[2] - b[2]
    return math.sqrt(dx * dx + dy * dy + dz * dz)


def min_pairwise_separation(states: Sequence[UavState]) -> Optional[tuple[float, tuple[str, str]]]:
    """Closest pair among airborne UAVs; ``None`` when fewer than two fly.

    Ties resolve to the lexicographically smallest id pair so the result does
    not depend on list order.
    """
    active = sorted((s for s in states if s.phase.airborne), key=lambda s: s.id)
    best: Optional[tuple[float, tuple[str, str]]] = None
    for i in range(len(active)):
        pi = active[i].position
        for j in range(i + 1, len(active)):
            d = _dist3(pi, active[j].position)
            if best is None or d < best[0]:
                best = (d, (active[i].id, active[j].id))
    return best


def check_no_fly(pos: Sequence[float], polygon: Polygon2D, band: AltitudeBand) -> bool:
    return band.contains(-pos[2]) and point_in_polygon(polygon, pos[0], pos[1])


@dataclass(frozen=True)
class CollisionEvent:
    category: str  # "terrain" | "obstacle" | "uav"
    clearance_m: float
    other_id: Optional[str] = None

    @property
    def detail(self) -> str:
        return f"uav:{self.other_id}" if self.category == "uav" else self.category


def check_collision(state: UavState, world: WorldModel, others: Sequence[UavState],
                    body_radius: float, radii: Optional[Mapping[str, float]] = None,
                    include_terrain: bool = True) -> Optional[CollisionEvent]:
    """First contact in the order terrain -> obstacle -> uav, or ``None``.

    Terrain contact means height above terrain <= 0. Obstacle contact means
    the body sphere overlaps a box. Two UAVs touch when their centres are
    closer than the sum of their radii (2*r for equal bodies).
    """
    p = state.position
    if include_terrain:
        clearance = -p[2] - world.terrain_height(p[0], p[1])
        if clearance <= 0.0:
            return CollisionEvent("terrain", clearance)
    best = None
    for box in world.obstacles:
        d = box.distance_to(p)
        if d < body_radius and (best is None or d - body_radius < best):
            best = d - body_radius
    if best is not None:
        return CollisionEvent("obstacle", best)
    hit = None
    for o in others:
        if o.id == state.id:
            continue
        reach = body_radius + (radii[o.id] if radii else body_radius)
        d = _dist3(p, o.position)
        if d < reach and (hit is None or d - reach < hit.clearance_m):
            hit = CollisionEvent("uav", d - reach, o.id)
    return hit


@dataclass(frozen=True)
class Circle:
    center: tuple[float, float]
    radius_m: float


Zone = Union[Polygon2D, Circle]


def zone_geometry(z: LandingZone) -> Zone:
    if isinstance(z, CircleZone):
        return Circle(z.center, z.radius_m)
    return Polygon2D(z.polygon)


def distance_to_zone(zone: Zone, north_m: float, east_m: float) -> float:
    """Horizontal distance to the zone, 0 when inside or on the boundary."""
    if isinstance(zone, Circle):
        d = math.hypot(north_m - zone.center[0], east_m - zone.center[1]) - zone.radius_m
        return d if d > 0.0 else 0.0
    if point_in_polygon(zone, north_m, east_m):
        return 0.0
    return distance_to_polygon_boundary(zone, north_m, east_m)


def check_landing(final_state: UavState, zones: Sequence[Zone]) -> bool:
    if final_state.phase is not Phase.LANDED:
        raise NotLanded(f"{final_state.id} is {final_state.phase.value}, not Landed")
    p = final_state.position
    return any(distance_to_zone(z, p[0], p[1]) == 0.0 for z in zones)


def no_fly_depth(polygon: Polygon2D, north_m: float, east_m: float) -> float:
    """Horizontal penetration depth into a polygon (distance to its boundary)."""
    return distance_to_polygon_boundary(polygon, north_m, east_m)


# ---------------------------------------------------------------- episodes

@dataclass(frozen=True)
class ViolationRecord:
    property_id: str
    kind: str
    uav_ids: tuple[str, ...]
    start_tick: int
    end_tick: int
    start_time_s: float
    end_time_s: float
    worst_value: Optional[float]
    worst_time_s: float
    worst_position: Optional[tuple[float, float, float]]
    threshold: float
    units: str
    comparison: str
    detail: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "property_id": self.property_id,
            "kind": self.kind,
            "uav_ids": list(self.uav_ids),
            "start_tick": self.start_tick,
            "end_tick": self.end_tick,
            "start_time_s": self.start_time_s,
            "end_time_s": self.end_time_s,
            "worst_value": self.worst_value,
            "worst_time_s": self.worst_time_s,
            "worst_position": list(self.worst_position) if self.worst_position is not None else None,
            "threshold": self.threshold,
            "units": self.units,
            "comparison": self.comparison,
            "detail": self.detail,
        }


# kind -> (comparison text, True if larger values are worse)
KIND_RULES = {
    "max_path_deviation": ("deviation_m > max_m", True),
    "min_separation": ("separation_m < min_m", False),
    "no_collision": ("clearance_m <= 0", False),
    "safe_landing": ("distance_to_zone_m > 0", True),
    "no_fly_zone": ("inside zone (depth_m >= 0)", True),
}


def threshold_of(prop) -> float:
    if isinstance(prop, MaxPathDeviation):
        return prop.max_m
    if isinstance(prop, MinSeparation):
        return prop.min_m
    return 0.0


@dataclass
class _Open:
    start_tick: int
    start_time: float
    end_tick: int
    end_time: float
    worst: Optional[float]
    worst_time: float
    worst_pos: Optional[tuple]
    detail: Optional[str]


@dataclass
class EpisodeState:
    """Open episodes keyed by (property index, subject) plus closed records."""

    open: dict = field(default_factory=dict)
    closed: list = field(default_factory=list)


@dataclass
class Snapshot:
    tick: int
    time_s: float
    states: Sequence[UavState]
    segments: Mapping[str, tuple[NedPosition, NedPosition]]
    collisions: Mapping[str, CollisionEvent] = field(default_factory=dict)
    landed: Sequence[str] = ()


@dataclass
class TickSeries:
    deviation: dict = field(default_factory=dict)       # (prop index, uav) -> value
    separation: Optional[tuple[float, tuple[str, str]]] = None


def _close(prop_idx, prop, subject, ep: _Open, episodes: EpisodeState) -> ViolationRecord:
    comparison, _ = KIND_RULES[prop.kind]
    rec = ViolationRecord(
        property_id=prop.id, kind=prop.kind, uav_ids=subject,
        start_tick=ep.start_tick, end_tick=ep.end_tick,
        start_time_s=ep.start_time, end_time_s=ep.end_time,
        worst_value=ep.worst, worst_time_s=ep.worst_time,
        worst_position=ep.worst_pos, threshold=threshold_of(prop),
        units="m", comparison=comparison, detail=ep.detail,
    )
    episodes.closed.append((prop_idx, rec))
    return rec


def evaluate_tick(properties: Sequence, snapshot: Snapshot, episodes: EpisodeState,
                  zone_cache: Optional[dict] = None) -> TickSeries:
    """Fold one snapshot into the episode state.

    A violating (property, subject) opens or extends an episode; a subject
    that does not violate this tick closes its open episode, if any.
    """
    tick, t = snapshot.tick, snapshot.time_s
    states = snapshot.states
    by_id = {s.id: s for s in states}
    series = TickSeries()
    zone_cache = zone_cache if zone_cache is not None else {}
    violating: dict = {}  # (prop_idx, subject) -> (value, position, detail)

    need_sep = any(isinstance(p, MinSeparation) for p in properties)
    airborne = sorted((s for s in states if s.phase.airborne), key=lambda s: s.id)
    pair_dist: list = []
    if need_sep:
        for i in range(len(airborne)):
            for j in range(i + 1, len(airborne)):
                d = _dist3(airborne[i].position, airborne[j].position)
                pair_dist.append((d, (airborne[i].id, airborne[j].id)))
        if pair_dist:
            series.separation = min(pair_dist)

    for pi, prop in enumerate(properties):
        if isinstance(prop, MaxPathDeviation):
            for s in airborne:
                if not prop.applies_to(s.id):
                    continue
                seg = snapshot.segments.get(s.id)
                if seg is None:
                    continue
                d = cross_track_deviation(s.position, seg)
                series.deviation[(pi, s.id)] = d
                if d > prop.max_m:
                    violating[(pi, (s.id,))] = (d, s.position, None)
        elif isinstance(prop, MinSeparation):
            for d, pair in pair_dist:
                if d < prop.min_m:
                    violating[(pi, pair)] = (d, by_id[pair[0]].position, None)
        elif isinstance(prop, NoCollision):
            for uid, ev in snapshot.collisions.items():
                if prop.applies_to(uid):
                    violating[(pi, (uid,))] = (ev.clearance_m, by_id[uid].position, ev.detail)
        elif isinstance(prop, SafeLanding):
            zones = zone_cache.get(pi)
            if zones is None:
                zones = zone_cache[pi] = [zone_geometry(z) for z in prop.zones]
            for uid in snapshot.landed:
                if not prop.applies_to(uid):
                    continue
                p = by_id[uid].position
                d = min(distance_to_zone(z, p[0], p[1]) for z in zones)
                if d > 0.0:
                    violating[(pi, (uid,))] = (d, p, "landed outside all zones")
        elif isinstance(prop, NoFlyZone):
            geo = zone_cache.get(pi)
            if geo is None:
                geo = zone_cache[pi] = (Polygon2D(prop.polygon), prop.band())
            poly, band = geo
            for s in airborne:
                if prop.applies_to(s.id) and check_no_fly(s.position, poly, band):
                    violating[(pi, (s.id,))] = (no_fly_depth(poly, s.position[0], s.position[1]),
                                                s.position, None)

    # close episodes whose subject stopped violating
    for key in [k for k in episodes.open if k not in violating]:
        pi, subject = key
        _close(pi, properties[pi], subject, episodes.open.pop(key), episodes)

    for key, (value, pos, detail) in violating.items():
        pi, subject = key
        larger_worse = KIND_RULES[properties[pi].kind][1]
        pos = (pos[0], pos[1], pos[2])
        ep = episodes.open.get(key)
        if ep is None:
            episodes.open[key] = _Open(tick, t, tick, t, value, t, pos, detail)
            continue
        ep.end_tick, ep.end_time = tick, t
        if (value > ep.worst) if larger_worse else (value < ep.worst):
            ep.worst, ep.worst_time, ep.worst_pos, ep.detail = value, t, pos, detail
    return series


def finalize_episodes(properties: Sequence, episodes: EpisodeState, final_tick: int,
                      final_time: float, states: Sequence[UavState]) -> list[ViolationRecord]:
    """Close open episodes, add never-landed records, return all records sorted."""
    for key in list(episodes.open):
        pi, subject = key
        _close(pi, properties[pi], subject, episodes.open.pop(key), episodes)
    for pi, prop in enumerate(properties):
        if not isinstance(prop, SafeLanding):
            continue
        for s in states:
            if prop.applies_to(s.id) and s.phase is not Phase.LANDED:
                episodes.closed.append((pi, ViolationRecord(
                    property_id=prop.id, kind=prop.kind, uav_ids=(s.id,),
                    start_tick=final_tick, end_tick=final_tick,
                    start_time_s=final_time, end_time_s=final_time,
                    worst_value=None, worst_time_s=final_time,
                    worst_position=(s.position[0], s.position[1], s.position[2]),
                    threshold=0.0, units="m", comparison=KIND_RULES[prop.kind][0],
                    detail="never landed",
                )))
    ordered = sorted(episodes.closed, key=lambda pr: (pr[1].start_tick, pr[0], pr[1].uav_ids))
    return [rec for _, rec in ordered]
