"""Waypoint plans and the proportional go-to-waypoint controller."""
from __future__ import annotations

import math
from enum import Enum
from typing import Annotated, Any, NamedTuple, Optional, Sequence, Union

from pydantic import Discriminator, Field, Tag

from ._model import Model
from .geodesy import NedPosition
from .vehicle import Phase, Vec3


class NedPoint(Model):
    north_m: float
    east_m: float
    down_m: float

    def to_ned(self) -> NedPosition:
        return NedPosition(self.north_m, self.east_m, self.down_m)


class GeoPoint(Model):
    lat_deg: float = Field(ge=-90, le=90)
    lon_deg: float
    alt_m: float


def _position_kind(v: Any) -> str:
    if isinstance(v, dict):
        return "geodetic" if {"lat_deg", "lon_deg", "alt_m"} & set(v) else "ned"
    return "geodetic" if isinstance(v, GeoPoint) else "ned"


# a point is geodetic if it carries any of lat_deg/lon_deg/alt_m, else NED
PositionSpec = Annotated[
    Union[Annotated[NedPoint, Tag("ned")], Annotated[GeoPoint, Tag("geodetic")]],
    Discriminator(_position_kind),
]


class Navigation(str, Enum):
    TRUTH = "truth"
    GPS = "gps"


class Waypoint(Model):
    position: PositionSpec
    capture_radius_m: float = Field(1.0, gt=0)


class MissionPlan(Model):
    waypoints: tuple[Waypoint, ...] = Field(min_length=1)
    land_after: bool = True
    navigation: Navigation = Navigation.TRUTH


class ControllerParams(Model):
    gain_per_s: float = Field(1.0, gt=0)


class ResolvedPlan(NamedTuple):
    """A plan with every waypoint expressed in the local NED frame."""

    waypoints: tuple[NedPosition, ...]
    capture_radii: tuple[float, ...]
    land_after: bool
    navigation: Navigation


class Command(NamedTuple):
    velocity: Vec3
    active_idx: int
    phase_request: Optional[Phase]


def clamp_magnitude(v: Sequence[float], limit: float) -> Vec3:
    n = math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    if n <= limit:
        return (v[0], v[1], v[2])
    k = limit / n
    return (v[0] * k, v[1] * k, v[2] * k)


def compute_command(est_position: Sequence[float], plan: ResolvedPlan, active_idx: int,
                    gain_per_s: float, max_speed_mps: float,
                    descent_speed_mps: float = 2.0) -> Command:
    """Proportional velocity command toward the active waypoint.

    Captured waypoints advance the cursor within the same call. Once past the
    last waypoint a plan with ``land_after`` requests Landing and commands a
    pure descent; otherwise the controller holds on the last waypoint.
    """
    wps = plan.waypoints
    n = len(wps)
    idx = active_idx
    while idx < n:
        wp = wps[idx]
        en, ee, ed = wp[0] - est_position[0], wp[1] - est_position[1], wp[2] - est_position[2]
        if math.sqrt(en * en + ee * ee + ed * ed) <= plan.capture_radii[idx]:
            idx += 1
            continue
        cmd = clamp_magnitude((gain_per_s * en, gain_per_s * ee, gain_per_s * ed), max_speed_mps)
        return Command(cmd, idx, None)
    if plan.land_after:
        return Command((0.0, 0.0, descent_speed_mps), n, Phase.LANDING)
    last = wps[-1]
    err = (last[0] - est_position[0], last[1] - est_position[1], last[2] - est_position[2])
    return Command(clamp_magnitude(tuple(gain_per_s * e for e in err), max_speed_mps), n, None)


def active_segment(plan: ResolvedPlan, home: NedPosition, active_idx: int) -> tuple[NedPosition, NedPosition]:
    if active_idx >= len(plan.waypoints):
        last = plan.waypoints[-1]
        return last, last
    start = home if active_idx == 0 else plan.waypoints[active_idx - 1]
    return start, plan.waypoints[active_idx]
