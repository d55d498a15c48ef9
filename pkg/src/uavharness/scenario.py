"""Scenario documents: strict parsing, canonical serialization, semantic checks.

A scenario is a JSON object with ``format_version`` (must be 1) and the
sections ``environment``, ``uavs``, ``test_properties`` and ``sim``. Every
default is materialized on parse so serialized scenarios are self-contained.
The field reference lives in docs/scenario_format.md.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal, Optional, Sequence

from pydantic import Field, ValidationError, field_validator, model_validator

from ._model import Model
from .errors import HarnessError, OutOfFrame, ScenarioError
from .geodesy import FrameOrigin, GeodeticCoord, NedPosition, geodetic_to_ned
from .mission import ControllerParams, GeoPoint, MissionPlan, Navigation, NedPoint, PositionSpec, ResolvedPlan
from .monitors import SafetyProperty
from .vehicle import SensorSuiteConfig, VehicleParams
from .world import WindField, WorldModel, load_map

FORMAT_VERSION = 1
MAX_TICKS = 10**9
UNSIMULATED_SENSORS = ("camera", "lidar")

_HHMM = re.compile(r"^([01]\d|2[0-3]):[0-5]\d$")


class EnvironmentSpec(Model):
    map: str = Field(min_length=1)
    origin: Optional[GeoPoint] = None
    wind: WindField = WindField()
    time_of_day: str = "12:00"

    @field_validator("time_of_day")
    @classmethod
    def _hhmm(cls, v: str) -> str:
        if not _HHMM.match(v):
            raise ValueError("time_of_day must be HH:MM (24-hour)")
        return v


class UavSpec(Model):
    id: str = Field(min_length=1)
    home: PositionSpec
    sensors: SensorSuiteConfig = SensorSuiteConfig()
    plan: MissionPlan
    params: VehicleParams = VehicleParams()
    controller: ControllerParams = ControllerParams()


class SimulationConfig(Model):
    dt_s: float = Field(0.02, gt=0, le=0.1)
    max_duration_s: float = Field(600.0, gt=0)
    seed: int = Field(0, ge=0, lt=2**64)

    @model_validator(mode="after")
    def _tick_count(self):
        if self.max_duration_s / self.dt_s > MAX_TICKS:
            raise ValueError(f"max_duration_s / dt_s exceeds {MAX_TICKS} ticks")
        return self

    @property
    def max_ticks(self) -> int:
        return max(1, math.ceil(self.max_duration_s / self.dt_s - 1e-9))


class ScenarioSpec(Model):
    format_version: Literal[1]
    environment: EnvironmentSpec
    uavs: tuple[UavSpec, ...] = Field(min_length=1)
    test_properties: tuple[SafetyProperty, ...] = ()
    sim: SimulationConfig = SimulationConfig()


@dataclass(frozen=True)
class Issue:
    severity: str  # "error" | "warning"
    path: str
    message: str
    code: str = "schema"

    def __str__(self) -> str:
        return f"{self.severity}: {self.path}: {self.message}"

    def to_dict(self) -> dict:
        return {"severity": self.severity, "path": self.path, "message": self.message, "code": self.code}


def format_path(parts: Sequence) -> str:
    out = ""
    for p in parts:
        if isinstance(p, int):
            out += f"[{p}]"
        else:
            out += f".{p}" if out else str(p)
    return out or "$"


def _document_path(doc: Any, loc: Sequence) -> list:
    """Map a pydantic error location onto keys that exist in ``doc``.

    Union tags and validator names are dropped; the final element is kept even
    when absent (a missing or unknown key).
    """
    parts: list = []
    node = doc
    for i, el in enumerate(loc):
        last = i == len(loc) - 1
        if isinstance(node, dict) and isinstance(el, str) and el in node:
            parts.append(el)
            node = node[el]
        elif isinstance(node, list) and isinstance(el, int) and 0 <= el < len(node):
            parts.append(el)
            node = node[el]
        elif last and isinstance(node, dict):
            parts.append(el)
    return parts


def _issues_from_validation(exc: ValidationError, doc: Any) -> list[Issue]:
    issues = []
    seen = set()
    errors = exc.errors()
    locs = [tuple(e["loc"]) for e in errors]
    for err in errors:
        loc = tuple(err["loc"])
        if err["type"] in ("union_tag_invalid", "union_tag_not_found"):
            loc += (str(err.get("ctx", {}).get("discriminator", "kind")).strip("'"),)
        # a tuple with invalid items also reports itself as too short
        if err["type"] == "too_short" and any(len(o) > len(loc) and o[:len(loc)] == loc for o in locs):
            continue
        path = format_path(_document_path(doc, loc))
        msg = err["msg"]
        if err["type"] == "extra_forbidden":
            msg = f"unknown field '{err['loc'][-1]}'"
        elif err["type"] == "missing":
            msg = f"missing required field '{err['loc'][-1]}'"
        key = (path, msg)
        if key not in seen:
            seen.add(key)
            issues.append(Issue("error", path, msg, "schema"))
    return issues


def parse_scenario(text: str) -> ScenarioSpec:
    """Parse a scenario document, raising ScenarioError with every problem found."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([Issue("error", "$", f"line {exc.lineno} column {exc.colno}: {exc.msg}",
                                   "syntax")]) from None
    return parse_scenario_obj(doc)


def parse_scenario_obj(doc: Any) -> ScenarioSpec:
    if not isinstance(doc, dict):
        raise ScenarioError([Issue("error", "$", "scenario must be a JSON object")])
    try:
        return ScenarioSpec.model_validate_json(json.dumps(doc, allow_nan=True))
    except ValidationError as exc:
        raise ScenarioError(_issues_from_validation(exc, doc)) from None


def scenario_to_dict(spec: ScenarioSpec) -> dict:
    return spec.model_dump(mode="json")


def serialize_scenario(spec: ScenarioSpec) -> str:
    return json.dumps(scenario_to_dict(spec), indent=2) + "\n"


# ------------------------------------------------------------ resolution

def resolve_world(spec: ScenarioSpec, base_dir: Optional[Path] = None) -> WorldModel:
    world = load_map(spec.environment.map, base_dir)
    o = spec.environment.origin
    if o is not None:
        world = world.with_origin(GeodeticCoord(o.lat_deg, o.lon_deg, o.alt_m))
    return world


def resolve_position(pos, frame: FrameOrigin) -> NedPosition:
    if isinstance(pos, NedPoint):
        return pos.to_ned()
    return geodetic_to_ned(frame, GeodeticCoord(pos.lat_deg, pos.lon_deg, pos.alt_m))


def resolve_plan(plan: MissionPlan, frame: FrameOrigin) -> ResolvedPlan:
    return ResolvedPlan(
        waypoints=tuple(resolve_position(w.position, frame) for w in plan.waypoints),
        capture_radii=tuple(w.capture_radius_m for w in plan.waypoints),
        land_after=plan.land_after,
        navigation=plan.navigation,
    )


def validate_semantics(spec: ScenarioSpec, world: WorldModel) -> list[Issue]:
    """Cross-field and world-dependent checks; returns errors and warnings."""
    issues: list[Issue] = []

    def err(path, msg, code="semantic"):
        issues.append(Issue("error", path, msg, code))

    def warn(path, msg, code="semantic"):
        issues.append(Issue("warning", path, msg, code))

    ids = [u.id for u in spec.uavs]
    seen: set = set()
    for i, uid in enumerate(ids):
        if uid in seen:
            err(f"uavs[{i}].id", f"duplicate UAV id '{uid}'", "duplicate_id")
        seen.add(uid)

    pseen: set = set()
    for i, prop in enumerate(spec.test_properties):
        if prop.id in pseen:
            err(f"test_properties[{i}].id", f"duplicate property id '{prop.id}'", "duplicate_id")
        pseen.add(prop.id)
        scope = getattr(prop, "scope", "all")
        if scope != "all":
            for uid in scope:
                if uid not in seen:
                    err(f"test_properties[{i}].scope", f"scope references unknown UAV id '{uid}'",
                        "unknown_scope")

    frame = world.frame
    for i, u in enumerate(spec.uavs):
        base = f"uavs[{i}]"
        try:
            home = resolve_position(u.home, frame)
        except OutOfFrame as exc:
            err(f"{base}.home", str(exc), "out_of_frame")
            home = None
        if home is not None:
            if not world.bounds.contains(home.north_m, home.east_m):
                err(f"{base}.home", f"home of '{u.id}' lies outside map bounds", "home_out_of_bounds")
            else:
                for k, box in enumerate(world.obstacles):
                    if box.distance_to(home) < u.params.body_radius_m:
                        err(f"{base}.home", f"home of '{u.id}' is inside obstacle {k}", "home_in_obstacle")
                        break
                ground = world.terrain_height(home.north_m, home.east_m)
                if home.height_m < ground:
                    warn(f"{base}.home", f"home of '{u.id}' is {ground - home.height_m:.2f} m below "
                         "terrain; the UAV will crash on its first tick", "home_below_terrain")
        if u.plan.navigation is Navigation.GPS and not u.sensors.gps.enabled:
            err(f"{base}.plan.navigation", f"'{u.id}' navigates by GPS but GPS is disabled", "gps_disabled")
        declared = [s for s in u.sensors.unsupported if s.lower() in UNSIMULATED_SENSORS]
        other = [s for s in u.sensors.unsupported if s.lower() not in UNSIMULATED_SENSORS]
        if declared:
            warn(f"{base}.sensors.unsupported",
                 f"sensor(s) {declared} on '{u.id}' are accepted but not simulated", "unsimulated_sensor")
        if other:
            warn(f"{base}.sensors.unsupported", f"unknown sensor kind(s) {other} ignored", "unknown_sensor")
        for j, wp in enumerate(u.plan.waypoints):
            wpath = f"{base}.plan.waypoints[{j}]"
            try:
                p = resolve_position(wp.position, frame)
            except OutOfFrame as exc:
                err(f"{wpath}.position", str(exc), "out_of_frame")
                continue
            if not world.bounds.contains(p.north_m, p.east_m):
                warn(f"{wpath}.position", "waypoint lies outside map bounds", "waypoint_out_of_bounds")
                continue
            ground = world.terrain_height(p.north_m, p.east_m)
            if p.height_m < ground:
                warn(f"{wpath}.position",
                     f"waypoint is {ground - p.height_m:.2f} m below terrain; the UAV will crash",
                     "waypoint_below_terrain")
    return issues


def errors_only(issues: Sequence[Issue]) -> list[Issue]:
    return [i for i in issues if i.severity == "error"]


def load_scenario_file(path: Path) -> tuple[ScenarioSpec, WorldModel, list[Issue]]:
    """Read, parse, resolve the map, and validate. Raises on parse/map failures."""
    path = Path(path)
    spec = parse_scenario(path.read_text(encoding="utf-8"))
    world = resolve_world(spec, path.parent)
    return spec, world, validate_semantics(spec, world)


__all__ = [
    "EnvironmentSpec", "UavSpec", "SimulationConfig", "ScenarioSpec", "Issue",
    "parse_scenario", "parse_scenario_obj", "serialize_scenario", "scenario_to_dict",
    "validate_semantics", "resolve_world", "resolve_plan", "resolve_position",
    "load_scenario_file", "errors_only", "HarnessError",
]
