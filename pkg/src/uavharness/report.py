"""Acceptance reports: verdicts, violation details, and plot-ready CSV series.

Output directory layout written by :func:`write_outputs`::

    report.json      AcceptanceReport (schema: docs/report.schema.json)
    telemetry.csv    one row per UAV per tick
    deviation_<uav>.csv, separation.csv   per-property series
    events.json      phase transitions and waypoint captures
    timing.json      wall-clock timing (kept out of report.json so it stays reproducible)
"""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict

from .engine import RunArtifacts
from .monitors import KIND_RULES, MaxPathDeviation, MinSeparation, threshold_of
from .scenario import ScenarioSpec, scenario_to_dict

REPORT_FORMAT_VERSION = 1

TELEMETRY_COLUMNS = [
    "tick", "time_s", "uav_id", "north_m", "east_m", "down_m", "lat_deg", "lon_deg", "alt_m",
    "speed_mps", "heading_deg", "phase", "active_waypoint",
]
DEVIATION_COLUMNS = ["time_s", "deviation_m", "threshold_m"]
SEPARATION_COLUMNS = ["time_s", "min_separation_m", "threshold_m", "pair"]


class _Out(BaseModel):
    model_config = ConfigDict(extra="forbid")


class RunMetadata(_Out):
    seed: int
    termination: Literal["Completed", "TimedOut", "AllCrashed"]
    tick_count: int
    dt_s: float
    simulated_time_s: float
    final_phases: dict[str, str]


class PropertyResult(_Out):
    property_id: str
    kind: str
    verdict: Literal["pass", "fail"]
    violation_count: int
    worst_value: Optional[float]
    threshold: float
    units: str
    description: str


class Violation(_Out):
    property_id: str
    kind: str
    uav_ids: list[str]
    start_tick: int
    end_tick: int
    start_time_s: float
    end_time_s: float
    worst_value: Optional[float]
    worst_time_s: float
    worst_position: Optional[list[float]]
    threshold: float
    units: str
    comparison: str
    detail: Optional[str]


class SeriesEntry(_Out):
    file: str
    kind: Literal["telemetry", "deviation", "separation"]
    columns: list[str]
    rows: int
    property_id: Optional[str] = None
    uav_id: Optional[str] = None


class AcceptanceReport(_Out):
    format_version: Literal[1] = REPORT_FORMAT_VERSION
    scenario: dict[str, Any]
    run: RunMetadata
    property_results: list[PropertyResult]
    violations: list[Violation]
    series: list[SeriesEntry]

    @property
    def passed(self) -> bool:
        return all(r.verdict == "pass" for r in self.property_results)

    def to_json(self) -> str:
        return self.model_dump_json(indent=2) + "\n"


def report_schema() -> dict:
    return AcceptanceReport.model_json_schema()


def _fmt(v: float) -> str:
    return f"{v:.3g}" if abs(v) < 1000 else f"{v:.0f}"


def _describe(prop, verdict: str, count: int, worst: Optional[float], violations: list) -> str:
    th = threshold_of(prop)
    kind = prop.kind
    if kind == "max_path_deviation":
        if verdict == "pass":
            tail = f" (worst {_fmt(worst)} m)" if worst is not None else ""
            return f"PASS: every UAV stayed within {_fmt(th)} m of its planned path{tail}."
        who = sorted({u for v in violations for u in v.uav_ids})
        return (f"FAIL: {count} episode(s) where {', '.join(who)} deviated more than {_fmt(th)} m "
                f"from the planned path (worst {_fmt(worst)} m).")
    if kind == "min_separation":
        if verdict == "pass":
            tail = f" (closest approach {_fmt(worst)} m)" if worst is not None else ""
            return f"PASS: airborne UAVs kept at least {_fmt(th)} m apart{tail}."
        pairs = sorted({"/".join(v.uav_ids) for v in violations})
        return (f"FAIL: {count} episode(s) of separation below {_fmt(th)} m between "
                f"{', '.join(pairs)} (closest {_fmt(worst)} m).")
    if kind == "no_collision":
        if verdict == "pass":
            return "PASS: no collisions with terrain, obstacles, or other UAVs."
        parts = [f"{v.uav_ids[0]} hit {v.detail} at t={_fmt(v.start_time_s)} s" for v in violations]
        return f"FAIL: {count} collision(s): " + "; ".join(parts) + "."
    if kind == "safe_landing":
        if verdict == "pass":
            return "PASS: every UAV touched down inside a safe landing zone."
        parts = []
        for v in violations:
            if v.worst_value is None:
                parts.append(f"{v.uav_ids[0]} never landed")
            else:
                parts.append(f"{v.uav_ids[0]} landed {_fmt(v.worst_value)} m outside the nearest zone")
        return "FAIL: " + "; ".join(parts) + "."
    if kind == "no_fly_zone":
        if verdict == "pass":
            return "PASS: no UAV entered the no-fly zone."
        who = sorted({u for v in violations for u in v.uav_ids})
        return (f"FAIL: {count} incursion(s) by {', '.join(who)} "
                f"(deepest {_fmt(worst)} m inside the boundary).")
    return f"{verdict.upper()}: {count} violation(s)."


def _series_plan(artifacts: RunArtifacts) -> list[tuple[SeriesEntry, list]]:
    """File entries and their rows, shared by build_report and write_outputs."""
    props = artifacts.scenario.test_properties
    dev_props = [(i, p) for i, p in enumerate(props) if isinstance(p, MaxPathDeviation)]
    sep_props = [(i, p) for i, p in enumerate(props) if isinstance(p, MinSeparation)]
    plan: list[tuple[SeriesEntry, list]] = []
    uav_ids = [u.id for u in artifacts.scenario.uavs]
    for pi, p in dev_props:
        for uid in uav_ids:
            if not p.applies_to(uid):
                continue
            name = f"deviation_{uid}.csv" if len(dev_props) == 1 else f"deviation_{p.id}_{uid}.csv"
            rows = [[t, v, p.max_m] for t, v in artifacts.deviation_series.get((pi, uid), [])]
            plan.append((SeriesEntry(file=name, kind="deviation", columns=DEVIATION_COLUMNS,
                                     rows=len(rows), property_id=p.id, uav_id=uid), rows))
    for pi, p in sep_props:
        name = "separation.csv" if len(sep_props) == 1 else f"separation_{p.id}.csv"
        rows = [[t, v, p.min_m, f"{a}|{b}"] for t, v, (a, b) in artifacts.separation_series]
        plan.append((SeriesEntry(file=name, kind="separation", columns=SEPARATION_COLUMNS,
                                 rows=len(rows), property_id=p.id), rows))
    return plan


def build_report(artifacts: RunArtifacts, spec: Optional[ScenarioSpec] = None) -> AcceptanceReport:
    spec = spec or artifacts.scenario
    results = []
    for pi, prop in enumerate(spec.test_properties):
        mine = [v for v in artifacts.violations if v.property_id == prop.id]
        larger_worse = KIND_RULES[prop.kind][1]
        verdict = "fail" if mine else "pass"
        values = [v.worst_value for v in mine if v.worst_value is not None]
        if not mine:
            # report the closest approach to the threshold even on a pass
            if isinstance(prop, MaxPathDeviation):
                values = [v for (i, _), s in artifacts.deviation_series.items() if i == pi for _, v in s]
            elif isinstance(prop, MinSeparation):
                values = [v for _, v, _ in artifacts.separation_series]
        worst = (max(values) if larger_worse else min(values)) if values else None
        results.append(PropertyResult(
            property_id=prop.id, kind=prop.kind, verdict=verdict, violation_count=len(mine),
            worst_value=worst, threshold=threshold_of(prop), units="m",
            description=_describe(prop, verdict, len(mine), worst, mine),
        ))

    series = [SeriesEntry(file="telemetry.csv", kind="telemetry", columns=TELEMETRY_COLUMNS,
                          rows=len(artifacts.telemetry))]
    series += [entry for entry, _ in _series_plan(artifacts)]
    return AcceptanceReport(
        scenario=scenario_to_dict(spec),
        run=RunMetadata(
            seed=artifacts.seed, termination=artifacts.termination,
            tick_count=artifacts.ticks_executed, dt_s=artifacts.dt_s,
            simulated_time_s=artifacts.ticks_executed * artifacts.dt_s,
            final_phases={k: s.phase.value for k, s in artifacts.final_states.items()},
        ),
        property_results=results,
        violations=[Violation(**v.to_dict()) for v in artifacts.violations],
        series=series,
    )


def write_telemetry_csv(path: Path, telemetry: list) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TELEMETRY_COLUMNS)
        for r in telemetry:
            w.writerow([r.tick, r.time_s, r.uav_id, r.north_m, r.east_m, r.down_m, r.lat_deg,
                        r.lon_deg, r.alt_m, r.speed_mps, r.heading_deg, r.phase, r.active_waypoint])


def write_outputs(report: AcceptanceReport, artifacts: RunArtifacts, out_dir) -> list[str]:
    """Write every output file and return the manifest of file names."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = ["report.json", "telemetry.csv"]
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    write_telemetry_csv(out / "telemetry.csv", artifacts.telemetry)
    for entry, rows in _series_plan(artifacts):
        with open(out / entry.file, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(entry.columns)
            w.writerows(rows)
        manifest.append(entry.file)
    (out / "events.json").write_text(json.dumps(artifacts.events, indent=2) + "\n", encoding="utf-8")
    (out / "timing.json").write_text(json.dumps({
        "wall_time_s": artifacts.wall_time_s,
        "ticks": artifacts.ticks_executed,
        "realtime_factor": (artifacts.ticks_executed * artifacts.dt_s / artifacts.wall_time_s
                            if artifacts.wall_time_s > 0 else None),
    }, indent=2) + "\n", encoding="utf-8")
    manifest += ["events.json", "timing.json"]
    return manifest


def load_report(path) -> AcceptanceReport:
    return AcceptanceReport.model_validate_json(Path(path).read_text(encoding="utf-8"))


def summary_lines(report: AcceptanceReport) -> list[str]:
    lines = [f"[{r.verdict.upper():4}] {r.property_id} ({r.kind}): {r.description}"
             for r in report.property_results]
    if not lines:
        lines.append("no test properties configured")
    return lines
