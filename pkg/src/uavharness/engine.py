"""Fixed-timestep simulation loop.

Each tick: sample wind, then for every UAV still flying sample the sensors
that are due, compute a command from its plan, and step the dynamics. After
all UAVs have moved, collisions and touchdowns are resolved, the monitors
observe the snapshot, and one telemetry record per UAV is appended.

A run is single-threaded and fully determined by (scenario, seed).
"""
from __future__ import annotations

import hashlib
import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geodesy import NedPosition, ned_to_geodetic_tuple
from .mission import Navigation, ResolvedPlan, active_segment, compute_command
from .monitors import (
    EpisodeState,
    MaxPathDeviation,
    MinSeparation,
    Snapshot,
    ViolationRecord,
    check_collision,
    evaluate_tick,
    finalize_episodes,
)
from .scenario import ScenarioSpec, SimulationConfig, UavSpec, resolve_plan, resolve_position
from .vehicle import Phase, UavState, sample_barometer, sample_gps, sample_magnetometer, step_dynamics
from .world import WorldModel, wind_at

log = logging.getLogger(__name__)

__all__ = [
    "SimulationConfig", "TelemetryRecord", "RunArtifacts", "run_simulation",
    "derive_rng_stream", "derive_seed", "stream_key",
]

COMPLETED = "Completed"
TIMED_OUT = "TimedOut"
ALL_CRASHED = "AllCrashed"


def stream_key(seed: int, *parts) -> int:
    """128-bit key hashed from the master seed and a tuple of labels."""
    text = "|".join([str(int(seed))] + [str(p) for p in parts])
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=16).digest(), "little")


def derive_seed(seed: int, *parts) -> int:
    """Deterministic 64-bit child seed."""
    return stream_key(seed, *parts) & ((1 << 64) - 1)


def derive_rng_stream(seed: int, uav_index: int, sensor_kind: str, purpose: str = "noise") -> np.random.Generator:
    """Independent generator for one (uav, sensor, purpose) triple.

    Streams are keyed by UAV index, so adding UAVs never changes the noise of
    the ones already in a scenario.
    """
    return np.random.Generator(np.random.PCG64(stream_key(seed, uav_index, sensor_kind, purpose)))


@dataclass(slots=True)
class TelemetryRecord:
    tick: int
    time_s: float
    uav_id: str
    north_m: float
    east_m: float
    down_m: float
    lat_deg: float
    lon_deg: float
    alt_m: float
    speed_mps: float
    heading_deg: float
    phase: str
    active_waypoint: int
    gps_estimate: Optional[tuple[float, float, float]] = None
    baro_alt_m: Optional[float] = None
    mag_heading_deg: Optional[float] = None


@dataclass
class RunArtifacts:
    scenario: ScenarioSpec
    seed: int
    dt_s: float
    telemetry: list
    violations: list
    events: list
    termination: str
    ticks_executed: int
    wall_time_s: float
    final_states: dict
    deviation_series: dict = field(default_factory=dict)   # (prop idx, uav id) -> [(t, value)]
    separation_series: list = field(default_factory=list)  # [(t, value, (a, b))]


@dataclass(slots=True)
class _Uav:
    index: int
    spec: UavSpec
    state: UavState
    home: NedPosition
    plan: ResolvedPlan
    active_idx: int = 0
    holding: bool = False
    gps_rng: Optional[np.random.Generator] = None
    baro_rng: Optional[np.random.Generator] = None
    mag_rng: Optional[np.random.Generator] = None
    gps_fix: Optional[NedPosition] = None
    gps_k: int = 0
    baro: Optional[float] = None
    mag: Optional[float] = None


def _landing_segment(world: WorldModel, plan: ResolvedPlan) -> tuple[NedPosition, NedPosition]:
    last = plan.waypoints[-1]
    ground = NedPosition(last[0], last[1], -world.terrain_height(last[0], last[1]))
    return last, ground


def run_simulation(spec: ScenarioSpec, world: WorldModel, *, tick_times: Optional[list] = None) -> RunArtifacts:
    """Run one scenario to completion, timeout, or total loss."""
    wall0 = time.perf_counter()
    sim = spec.sim
    dt = sim.dt_s
    seed = sim.seed
    frame = world.frame
    origin_alt = frame.origin.altitude_m
    wind = spec.environment.wind
    props = spec.test_properties

    uavs: list[_Uav] = []
    for i, u in enumerate(spec.uavs):
        home = resolve_position(u.home, frame)
        s = u.sensors
        if s.unsupported:
            log.warning("UAV %s declares unsimulated sensors %s", u.id, list(s.unsupported))
        uavs.append(_Uav(
            index=i, spec=u, state=UavState(u.id, home), home=home,
            plan=resolve_plan(u.plan, frame),
            gps_rng=derive_rng_stream(seed, i, "gps") if s.gps.enabled else None,
            baro_rng=derive_rng_stream(seed, i, "barometer") if s.barometer.enabled else None,
            mag_rng=derive_rng_stream(seed, i, "magnetometer") if s.magnetometer.enabled else None,
        ))
    radii = {u.spec.id: u.spec.params.body_radius_m for u in uavs}

    telemetry: list[TelemetryRecord] = []
    events: list[dict] = []
    episodes = EpisodeState()
    zone_cache: dict = {}
    dev_series: dict = {}
    sep_series: list = []
    want_sep = any(isinstance(p, MinSeparation) for p in props)
    want_dev = any(isinstance(p, MaxPathDeviation) for p in props)

    def event(tick, t, uid, kind, detail=None):
        events.append({"tick": tick, "time_s": t, "uav_id": uid, "event": kind, "detail": detail})

    termination = TIMED_OUT
    tick = 0
    max_ticks = sim.max_ticks
    for tick in range(1, max_ticks + 1):
        t0 = time.perf_counter() if tick_times is not None else 0.0
        t_pre = (tick - 1) * dt
        t = tick * dt
        w = wind_at(wind, t_pre)

        for u in uavs:
            st = u.state
            if st.phase.terminal:
                continue
            if st.phase is Phase.IDLE:
                st = st.with_phase(Phase.ENROUTE)
                event(tick, t_pre, st.id, "takeoff")
            cfg = u.spec.sensors
            if u.gps_rng is not None:
                hz = cfg.gps.update_hz
                if t_pre >= u.gps_k / hz - 1e-9:
                    u.gps_fix = sample_gps(st, cfg, u.gps_rng).ned
                    while t_pre >= u.gps_k / hz - 1e-9:
                        u.gps_k += 1
            if u.baro_rng is not None:
                u.baro = sample_barometer(st, cfg, u.baro_rng, origin_alt)
            if u.mag_rng is not None:
                u.mag = sample_magnetometer(st, cfg, u.mag_rng)

            params = u.spec.params
            if st.phase is Phase.LANDING:
                cmd = (0.0, 0.0, params.descent_speed_mps)
            else:
                est = u.gps_fix if u.plan.navigation is Navigation.GPS else st.position
                c = compute_command(est, u.plan, u.active_idx, u.spec.controller.gain_per_s,
                                    params.max_speed_mps, params.descent_speed_mps)
                for k in range(u.active_idx, c.active_idx):
                    event(tick, t_pre, st.id, "waypoint_captured", k)
                if c.active_idx >= len(u.plan.waypoints) and not u.plan.land_after and not u.holding:
                    u.holding = True
                    event(tick, t_pre, st.id, "mission_complete")
                u.active_idx = c.active_idx
                cmd = c.velocity
                if c.phase_request is Phase.LANDING:
                    st = st.with_phase(Phase.LANDING)
                    event(tick, t_pre, st.id, "landing")
            u.state = step_dynamics(st, cmd, w, dt, params)

        # contacts are judged on everyone's post-step positions before any transition
        airborne = [u.state for u in uavs if u.state.phase.airborne]
        collisions = {}
        touchdowns = []
        for u in uavs:
            st = u.state
            if not st.phase.airborne:
                continue
            landing = st.phase is Phase.LANDING
            ev = check_collision(st, world, airborne, u.spec.params.body_radius_m, radii,
                                 include_terrain=not landing)
            if ev is not None:
                collisions[st.id] = ev
            elif landing:
                ground = world.terrain_height(st.position[0], st.position[1])
                if -st.position[2] <= ground:
                    touchdowns.append(u)
        for u in uavs:
            st = u.state
            if st.id in collisions:
                u.state = UavState(st.id, st.position, (0.0, 0.0, 0.0), st.heading_deg, Phase.CRASHED, st.time_s)
                event(tick, t, st.id, "crashed", collisions[st.id].detail)
        for u in touchdowns:
            st = u.state
            ground = world.terrain_height(st.position[0], st.position[1])
            u.state = UavState(st.id, NedPosition(st.position[0], st.position[1], 0.0 - ground),
                               (0.0, 0.0, 0.0), st.heading_deg, Phase.LANDED, st.time_s)
            event(tick, t, st.id, "landed")

        states = [u.state for u in uavs]
        segments = {}
        for u in uavs:
            if not u.state.phase.airborne:
                continue
            if u.state.phase is Phase.LANDING:
                segments[u.state.id] = _landing_segment(world, u.plan)
            else:
                segments[u.state.id] = active_segment(u.plan, u.home, u.active_idx)
        snap = Snapshot(tick, t, states, segments, collisions, [u.state.id for u in touchdowns])
        series = evaluate_tick(props, snap, episodes, zone_cache)
        if want_dev:
            for key, value in series.deviation.items():
                dev_series.setdefault(key, []).append((t, value))
        if want_sep and series.separation is not None:
            sep_series.append((t, series.separation[0], series.separation[1]))

        for u in uavs:
            st = u.state
            p = st.position
            lat, lon, alt = ned_to_geodetic_tuple(frame, p[0], p[1], p[2])
            telemetry.append(TelemetryRecord(
                tick, t, st.id, p[0], p[1], p[2], lat, lon, alt, st.speed_mps, st.heading_deg,
                st.phase.value, u.active_idx,
                (u.gps_fix[0], u.gps_fix[1], u.gps_fix[2]) if u.gps_fix is not None else None,
                u.baro, u.mag,
            ))

        if tick_times is not None:
            tick_times.append(time.perf_counter() - t0)

        if all(u.state.phase is Phase.CRASHED for u in uavs):
            termination = ALL_CRASHED
            break
        if all(u.state.phase.terminal or u.holding for u in uavs):
            termination = COMPLETED
            break

    final_states = {u.state.id: u.state for u in uavs}
    violations: list[ViolationRecord] = finalize_episodes(props, episodes, tick, tick * dt, list(final_states.values()))
    return RunArtifacts(
        scenario=spec, seed=seed, dt_s=dt, telemetry=telemetry, violations=violations,
        events=events, termination=termination, ticks_executed=tick,
        wall_time_s=time.perf_counter() - wall0, final_states=final_states,
        deviation_series=dev_series, separation_series=sep_series,
    )
