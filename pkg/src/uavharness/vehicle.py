"""UAV state, point-mass dynamics, and noisy sensor sampling.

The vehicle is a velocity-commanded point mass: wind adds straight onto the
ground velocity and there is no attitude model. Camera and lidar may be
declared in a sensor suite but are not simulated.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import Field

from ._model import Model
from .errors import SensorDisabled
from .geodesy import FrameOrigin, GeodeticCoord, NedPosition, ned_to_geodetic

Vec3 = tuple[float, float, float]

HEADING_MIN_CMD_MPS = 0.1


class Phase(str, Enum):
    IDLE = "Idle"
    ENROUTE = "Enroute"
    LANDING = "Landing"
    LANDED = "Landed"
    CRASHED = "Crashed"

    @property
    def terminal(self) -> bool:
        return self in (Phase.LANDED, Phase.CRASHED)

    @property
    def airborne(self) -> bool:
        return self in (Phase.ENROUTE, Phase.LANDING)


_ALLOWED = {
    Phase.IDLE: {Phase.ENROUTE, Phase.CRASHED},
    Phase.ENROUTE: {Phase.LANDING, Phase.CRASHED},
    Phase.LANDING: {Phase.LANDED, Phase.CRASHED},
    Phase.LANDED: set(),
    Phase.CRASHED: set(),
}


def can_transition(src: Phase, dst: Phase) -> bool:
    return dst in _ALLOWED[src]


@dataclass(frozen=True, slots=True)
class UavState:
    id: str
    position: NedPosition
    velocity: Vec3 = (0.0, 0.0, 0.0)
    heading_deg: float = 0.0
    phase: Phase = Phase.IDLE
    time_s: float = 0.0

    @property
    def speed_mps(self) -> float:
        vn, ve, vd = self.velocity
        return math.sqrt(vn * vn + ve * ve + vd * vd)

    def with_phase(self, phase: Phase) -> "UavState":
        if not can_transition(self.phase, phase):
            raise ValueError(f"illegal phase transition {self.phase.value} -> {phase.value}")
        return dataclasses.replace(self, phase=phase)


class GpsConfig(Model):
    enabled: bool = True
    noise_std_m: float = Field(0.0, ge=0)
    update_hz: float = Field(10.0, gt=0)


class BarometerConfig(Model):
    enabled: bool = True
    noise_std_m: float = Field(0.0, ge=0)


class MagnetometerConfig(Model):
    enabled: bool = True
    noise_std_deg: float = Field(0.0, ge=0)


class SensorSuiteConfig(Model):
    gps: GpsConfig = GpsConfig()
    barometer: BarometerConfig = BarometerConfig()
    magnetometer: MagnetometerConfig = MagnetometerConfig()
    # accepted and echoed, never simulated (e.g. "camera", "lidar")
    unsupported: tuple[str, ...] = ()


class VehicleParams(Model):
    max_speed_mps: float = Field(10.0, gt=0)
    descent_speed_mps: float = Field(2.0, gt=0)
    body_radius_m: float = Field(0.3, gt=0)


@dataclass(frozen=True, slots=True)
class GpsFix:
    time_s: float
    position_estimate: GeodeticCoord
    ned: NedPosition


def course_deg(north: float, east: float) -> float:
    return math.degrees(math.atan2(east, north)) % 360.0


def step_dynamics(state: UavState, cmd: Vec3, wind: Vec3, dt: float,
                  params: Optional[VehicleParams] = None) -> UavState:
    """Advance one explicit Euler step: ground velocity = command + wind."""
    vn = cmd[0] + wind[0]
    ve = cmd[1] + wind[1]
    vd = cmd[2] + wind[2]
    p = state.position
    heading = state.heading_deg
    if math.hypot(cmd[0], cmd[1]) > HEADING_MIN_CMD_MPS:
        heading = course_deg(cmd[0], cmd[1])
    return UavState(
        state.id,
        NedPosition(p[0] + vn * dt, p[1] + ve * dt, p[2] + vd * dt),
        (vn, ve, vd),
        heading,
        state.phase,
        state.time_s + dt,
    )


def sample_gps(state: UavState, cfg: SensorSuiteConfig, rng: np.random.Generator,
               frame: Optional[FrameOrigin] = None) -> GpsFix:
    if not cfg.gps.enabled:
        raise SensorDisabled(f"GPS disabled on {state.id}")
    std = cfg.gps.noise_std_m
    z = rng.standard_normal(3)
    p = state.position
    ned = NedPosition(p[0] + std * float(z[0]), p[1] + std * float(z[1]), p[2] + std * float(z[2]))
    geo = ned_to_geodetic(frame, ned) if frame is not None else None
    return GpsFix(state.time_s, geo, ned)


def sample_barometer(state: UavState, cfg: SensorSuiteConfig, rng: np.random.Generator,
                     origin_alt_m: float = 0.0) -> float:
    """Absolute altitude in meters (origin altitude minus down, plus noise)."""
    if not cfg.barometer.enabled:
        raise SensorDisabled(f"barometer disabled on {state.id}")
    return origin_alt_m - state.position[2] + cfg.barometer.noise_std_m * float(rng.standard_normal())


def sample_magnetometer(state: UavState, cfg: SensorSuiteConfig, rng: np.random.Generator) -> float:
    if not cfg.magnetometer.enabled:
        raise SensorDisabled(f"magnetometer disabled on {state.id}")
    noise = cfg.magnetometer.noise_std_deg * float(rng.standard_normal())
    return wrap_heading(state.heading_deg + noise)


def wrap_heading(deg: float) -> float:
    h = deg % 360.0
    return 0.0 if h >= 360.0 else h
