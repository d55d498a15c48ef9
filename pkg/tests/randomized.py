"""Random small scenarios on random file maps, for oracle comparisons."""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from uavharness.scenario import errors_only, parse_scenario_obj, resolve_world, validate_semantics

HALF = 150.0
CELL = 30.0


def random_map(rng) -> dict:
    cells = int(2 * HALF / CELL) + 1
    coarse = rng.uniform(0.0, 15.0, (cells, cells))
    obstacles = []
    for _ in range(int(rng.integers(0, 4))):
        half = rng.uniform(3.0, 15.0, 3)
        center = [float(rng.uniform(-HALF + half[0], HALF - half[0])),
                  float(rng.uniform(-HALF + half[1], HALF - half[1])), float(-half[2] - rng.uniform(0, 10))]
        obstacles.append({"center_ned": center, "half_extents": [float(x) for x in half]})
    return {
        "name": "random",
        "origin": {"lat": float(rng.uniform(-50, 50)), "lon": float(rng.uniform(-170, 170)), "alt": 100.0},
        "heightmap": {"cell_size_m": CELL, "rows": cells, "cols": cells,
                      "samples": [float(x) for x in coarse.ravel()]},
        "obstacles": obstacles,
        "bounds": {"north_min_m": -HALF, "north_max_m": HALF, "east_min_m": -HALF, "east_max_m": HALF},
    }


def _convex(rng, k, center, radius):
    angles = np.sort(rng.uniform(0, 2 * math.pi, k))
    return [[float(center[0] + radius * math.cos(a)), float(center[1] + radius * math.sin(a))] for a in angles]


def random_scenario(rng, map_name: str, n_uavs: int) -> dict:
    uavs = []
    for i in range(n_uavs):
        home = rng.uniform(-60, 60, 2)
        wps = []
        for _ in range(int(rng.integers(1, 5))):
            n, e = rng.uniform(-100, 100, 2)
            wps.append({"position": {"north_m": float(n), "east_m": float(e),
                                     "down_m": float(-rng.uniform(-5.0, 40.0))},
                        "capture_radius_m": float(rng.uniform(1.0, 6.0))})
        uavs.append({
            "id": f"u{i}",
            "home": {"north_m": float(home[0]), "east_m": float(home[1]), "down_m": -20.0},
            "sensors": {"gps": {"noise_std_m": float(rng.choice([0.0, 0.5, 2.0]))}},
            "plan": {"waypoints": wps, "land_after": bool(rng.random() < 0.7),
                     "navigation": "gps" if rng.random() < 0.3 else "truth"},
            "params": {"max_speed_mps": float(rng.uniform(8.0, 20.0)),
                       "descent_speed_mps": float(rng.uniform(2.0, 6.0)),
                       "body_radius_m": float(rng.uniform(0.3, 3.0))},
            "controller": {"gain_per_s": float(rng.uniform(0.5, 2.0))},
        })
    floor = float(rng.uniform(-5, 15))
    props = [
        {"kind": "max_path_deviation", "id": "dev", "max_m": float(rng.uniform(0.5, 8.0))},
        {"kind": "min_separation", "id": "sep", "min_m": float(rng.uniform(5.0, 60.0))},
        {"kind": "no_collision", "id": "col"},
        {"kind": "safe_landing", "id": "land", "zones": [
            {"center": [float(x) for x in rng.uniform(-100, 100, 2)], "radius_m": float(rng.uniform(5, 60))},
            {"polygon": _convex(rng, int(rng.integers(3, 7)), rng.uniform(-100, 100, 2), rng.uniform(10, 70))},
        ]},
        {"kind": "no_fly_zone", "id": "nfz",
         "polygon": _convex(rng, int(rng.integers(3, 8)), rng.uniform(-50, 50, 2), rng.uniform(20, 80)),
         "floor_m": floor, "ceiling_m": floor + float(rng.uniform(5, 40))},
    ]
    if rng.random() < 0.5:
        props[0]["scope"] = [f"u{int(rng.integers(0, n_uavs))}"]
    return {
        "format_version": 1,
        "environment": {"map": map_name, "wind": {
            "direction_deg": float(rng.uniform(0, 360)), "speed_mps": float(rng.uniform(0, 6)),
            "gust_amplitude_mps": float(rng.uniform(0, 3)), "gust_period_s": float(rng.uniform(2, 10))}},
        "uavs": uavs,
        "test_properties": props,
        "sim": {"dt_s": 0.05, "max_duration_s": float(rng.uniform(5.0, 25.0)),
                "seed": int(rng.integers(0, 2**63))},
    }


def make_case(seed: int, workdir: Path):
    """Return (scenario_doc, map_doc, spec, world) for a valid random case."""
    rng = np.random.default_rng(seed)
    for _ in range(100):
        map_doc = random_map(rng)
        map_path = workdir / f"map_{seed}.json"
        map_path.write_text(json.dumps(map_doc), encoding="utf-8")
        doc = random_scenario(rng, str(map_path), int(rng.integers(1, 5)))
        spec = parse_scenario_obj(doc)
        world = resolve_world(spec)
        if not errors_only(validate_semantics(spec, world)):
            return doc, map_doc, spec, world
    raise RuntimeError("could not draw a valid random scenario")
