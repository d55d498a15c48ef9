"""Acceptance gate: one test per primary criterion, each reporting PASS/FAIL.

The per-criterion lines are printed in the terminal summary (see conftest).
"""
import json
import math
import statistics
import time
from contextlib import contextmanager

import numpy as np
import pytest
from fastapi.testclient import TestClient

from conftest import FIXTURES, SCENARIOS, record_acceptance
from oracle import Terrain, load_telemetry, rescan
from randomized import make_case
from test_world import scanline_raster, star_polygon
from uavharness.cli import EXIT_ERROR, EXIT_PASS, EXIT_VIOLATIONS, main, run_bench
from uavharness.engine import run_simulation
from uavharness.fuzz import apply_assignments, generate_variants, parse_fuzz_spec
from uavharness.geodesy import GeodeticCoord, NedPosition, geodetic_to_ned, make_origin, ned_to_geodetic
from uavharness.monitors import cross_track_deviation
from uavharness.report import write_telemetry_csv
from uavharness.runner import run_to_dir
from uavharness.scenario import load_scenario_file, parse_scenario_obj, resolve_world, scenario_to_dict
from uavharness.service.app import create_app
from uavharness.world import Polygon2D, point_in_polygon, polygon_problems

pytestmark = pytest.mark.acceptance


@contextmanager
def criterion(name):
    info = {"detail": ""}
    try:
        yield info
    except BaseException:
        record_acceptance(name, False, info["detail"])
        raise
    record_acceptance(name, True, info["detail"])


def test_determinism(tmp_path):
    with criterion("determinism") as info:
        t0 = time.perf_counter()
        codes = [main(["run", str(SCENARIOS / "reference.json"), "--out", str(tmp_path / d)]) for d in "ab"]
        elapsed = time.perf_counter() - t0
        info["detail"] = f"{elapsed:.2f}s for two runs"
        assert codes[0] == codes[1]
        spec, _, _ = load_scenario_file(SCENARIOS / "reference.json")
        assert len(spec.uavs) == 3 and len({p.kind for p in spec.test_properties}) == 5
        for name in ("report.json", "telemetry.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        assert elapsed < 10.0


def _episodes(art):
    return [(v.property_id, tuple(v.uav_ids), v.start_tick, v.end_tick, v.worst_value, v.worst_time_s)
            for v in art.violations]


def test_monitor_oracle_equivalence(tmp_path):
    with criterion("monitor oracle equivalence") as info:
        t0 = time.perf_counter()
        total = 0
        for seed in range(100):
            doc, map_doc, spec, world = make_case(seed, tmp_path)
            assert len(spec.uavs) <= 4 and spec.sim.max_ticks <= 500
            art = run_simulation(spec, world)
            csv_path = tmp_path / f"telemetry_{seed}.csv"
            write_telemetry_csv(csv_path, art.telemetry)
            online = _episodes(art)
            offline = [(e.property_id, e.uav_ids, e.start_tick, e.end_tick, e.worst_value, e.worst_time_s)
                       for e in rescan(doc, map_doc, csv_path)]
            assert [o[:4] for o in online] == [o[:4] for o in offline], f"case {seed}"
            for a, b in zip(online, offline):
                if a[4] is None or b[4] is None:
                    assert a[4] is None and b[4] is None, f"case {seed}"
                else:
                    assert abs(a[4] - b[4]) <= 1e-9, f"case {seed}"
            total += len(online)
        elapsed = time.perf_counter() - t0
        info["detail"] = f"100 cases, {total} episodes, {elapsed:.1f}s"
        assert total > 0
        assert elapsed < 120.0


def test_geodesy_round_trip():
    with criterion("geodesy round trip") as info:
        rng = np.random.default_rng(2024)
        worst_deg = worst_alt = 0.0
        for _ in range(10_000):
            origin = make_origin(GeodeticCoord(float(rng.uniform(-60, 60)), float(rng.uniform(-180, 180)),
                                               float(rng.uniform(-100, 3000))))
            r, bearing = 10_000.0 * math.sqrt(rng.random()), rng.uniform(0, 2 * math.pi)
            ned = NedPosition(r * math.cos(bearing), r * math.sin(bearing), float(rng.uniform(-500, 500)))
            g = ned_to_geodetic(origin, ned)
            back = ned_to_geodetic(origin, geodetic_to_ned(origin, g))
            dlon = (back.longitude_deg - g.longitude_deg + 180.0) % 360.0 - 180.0
            worst_deg = max(worst_deg, abs(back.latitude_deg - g.latitude_deg), abs(dlon))
            worst_alt = max(worst_alt, abs(back.altitude_m - g.altitude_m))
        info["detail"] = f"worst {worst_deg:.2e} deg, {worst_alt:.2e} m"
        assert worst_deg <= 1e-9 and worst_alt <= 1e-3


def zoom_sweep(p, a, b, samples=2001, levels=4):
    """Batched dense sweep over t in [0, 1], re-sampled around the best point each level."""
    lo = np.zeros(len(p))
    hi = np.ones(len(p))
    ab = b - a
    for _ in range(levels):
        t = lo[:, None] + (hi - lo)[:, None] * np.linspace(0.0, 1.0, samples)[None, :]
        pts = a[:, None, :] + t[..., None] * ab[:, None, :]
        d = np.linalg.norm(pts - p[:, None, :], axis=2)
        k = np.argmin(d, axis=1)
        step = (hi - lo) / (samples - 1)
        best = t[np.arange(len(p)), k]
        lo, hi = np.maximum(best - step, 0.0), np.minimum(best + step, 1.0)
    return d[np.arange(len(p)), k]


def test_geometry_oracles():
    with criterion("geometry oracles") as info:
        rng = np.random.default_rng(77)
        worst = 0.0
        for _ in range(10):
            p, a, b = (rng.uniform(-200, 200, (1000, 3)) for _ in range(3))
            swept = zoom_sweep(p, a, b)
            mine = np.array([cross_track_deviation(p[i], (a[i], b[i])) for i in range(1000)])
            worst = max(worst, float(np.max(np.abs(mine - swept))))
        assert worst <= 1e-6

        cells, lo, hi = 400, -10.0, 10.0
        agree = total = 0
        while total < 10_000:
            verts = star_polygon(rng, int(rng.integers(3, 12)))
            if polygon_problems(verts):
                continue
            grid, size = scanline_raster(verts, lo, hi, cells)
            padded = np.pad(grid, 1, mode="edge")
            near = np.zeros_like(grid)
            for dn in (-1, 0, 1):
                for de in (-1, 0, 1):
                    near |= padded[1 + dn:1 + dn + cells, 1 + de:1 + de + cells] != grid
            poly = Polygon2D(verts)
            for n, e in rng.uniform(lo, hi, size=(500, 2)):
                i, j = min(int((n - lo) / size), cells - 1), min(int((e - lo) / size), cells - 1)
                if near[i, j]:
                    continue
                total += 1
                agree += point_in_polygon(poly, n, e) == bool(grid[i, j])
        info["detail"] = f"cross-track worst {worst:.1e} m; PIP {agree}/{total} off-boundary agree"
        assert agree == total


def test_below_terrain_fault(tmp_path):
    with criterion("below-terrain fault") as info:
        spec, world, issues = load_scenario_file(SCENARIOS / "below_terrain.json")
        assert any(i.code == "waypoint_below_terrain" for i in issues)
        report, art = run_to_dir(spec, world, tmp_path)
        collisions = [v for v in report.violations if v.kind == "no_collision"]
        assert len(collisions) == 1 and collisions[0].detail == "terrain"
        uid = collisions[0].uav_ids[0]
        assert report.run.final_phases[uid] == "Crashed"
        terrain = Terrain(json.loads((SCENARIOS / "hill_map.json").read_text(encoding="utf-8")))
        ticks = load_telemetry(tmp_path / "telemetry.csv")
        crossing = next(t for t in sorted(ticks)
                        if -ticks[t][uid]["pos"][2] <= terrain.height(*ticks[t][uid]["pos"][:2]))
        info["detail"] = f"crossed at tick {crossing}, flagged at tick {collisions[0].start_tick}"
        assert abs(collisions[0].start_tick - crossing) <= 1


def test_fuzz_reproducibility_and_efficacy(tmp_path):
    with criterion("fuzz reproducibility & efficacy") as info:
        base = SCENARIOS / "wind_fuzz_base.json"
        camp = SCENARIOS / "wind_fuzz_campaign.json"
        fuzz = parse_fuzz_spec(camp.read_text(encoding="utf-8"))
        assert fuzz.n_variants == 32 and fuzz.parameters[0].range == (0.0, 20.0)

        # pre-verify the all-hi variant by simulating it directly
        spec, _, _ = load_scenario_file(base)
        hi = generate_variants(fuzz)[1]
        doc = apply_assignments(scenario_to_dict(spec), hi.assignments)
        doc["sim"]["seed"] = hi.run_seed
        vspec = parse_scenario_obj(doc)
        direct, _ = run_to_dir(vspec, resolve_world(vspec, base.parent))
        assert not direct.passed

        code1 = main(["fuzz", str(base), "--campaign", str(camp), "--out", str(tmp_path / "j1"), "--jobs", "1"])
        code4 = main(["fuzz", str(base), "--campaign", str(camp), "--out", str(tmp_path / "j4"), "--jobs", "4"])
        c1 = (tmp_path / "j1" / "campaign.json").read_bytes()
        assert c1 == (tmp_path / "j4" / "campaign.json").read_bytes()
        report = json.loads(c1)
        failing = [f["index"] for f in report["failing"]]
        info["detail"] = f"{len(failing)}/32 variants failed"
        assert code1 == code4 == EXIT_VIOLATIONS
        assert 1 in failing


def test_scaling_bench():
    with criterion("scaling bench") as info:
        t0 = time.perf_counter()
        medians = {5: [], 20: []}
        factors = {5: [], 20: []}
        for _ in range(5):
            for n in (5, 20):
                res = run_bench(n, 60.0, 0.02)
                assert res["ticks"] == 3000
                medians[n].append(res["median_tick_s"])
                factors[n].append(res["realtime_factor"])
        elapsed = time.perf_counter() - t0
        m5, m20 = statistics.median(medians[5]), statistics.median(medians[20])
        info["detail"] = (f"median tick 5 UAVs {m5 * 1e3:.3f} ms, 20 UAVs {m20 * 1e3:.3f} ms; "
                          f"slowest realtime factor {min(factors[20]):.1f}x; {elapsed:.1f}s")
        assert min(factors[5]) > 1.0 and min(factors[20]) > 1.0
        assert m20 >= m5
        assert elapsed < 60.0


def test_service_fifo(tmp_path):
    with criterion("service FIFO") as info:
        doc = json.loads((SCENARIOS / "reference.json").read_text(encoding="utf-8"))
        with TestClient(create_app(data_dir=tmp_path, workers=1)) as client:
            # occupy the single worker so every measured task is seen waiting in the queue
            blocker = client.post("/api/v1/simulations", json=doc).json()["task_id"]
            ids = [client.post("/api/v1/simulations", json=doc).json()["task_id"] for _ in range(5)]
            seen = {t: [] for t in ids}
            conflicts = set()
            deadline = time.monotonic() + 120
            while time.monotonic() < deadline:
                for t in ids:
                    st = client.get(f"/api/v1/tasks/{t}").json()["status"]
                    if not seen[t] or seen[t][-1] != st:
                        seen[t].append(st)
                    if st != "done":
                        r = client.get(f"/api/v1/tasks/{t}/report")
                        if r.status_code == 409:
                            conflicts.add(t)
                if all(s[-1] in ("done", "failed") for s in seen.values()):
                    break
                time.sleep(0.01)
            sums = [client.get(f"/api/v1/tasks/{t}").json() for t in [blocker, *ids]]
            first = {t: client.get(f"/api/v1/tasks/{t}/report").content for t in ids}
            again = {t: client.get(f"/api/v1/tasks/{t}/report").content for t in ids}
        info["detail"] = "; ".join("→".join(s) for s in seen.values())
        for s in seen.values():
            assert s == ["queued", "running", "done"]
        assert conflicts == set(ids)
        finishes = [s["finished_at"] for s in sums]
        assert finishes == sorted(finishes)
        assert [s["started_at"] for s in sums] == sorted(s["started_at"] for s in sums)
        assert first == again and all(json.loads(b)["run"] for b in first.values())


def test_parser_suite():
    with criterion("parser suite") as info:
        import test_scenario as ts
        from uavharness.errors import ScenarioError
        from uavharness.scenario import parse_scenario, serialize_scenario

        named = 0
        for name, path in ts.EXPECTED_PATHS.items():
            try:
                parse_scenario((ts.MALFORMED / name).read_text(encoding="utf-8"))
            except ScenarioError as exc:
                named += path in [i.path for i in exc.errors]
        stable = 0
        for path in ts.VALID_FILES:
            first = serialize_scenario(parse_scenario(path.read_text(encoding="utf-8")))
            stable += first == serialize_scenario(parse_scenario(first))
        info["detail"] = (f"{named}/{len(ts.EXPECTED_PATHS)} malformed named correctly; "
                          f"{stable}/{len(ts.VALID_FILES)} valid round-trip")
        assert len(ts.EXPECTED_PATHS) >= 20 and named == len(ts.EXPECTED_PATHS)
        assert stable == len(ts.VALID_FILES)


def test_exit_code_matrix(tmp_path):
    with criterion("exit-code matrix") as info:
        camp = str(FIXTURES / "degenerate_campaign.json")
        got = {}
        for name in ("pass", "fail", "error"):
            sc = str(FIXTURES / f"{name}.json")
            got[("run", name)] = main(["run", sc, "--out", str(tmp_path / f"run_{name}")])
            got[("fuzz", name)] = main(["fuzz", sc, "--campaign", camp, "--out", str(tmp_path / f"fz_{name}")])
            got[("validate", name)] = main(["validate", sc])
        info["detail"] = ", ".join(f"{c}/{n}={v}" for (c, n), v in got.items())
        for cmd in ("run", "fuzz"):
            assert [got[(cmd, n)] for n in ("pass", "fail", "error")] == [EXIT_PASS, EXIT_VIOLATIONS, EXIT_ERROR]
        # validate never simulates, so a well-formed scenario that would violate a property is clean
        assert [got[("validate", n)] for n in ("pass", "fail", "error")] == [EXIT_PASS, EXIT_PASS, EXIT_ERROR]
