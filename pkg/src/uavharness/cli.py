"""Command-line entry point.

Exit codes: 0 every property passed, 1 at least one property failed after a
completed run or campaign, 2 usage, validation, or runtime error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import socket
import statistics
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from .errors import HarnessError, ScenarioError
from .scenario import Issue, errors_only, load_scenario_file, parse_scenario_obj, scenario_to_dict

EXIT_PASS = 0
EXIT_VIOLATIONS = 1
EXIT_ERROR = 2


class CliError(Exception):
    """Setup failure; reported on stderr with exit code 2."""


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


def _print_issues(issues: Sequence[Issue], stream=None) -> None:
    for issue in issues:
        print(str(issue), file=stream or sys.stderr)


def _load(path: str):
    """Parse, resolve and validate a scenario file or raise CliError."""
    p = Path(path)
    if not p.is_file():
        raise CliError(f"error: scenario file not found: {path}")
    try:
        spec, world, issues = load_scenario_file(p)
    except ScenarioError as exc:
        _print_issues(exc.errors)
        raise CliError(f"error: {path} failed to parse ({len(exc.errors)} error(s))") from None
    except HarnessError as exc:
        raise CliError(f"error: {exc}") from None
    return spec, world, issues


# ------------------------------------------------------------------- run

def cmd_run(args) -> int:
    from .runner import run_to_dir
    from .report import summary_lines

    spec, world, issues = _load(args.scenario)
    _print_issues(issues)
    if errors_only(issues):
        raise CliError(f"error: {args.scenario} is invalid for map '{spec.environment.map}'")
    if args.seed is not None:
        doc = scenario_to_dict(spec)
        doc["sim"]["seed"] = args.seed
        try:
            spec = parse_scenario_obj(doc)
        except ScenarioError as exc:
            _print_issues(exc.errors)
            raise CliError("error: invalid --seed") from None
    out = Path(args.out)
    report, artifacts = run_to_dir(spec, world, out)
    for line in summary_lines(report):
        print(line)
    print(f"termination={report.run.termination} ticks={report.run.tick_count} "
          f"wall={artifacts.wall_time_s:.2f}s out={out}")
    return EXIT_PASS if report.passed else EXIT_VIOLATIONS


# ------------------------------------------------------------------ fuzz

def cmd_fuzz(args) -> int:
    from pydantic import ValidationError
    from .fuzz import check_fuzz_spec, parse_fuzz_spec, run_campaign

    spec, world, issues = _load(args.scenario)
    _print_issues(issues)
    if errors_only(issues):
        raise CliError(f"error: base scenario {args.scenario} is invalid")
    cpath = Path(args.campaign)
    try:
        fuzz = parse_fuzz_spec(cpath.read_text(encoding="utf-8"))
    except OSError as exc:
        raise CliError(f"error: cannot read campaign spec: {exc}") from None
    except ValidationError as exc:
        for e in exc.errors():
            _err(f"error: {'.'.join(str(p) for p in e['loc']) or '$'}: {e['msg']}")
        raise CliError(f"error: {cpath} is not a valid campaign spec") from None
    if args.jobs < 1:
        raise CliError("error: --jobs must be >= 1")
    check_fuzz_spec(spec, fuzz)
    report = run_campaign(spec, fuzz, base_dir=Path(args.scenario).parent,
                          out_dir=Path(args.out), jobs=args.jobs)
    for v in report.variants:
        args_txt = ", ".join(f"{k}={val:.6g}" for k, val in v.assignments.items())
        extra = f" [{', '.join(v.violated_properties)}]" if v.violated_properties else ""
        if v.error:
            extra = f" ({v.error})"
        print(f"variant {v.index:3d} {v.verdict:8s} {args_txt}{extra}")
    n_bad = sum(v.verdict == "violated" for v in report.variants)
    n_err = sum(v.verdict == "error" for v in report.variants)
    print(f"{report.n_variants} variants: {n_bad} violated, {n_err} error(s); out={args.out}")
    if report.any_violated:
        return EXIT_VIOLATIONS
    return EXIT_ERROR if report.any_error else EXIT_PASS


# -------------------------------------------------------------- validate

def cmd_validate(args) -> int:
    spec, _, issues = _load(args.scenario)
    _print_issues(issues, sys.stdout)
    errors = errors_only(issues)
    if errors:
        _err(f"{args.scenario}: {len(errors)} error(s)")
        return EXIT_ERROR
    n_warn = len(issues)
    print(f"{args.scenario}: ok ({len(spec.uavs)} UAV(s), {len(spec.test_properties)} "
          f"propert{'y' if len(spec.test_properties) == 1 else 'ies'}, {n_warn} warning(s))")
    return EXIT_PASS


# ----------------------------------------------------------------- serve

def _check_bindable(host: str, port: int) -> None:
    try:
        with socket.socket(socket.AF_INET6 if ":" in host else socket.AF_INET) as s:
            s.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            s.bind((host, port))
    except OSError as exc:
        raise CliError(f"error: cannot bind {host}:{port}: {exc}") from None


def cmd_serve(args) -> int:
    import uvicorn
    from .service.app import create_app, settings_from_env

    try:
        env = settings_from_env()
    except ValueError as exc:
        raise CliError(f"error: bad service environment variable: {exc}") from None
    port = env["port"] if args.port is None else args.port
    if not 0 < port < 65536:
        raise CliError(f"error: port {port} out of range 1..65535")
    workers = env["workers"] if args.workers is None else args.workers
    if workers < 1:
        raise CliError("error: --workers must be >= 1")
    data_dir = Path(args.data_dir) if args.data_dir else env["data_dir"]
    _check_bindable(env["bind"], port)
    app = create_app(data_dir=data_dir, workers=workers)
    config = uvicorn.Config(app, host=env["bind"], port=port, log_level="info")
    server = uvicorn.Server(config)
    server.run()
    # uvicorn reports a failed startup by returning without having started
    return EXIT_PASS if server.started else EXIT_ERROR


# ---------------------------------------------------------------- submit

def cmd_submit(args) -> int:
    """Thin HTTP client: submit a scenario to a running service and wait for the report."""
    import httpx

    p = Path(args.scenario)
    try:
        body = p.read_bytes()
    except OSError as exc:
        raise CliError(f"error: {exc}") from None
    base = args.url.rstrip("/")
    try:
        with httpx.Client(timeout=30.0) as client:
            r = client.post(f"{base}/api/v1/simulations", content=body,
                            headers={"Content-Type": "application/json"})
            if r.status_code != 202:
                _err(f"error: server rejected scenario ({r.status_code})")
                for e in r.json().get("errors", []):
                    _err(f"error: {e['path']}: {e['message']}")
                return EXIT_ERROR
            task_id = r.json()["task_id"]
            print(f"task {task_id} queued")
            deadline = time.monotonic() + args.timeout
            while True:
                r = client.get(f"{base}/api/v1/tasks/{task_id}/report")
                if r.status_code != 409:
                    break
                if time.monotonic() > deadline:
                    raise CliError(f"error: timed out waiting for task {task_id}")
                time.sleep(args.poll)
    except httpx.HTTPError as exc:
        raise CliError(f"error: cannot reach {base}: {exc}") from None
    if r.status_code != 200:
        _err(f"error: task {task_id} failed: {r.json().get('error')}")
        return EXIT_ERROR
    from .report import AcceptanceReport, summary_lines

    report = AcceptanceReport.model_validate_json(r.content)
    if args.out:
        Path(args.out).write_bytes(r.content)
    for line in summary_lines(report):
        print(line)
    return EXIT_PASS if report.passed else EXIT_VIOLATIONS


# ----------------------------------------------------------------- bench

BENCH_ALTITUDE_M = 80.0
BENCH_SPACING_M = 40.0
BENCH_LEG_M = 800.0


def bench_scenario(n_uavs: int, duration_s: float, dt_s: float, seed: int = 0) -> dict:
    """Synthesize the benchmark scenario over the built-in blocks map.

    UAVs start on the ground in one east-west row, 40 m apart and centered on
    the origin, at north -400. Each climbs to 80 m (clear of the 60 m blocks)
    and shuttles between north -400 and +400 along its own column. Enough legs
    are planned that nobody finishes before ``duration_s``, so every tick
    carries the full fleet. Rows wrap every 20 UAVs, 20 m further north.
    """
    if n_uavs < 1:
        raise CliError("error: --uavs must be >= 1")
    legs = math.ceil(duration_s * 10.0 / BENCH_LEG_M) + 2
    uavs = []
    for i in range(n_uavs):
        row, col = divmod(i, 20)
        east = (col - (min(n_uavs, 20) - 1) / 2.0) * BENCH_SPACING_M
        north0 = -400.0 + 20.0 * row
        wps = [{"position": {"north_m": north0 + (BENCH_LEG_M if k % 2 else 0.0), "east_m": east,
                             "down_m": -BENCH_ALTITUDE_M}, "capture_radius_m": 2.0}
               for k in range(legs + 1)]
        uavs.append({
            "id": f"uav{i}",
            "home": {"north_m": north0, "east_m": east, "down_m": 0.0},
            "sensors": {"gps": {"noise_std_m": 0.5}, "barometer": {"noise_std_m": 0.3},
                        "magnetometer": {"noise_std_deg": 1.0}},
            "plan": {"waypoints": wps, "land_after": False},
        })
    return {
        "format_version": 1,
        "environment": {"map": "blocks", "wind": {"direction_deg": 90.0, "speed_mps": 2.0}},
        "uavs": uavs,
        "test_properties": [
            {"kind": "max_path_deviation", "id": "dev", "max_m": 10.0},
            {"kind": "min_separation", "id": "sep", "min_m": 5.0},
            {"kind": "no_collision", "id": "col"},
        ],
        "sim": {"dt_s": dt_s, "max_duration_s": duration_s, "seed": seed},
    }


def run_bench(n_uavs: int, duration_s: float, dt_s: float) -> dict:
    from .engine import run_simulation
    from .scenario import resolve_world

    spec = parse_scenario_obj(bench_scenario(n_uavs, duration_s, dt_s))
    world = resolve_world(spec)
    tick_times: list[float] = []
    art = run_simulation(spec, world, tick_times=tick_times)
    ordered = sorted(tick_times)
    total = sum(tick_times)
    sim_time = art.ticks_executed * dt_s
    return {
        "uavs": n_uavs,
        "ticks": art.ticks_executed,
        "dt_s": dt_s,
        "simulated_s": sim_time,
        "termination": art.termination,
        "wall_s": art.wall_time_s,
        "mean_tick_s": total / len(tick_times),
        "median_tick_s": statistics.median(tick_times),
        "p95_tick_s": ordered[min(len(ordered) - 1, math.ceil(0.95 * len(ordered)) - 1)],
        "ticks_per_s": len(tick_times) / total if total > 0 else math.inf,
        "realtime_factor": sim_time / art.wall_time_s if art.wall_time_s > 0 else math.inf,
        "tick_times": tick_times,
    }


def cmd_bench(args) -> int:
    if args.duration <= 0:
        raise CliError("error: --duration must be > 0")
    if not 0 < args.dt <= 0.1:
        raise CliError("error: --dt must be in (0, 0.1]")
    res = run_bench(args.uavs, args.duration, args.dt)
    summary = {k: v for k, v in res.items() if k != "tick_times"}
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["tick", "wall_time_s"])
            w.writerows((i + 1, t) for i, t in enumerate(res["tick_times"]))
        with open(out.with_name(out.stem + "_summary.csv"), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["metric", "value"])
            w.writerows(summary.items())
    print(f"uavs={res['uavs']} ticks={res['ticks']} mean_tick={res['mean_tick_s'] * 1e3:.3f}ms "
          f"p95_tick={res['p95_tick_s'] * 1e3:.3f}ms ticks/s={res['ticks_per_s']:.1f} "
          f"realtime_factor={res['realtime_factor']:.2f}")
    return EXIT_PASS


# ------------------------------------------------------------------ main

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="uavharness", description="Multi-UAV simulation test harness.")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario and write its acceptance report")
    p.add_argument("scenario")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override sim.seed")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("fuzz", help="run an environment fuzzing campaign")
    p.add_argument("scenario")
    p.add_argument("--campaign", required=True, help="campaign spec JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="parallel variant runs (default 1)")
    p.set_defaults(func=cmd_fuzz)

    p = sub.add_parser("validate", help="parse and check a scenario without running it")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("serve", help="start the REST service")
    p.add_argument("--port", type=int, help="port (default $UAVH_PORT or 8000)")
    p.add_argument("--data-dir", help="task data directory (default $UAVH_DATA_DIR or ./uavh-data)")
    p.add_argument("--workers", type=int, help="worker threads (default $UAVH_WORKERS or 1)")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("submit", help="submit a scenario to a running service and wait")
    p.add_argument("scenario")
    p.add_argument("--url", default="http://127.0.0.1:8000")
    p.add_argument("--out", help="write the fetched report.json here")
    p.add_argument("--timeout", type=float, default=600.0)
    p.add_argument("--poll", type=float, default=0.5)
    p.set_defaults(func=cmd_submit)

    p = sub.add_parser("bench", help="time a synthetic multi-UAV scenario")
    p.add_argument("--uavs", type=int, default=5)
    p.add_argument("--duration", type=float, default=60.0, help="simulated seconds")
    p.add_argument("--dt", type=float, default=0.02)
    p.add_argument("--out", help="per-tick timing CSV (summary goes to <stem>_summary.csv)")
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else EXIT_PASS
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        _err(str(exc))
    except ScenarioError as exc:
        _print_issues(exc.errors)
    except HarnessError as exc:
        _err(f"error: {exc}")
    except OSError as exc:
        _err(f"error: {exc}")
    except KeyboardInterrupt:
        _err("interrupted")
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
