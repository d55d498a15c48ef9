import csv
import json
import socket
import subprocess
import sys
import threading
import time

import pytest

from conftest import FIXTURES
from uavharness.cli import EXIT_ERROR, EXIT_PASS, EXIT_VIOLATIONS, bench_scenario, main
from uavharness.scenario import parse_scenario_obj

CAMPAIGN = str(FIXTURES / "degenerate_campaign.json")


def test_run_pass(tmp_path, capsys):
    assert main(["run", str(FIXTURES / "pass.json"), "--out", str(tmp_path)]) == EXIT_PASS
    assert "[PASS]" in capsys.readouterr().out
    assert (tmp_path / "report.json").exists()


def test_run_fail(tmp_path, capsys):
    assert main(["run", str(FIXTURES / "fail.json"), "--out", str(tmp_path)]) == EXIT_VIOLATIONS
    assert "[FAIL]" in capsys.readouterr().out


def test_run_warning_still_passes(tmp_path, capsys):
    assert main(["run", str(FIXTURES / "warning.json"), "--out", str(tmp_path)]) == EXIT_PASS
    assert "warning:" in capsys.readouterr().err


def test_run_error(tmp_path, capsys):
    assert main(["run", str(FIXTURES / "error.json"), "--out", str(tmp_path)]) == EXIT_ERROR
    err = capsys.readouterr().err
    assert "waypoint" in err
    assert not (tmp_path / "report.json").exists()


def test_run_seed_override(tmp_path):
    assert main(["run", str(FIXTURES / "pass.json"), "--out", str(tmp_path), "--seed", "99"]) == EXIT_PASS
    assert json.loads((tmp_path / "report.json").read_text())["run"]["seed"] == 99
    assert main(["run", str(FIXTURES / "pass.json"), "--out", str(tmp_path), "--seed", "-1"]) == EXIT_ERROR


@pytest.mark.parametrize("cmd", [["run", "--out", "x"], ["validate"], ["fuzz", "--campaign", CAMPAIGN, "--out", "x"]])
def test_missing_file_is_error(tmp_path, cmd, capsys):
    argv = [cmd[0], str(tmp_path / "absent.json"), *cmd[1:]]
    assert main(argv) == EXIT_ERROR
    assert "not found" in capsys.readouterr().err


@pytest.mark.parametrize("name, code", [
    ("pass.json", EXIT_PASS), ("fail.json", EXIT_PASS), ("warning.json", EXIT_PASS), ("error.json", EXIT_ERROR),
])
def test_validate_exit_codes(name, code, capsys):
    assert main(["validate", str(FIXTURES / name)]) == code
    out = capsys.readouterr().out
    if name == "warning.json":
        assert "warning:" in out


def test_fuzz_pass(tmp_path):
    assert main(["fuzz", str(FIXTURES / "pass.json"), "--campaign", CAMPAIGN, "--out", str(tmp_path)]) == EXIT_PASS
    assert (tmp_path / "campaign.json").exists()


def test_fuzz_violations(tmp_path):
    assert main(["fuzz", str(FIXTURES / "fail.json"), "--campaign", CAMPAIGN,
                 "--out", str(tmp_path)]) == EXIT_VIOLATIONS


def test_fuzz_bad_campaign(tmp_path):
    bad = tmp_path / "c.json"
    bad.write_text(json.dumps({"parameters": [{"target": "wind.nope", "range": [0, 1]}], "n_variants": 2}))
    assert main(["fuzz", str(FIXTURES / "pass.json"), "--campaign", str(bad), "--out", str(tmp_path)]) == EXIT_ERROR
    bad.write_text("{")
    assert main(["fuzz", str(FIXTURES / "pass.json"), "--campaign", str(bad), "--out", str(tmp_path)]) == EXIT_ERROR
    assert main(["fuzz", str(FIXTURES / "pass.json"), "--campaign", CAMPAIGN, "--out", str(tmp_path),
                 "--jobs", "0"]) == EXIT_ERROR


def test_fuzz_error_only_campaign(tmp_path, monkeypatch):
    import uavharness.fuzz as fuzz

    def broken(doc, *rest):
        doc["environment"]["map"] = "absent_map.json"
        return real(doc, *rest)
    real = fuzz._run_variant
    monkeypatch.setattr(fuzz, "_run_variant", broken)
    assert main(["fuzz", str(FIXTURES / "pass.json"), "--campaign", CAMPAIGN, "--out", str(tmp_path)]) == EXIT_ERROR


def test_usage_errors():
    assert main([]) == EXIT_ERROR
    assert main(["frobnicate"]) == EXIT_ERROR
    assert main(["run", str(FIXTURES / "pass.json")]) == EXIT_ERROR  # --out is required


def test_serve_rejects_bad_port(capsys):
    assert main(["serve", "--port", "70000"]) == EXIT_ERROR
    assert main(["serve", "--port", "0"]) == EXIT_ERROR


def test_serve_rejects_busy_port(tmp_path, capsys):
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        s.listen()
        port = s.getsockname()[1]
        assert main(["serve", "--port", str(port), "--data-dir", str(tmp_path)]) == EXIT_ERROR
    assert "cannot bind" in capsys.readouterr().err


def test_bench_writes_csv(tmp_path, capsys):
    out = tmp_path / "bench.csv"
    assert main(["bench", "--uavs", "3", "--duration", "2", "--out", str(out)]) == EXIT_PASS
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["tick", "wall_time_s"] and len(rows) == 101
    summary = dict(csv.reader((tmp_path / "bench_summary.csv").open()))
    assert summary["uavs"] == "3" and float(summary["realtime_factor"]) > 0
    assert "realtime_factor=" in capsys.readouterr().out
    assert main(["bench", "--uavs", "0"]) == EXIT_ERROR
    assert main(["bench", "--dt", "0.5"]) == EXIT_ERROR


def test_bench_scenario_is_valid_and_spread_out():
    spec = parse_scenario_obj(bench_scenario(45, 60, 0.02))
    homes = [(u.home.north_m, u.home.east_m) for u in spec.uavs]
    assert len(set(homes)) == 45
    assert all(not u.plan.land_after for u in spec.uavs)


def test_submit_against_live_server(tmp_path, capsys):
    import uvicorn
    from uavharness.service.app import create_app

    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    server = uvicorn.Server(uvicorn.Config(create_app(data_dir=tmp_path / "data"), host="127.0.0.1",
                                           port=port, log_level="warning"))
    t = threading.Thread(target=server.run, daemon=True)
    t.start()
    try:
        deadline = time.monotonic() + 10
        while not server.started and time.monotonic() < deadline:
            time.sleep(0.05)
        assert server.started
        url = f"http://127.0.0.1:{port}"
        out = tmp_path / "report.json"
        assert main(["submit", str(FIXTURES / "fail.json"), "--url", url, "--out", str(out),
                     "--poll", "0.05"]) == EXIT_VIOLATIONS
        assert json.loads(out.read_text())["run"]["termination"]
        assert main(["submit", str(FIXTURES / "pass.json"), "--url", url, "--poll", "0.05"]) == EXIT_PASS
        assert main(["submit", str(FIXTURES / "error.json"), "--url", url]) == EXIT_ERROR
    finally:
        server.should_exit = True
        t.join(10)
    assert main(["submit", str(FIXTURES / "pass.json"), "--url", url]) == EXIT_ERROR


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "uavharness", "validate", str(FIXTURES / "pass.json")],
                       capture_output=True, text=True, timeout=60)
    assert r.returncode == 0, r.stderr
    assert "ok" in r.stdout
