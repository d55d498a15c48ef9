import json
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = ROOT / "scenarios"
FIXTURES = SCENARIOS / "fixtures"

# criterion name -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE_RESULTS: dict = {}


def record_acceptance(name: str, passed: bool, detail: str = "") -> None:
    ACCEPTANCE_RESULTS[name] = (bool(passed), detail)


@pytest.fixture
def scenario_doc():
    def load(name: str) -> dict:
        path = SCENARIOS / name
        if not path.exists():
            path = FIXTURES / name
        return json.loads(path.read_text(encoding="utf-8"))
    return load


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for name, (ok, detail) in ACCEPTANCE_RESULTS.items():
        tr.write_line(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
