"""Glue: scenario in, report files out."""
from __future__ import annotations

from pathlib import Path
from typing import Optional

from .engine import RunArtifacts, run_simulation
from .report import AcceptanceReport, build_report, write_outputs
from .scenario import ScenarioSpec
from .world import WorldModel


def run_to_dir(spec: ScenarioSpec, world: WorldModel,
               out_dir: Optional[Path] = None) -> tuple[AcceptanceReport, RunArtifacts]:
    artifacts = run_simulation(spec, world)
    report = build_report(artifacts, spec)
    if out_dir is not None:
        write_outputs(report, artifacts, out_dir)
    return report, artifacts
