"""Environment fuzzing campaigns.

Variants are generated boundary-first: variant 0 puts every parameter at
the low end of its range, variant 1 at the high end, and the rest draw each
parameter uniformly from its range. Each variant gets its own generator and
run seed derived from (campaign_seed, index), so results do not depend on the
order or parallelism in which variants execute.

Targets are dotted paths into the environment or a UAV's sensor suite::

    wind.speed_mps
    environment.wind.direction_deg
    uav[*].sensors.gps.noise_std_m      every UAV
    uav[0].sensors.barometer.noise_std_m
    uav[scout].sensors.magnetometer.noise_std_deg
"""
from __future__ import annotations

import copy
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ._model import Model
from .engine import derive_seed, stream_key
from .errors import HarnessError, InvalidRange, InvalidTarget, ScenarioError
from .scenario import ScenarioSpec, errors_only, parse_scenario_obj, resolve_world, scenario_to_dict, validate_semantics

_UAV_TARGET = re.compile(r"^uavs?\[([^\]]+)\]\.(sensors\..+)$")


class FuzzParameter(Model):
    target: str = Field(min_length=1)
    range: tuple[float, float]


class FuzzSpec(Model):
    parameters: tuple[FuzzParameter, ...] = Field(min_length=1)
    n_variants: int = Field(ge=1)
    campaign_seed: int = Field(0, ge=0, lt=2**64)


@dataclass(frozen=True)
class EnvVariant:
    index: int
    assignments: dict
    run_seed: int


def parse_fuzz_spec(text: str) -> FuzzSpec:
    return FuzzSpec.model_validate_json(text)


def generate_variants(spec: FuzzSpec) -> list[EnvVariant]:
    for p in spec.parameters:
        lo, hi = p.range
        if lo > hi:
            raise InvalidRange(f"{p.target}: range [{lo}, {hi}] has lo > hi")
    out = []
    for i in range(spec.n_variants):
        if i == 0:
            values = {p.target: p.range[0] for p in spec.parameters}
        elif i == 1:
            values = {p.target: p.range[1] for p in spec.parameters}
        else:
            rng = np.random.Generator(np.random.PCG64(stream_key(spec.campaign_seed, "variant", i)))
            values = {}
            for p in spec.parameters:
                lo, hi = p.range
                v = float(rng.uniform(lo, hi)) if hi > lo else lo
                values[p.target] = min(max(v, lo), hi)
        out.append(EnvVariant(i, values, derive_seed(spec.campaign_seed, "run", i)))
    return out


def resolve_target(doc: dict, target: str) -> list[tuple]:
    """Concrete key paths in a materialized scenario dict for one target."""
    m = _UAV_TARGET.match(target)
    if m:
        sel, rest = m.groups()
        uavs = doc["uavs"]
        if sel == "*":
            idxs = list(range(len(uavs)))
        elif sel.isdigit():
            idxs = [int(sel)]
            if idxs[0] >= len(uavs):
                raise InvalidTarget(f"{target}: no UAV at index {sel}")
        else:
            idxs = [i for i, u in enumerate(uavs) if u["id"] == sel]
            if not idxs:
                raise InvalidTarget(f"{target}: no UAV with id '{sel}'")
        paths = [("uavs", i, *rest.split(".")) for i in idxs]
    else:
        parts = target.split(".")
        if parts[0] != "environment":
            parts = ["environment", *parts]
        paths = [tuple(parts)]
    for path in paths:
        node: Any = doc
        for key in path:
            if isinstance(node, dict) and key in node:
                node = node[key]
            elif isinstance(node, list) and isinstance(key, int):
                node = node[key]
            else:
                raise InvalidTarget(f"{target}: '{key}' does not exist in the scenario")
        if isinstance(node, bool) or not isinstance(node, (int, float)):
            raise InvalidTarget(f"{target}: not a numeric field")
    return paths


def apply_assignments(doc: dict, assignments: dict) -> dict:
    out = copy.deepcopy(doc)
    for target, value in assignments.items():
        for path in resolve_target(out, target):
            node = out
            for key in path[:-1]:
                node = node[key]
            node[path[-1]] = float(value)
    return out


def check_fuzz_spec(base: ScenarioSpec, spec: FuzzSpec) -> None:
    """Raise InvalidTarget/InvalidRange unless every target and range is usable."""
    doc = scenario_to_dict(base)
    for p in spec.parameters:
        resolve_target(doc, p.target)
        lo, hi = p.range
        if lo > hi:
            raise InvalidRange(f"{p.target}: range [{lo}, {hi}] has lo > hi")
        for bound in (lo, hi):
            try:
                parse_scenario_obj(apply_assignments(doc, {p.target: bound}))
            except ScenarioError as exc:
                raise InvalidRange(f"{p.target}: value {bound} is invalid ({exc.errors[0].message})") from None


class _Out(BaseModel):
    model_config = ConfigDict(extra="forbid")


class VariantResult(_Out):
    index: int
    assignments: dict[str, float]
    run_seed: int
    verdict: Literal["pass", "violated", "error"]
    violated_properties: list[str]
    termination: Optional[str] = None
    error: Optional[str] = None
    report_dir: Optional[str] = None


class FailingVariant(_Out):
    index: int
    assignments: dict[str, float]
    violated_properties: list[str]


class CampaignReport(_Out):
    format_version: Literal[1] = 1
    campaign_seed: int
    n_variants: int
    base_scenario: dict[str, Any]
    fuzz: dict[str, Any]
    variants: list[VariantResult]
    failing: list[FailingVariant]

    @property
    def any_violated(self) -> bool:
        return any(v.verdict == "violated" for v in self.variants)

    @property
    def any_error(self) -> bool:
        return any(v.verdict == "error" for v in self.variants)

    def to_json(self) -> str:
        return self.model_dump_json(indent=2) + "\n"


def _run_variant(doc: dict, base_dir: Optional[str], out_dir: Optional[str],
                 index: int, assignments: dict, run_seed: int) -> dict:
    from .runner import run_to_dir

    result = {"index": index, "assignments": assignments, "run_seed": run_seed,
              "violated_properties": []}
    try:
        spec = parse_scenario_obj(doc)
        world = resolve_world(spec, Path(base_dir) if base_dir else None)
        errors = errors_only(validate_semantics(spec, world))
        if errors:
            raise ScenarioError(errors)
        vdir = Path(out_dir) / f"variant_{index:03d}" if out_dir else None
        report, _ = run_to_dir(spec, world, vdir)
    except HarnessError as exc:
        return {**result, "verdict": "error", "error": str(exc)}
    failed = [r.property_id for r in report.property_results if r.verdict == "fail"]
    return {**result, "verdict": "violated" if failed else "pass", "violated_properties": failed,
            "termination": report.run.termination,
            "report_dir": f"variant_{index:03d}" if out_dir else None}


def run_campaign(base: ScenarioSpec, spec: FuzzSpec, *, base_dir: Optional[Path] = None,
                 out_dir: Optional[Path] = None, jobs: int = 1) -> CampaignReport:
    check_fuzz_spec(base, spec)
    variants = generate_variants(spec)
    doc = scenario_to_dict(base)
    tasks = []
    for v in variants:
        vdoc = apply_assignments(doc, v.assignments)
        vdoc["sim"]["seed"] = v.run_seed
        tasks.append((vdoc, str(base_dir) if base_dir else None, str(out_dir) if out_dir else None,
                      v.index, v.assignments, v.run_seed))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_variant, *zip(*tasks)))
    else:
        results = [_run_variant(*t) for t in tasks]
    results.sort(key=lambda r: r["index"])
    variant_results = [VariantResult(**r) for r in results]
    report = CampaignReport(
        campaign_seed=spec.campaign_seed,
        n_variants=spec.n_variants,
        base_scenario=doc,
        fuzz=spec.model_dump(mode="json"),
        variants=variant_results,
        failing=[FailingVariant(index=r.index, assignments=r.assignments,
                                violated_properties=r.violated_properties)
                 for r in variant_results if r.verdict == "violated"],
    )
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "campaign.json").write_text(report.to_json(), encoding="utf-8")
    return report
