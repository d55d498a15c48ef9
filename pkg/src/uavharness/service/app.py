"""FastAPI application.

Environment variables (read by :func:`settings_from_env`):

    UAVH_BIND       bind address (default 127.0.0.1)
    UAVH_PORT       port (default 8000)
    UAVH_DATA_DIR   task result directory (default ./uavh-data)
    UAVH_WORKERS    worker threads (default 1; >1 keeps start order only)
"""
from __future__ import annotations

import json
import os
from contextlib import asynccontextmanager
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse, Response
from pydantic import ValidationError

from ..errors import HarnessError, InvalidRange, InvalidTarget, ScenarioError
from ..fuzz import FuzzSpec, check_fuzz_spec
from ..scenario import Issue, errors_only, parse_scenario_obj, resolve_world, validate_semantics
from .schemas import ErrorResponse, Health, TaskSubmitted, TaskSummary
from .tasks import TaskQueue, TaskStatus


def settings_from_env() -> dict:
    return {
        "bind": os.environ.get("UAVH_BIND", "127.0.0.1"),
        "port": int(os.environ.get("UAVH_PORT", "8000")),
        "data_dir": Path(os.environ.get("UAVH_DATA_DIR", "uavh-data")),
        "workers": int(os.environ.get("UAVH_WORKERS", "1")),
    }


def _error(status: int, detail: str, issues=(), warnings=()) -> JSONResponse:
    body = ErrorResponse(detail=detail, errors=[i.to_dict() for i in issues],
                         warnings=[w.to_dict() for w in warnings])
    return JSONResponse(status_code=status, content=body.model_dump())


async def _json_body(request: Request):
    raw = await request.body()
    try:
        return json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ScenarioError([Issue("error", "$", f"malformed JSON body: {exc}", "syntax")]) from None


def _prefixed(issues, prefix: str) -> list[Issue]:
    return [Issue(i.severity, prefix if i.path == "$" else f"{prefix}.{i.path}", i.message, i.code)
            for i in issues]


def _parse_and_check(doc):
    """Parse + resolve + validate; returns (spec, world, warnings) or an error response."""
    try:
        spec = parse_scenario_obj(doc)
    except ScenarioError as exc:
        return _error(400, "scenario failed to parse", exc.errors)
    try:
        world = resolve_world(spec)
    except HarnessError as exc:
        return _error(422, f"map could not be loaded: {exc}")
    issues = validate_semantics(spec, world)
    errors = errors_only(issues)
    warnings = [i for i in issues if i.severity == "warning"]
    if errors:
        return _error(422, "scenario is invalid for its map", errors, warnings)
    return spec, world, warnings


def create_app(data_dir: Optional[Path] = None, workers: Optional[int] = None) -> FastAPI:
    env = settings_from_env()
    tasks = TaskQueue(data_dir if data_dir is not None else env["data_dir"],
                      workers if workers is not None else env["workers"])

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        tasks.start()
        try:
            yield
        finally:
            tasks.stop()

    app = FastAPI(title="uavharness", version="0.1.0", lifespan=lifespan)
    app.state.tasks = tasks

    @app.get("/api/v1/health", response_model=Health)
    def health():
        return Health()

    @app.post("/api/v1/simulations", status_code=202, response_model=TaskSubmitted,
              responses={400: {"model": ErrorResponse}, 422: {"model": ErrorResponse}})
    async def submit_simulation(request: Request):
        try:
            doc = await _json_body(request)
        except ScenarioError as exc:
            return _error(400, "malformed request body", exc.errors)
        checked = _parse_and_check(doc)
        if isinstance(checked, JSONResponse):
            return checked
        spec, world, warnings = checked
        rec = tasks.submit_simulation(spec, world)
        return TaskSubmitted(task_id=rec.task_id, status="queued", warnings=[w.to_dict() for w in warnings])

    @app.post("/api/v1/campaigns", status_code=202, response_model=TaskSubmitted,
              responses={400: {"model": ErrorResponse}, 422: {"model": ErrorResponse}})
    async def submit_campaign(request: Request):
        try:
            body = await _json_body(request)
        except ScenarioError as exc:
            return _error(400, "malformed request body", exc.errors)
        if not isinstance(body, dict) or set(body) != {"scenario", "campaign"}:
            return _error(400, "body must be an object with exactly the keys 'scenario' and 'campaign'")
        try:
            fuzz = FuzzSpec.model_validate_json(json.dumps(body["campaign"]))
        except ValidationError as exc:
            issues = [Issue("error", "campaign." + ".".join(str(p) for p in e["loc"]), e["msg"])
                      for e in exc.errors()]
            return _error(400, "campaign spec failed to parse", issues)
        try:
            spec = parse_scenario_obj(body["scenario"])
        except ScenarioError as exc:
            return _error(400, "scenario failed to parse", _prefixed(exc.errors, "scenario"))
        checked = _parse_and_check(body["scenario"])
        if isinstance(checked, JSONResponse):
            return checked
        spec, world, warnings = checked
        try:
            check_fuzz_spec(spec, fuzz)
        except (InvalidRange, InvalidTarget) as exc:
            return _error(422, str(exc))
        rec = tasks.submit_campaign(spec, world, fuzz)
        return TaskSubmitted(task_id=rec.task_id, status="queued", warnings=[w.to_dict() for w in warnings])

    @app.get("/api/v1/tasks/{task_id}", response_model=TaskSummary)
    def get_status(task_id: str):
        rec = tasks.get(task_id)
        if rec is None:
            raise HTTPException(404, f"unknown task {task_id}")
        return TaskSummary(**rec.summary())

    @app.get("/api/v1/tasks/{task_id}/report")
    def get_report(task_id: str):
        rec = tasks.get(task_id)
        if rec is None:
            raise HTTPException(404, f"unknown task {task_id}")
        if rec.status in (TaskStatus.QUEUED, TaskStatus.RUNNING):
            return JSONResponse(status_code=409, content={"detail": f"task is {rec.status.value}",
                                                          "status": rec.status.value})
        if rec.status is TaskStatus.FAILED:
            return JSONResponse(status_code=410, content={"detail": "task failed", "error": rec.error})
        return Response(content=tasks.report_path(rec).read_bytes(), media_type="application/json")

    return app
