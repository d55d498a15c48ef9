"""Request/response bodies for the HTTP API."""
from typing import Any, Literal, Optional

from pydantic import BaseModel


class IssueOut(BaseModel):
    severity: str
    path: str
    message: str
    code: str


class ErrorResponse(BaseModel):
    detail: str
    errors: list[IssueOut] = []
    warnings: list[IssueOut] = []


class TaskSubmitted(BaseModel):
    task_id: str
    status: Literal["queued"]
    warnings: list[IssueOut] = []


class TaskSummary(BaseModel):
    task_id: str
    kind: Literal["simulation", "campaign"]
    status: Literal["queued", "running", "done", "failed"]
    submitted_at: float
    started_at: Optional[float] = None
    finished_at: Optional[float] = None
    result_location: Optional[str] = None
    error: Optional[str] = None


class CampaignRequest(BaseModel):
    scenario: dict[str, Any]
    campaign: dict[str, Any]


class Health(BaseModel):
    status: Literal["ok"] = "ok"
