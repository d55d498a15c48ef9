"""FIFO task queue with a fixed pool of worker threads.

Results live under ``<data_dir>/<task_id>/`` next to a ``task.json`` record.
Finished tasks are reloaded on startup; queued or running tasks are lost
when the process stops.
"""
from __future__ import annotations

import json
import logging
import queue
import threading
import time
import uuid
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Optional

from ..fuzz import FuzzSpec, run_campaign
from ..runner import run_to_dir
from ..scenario import ScenarioSpec
from ..world import WorldModel

log = logging.getLogger(__name__)


class TaskStatus(str, Enum):
    QUEUED = "queued"
    RUNNING = "running"
    DONE = "done"
    FAILED = "failed"


class TaskKind(str, Enum):
    SIMULATION = "simulation"
    CAMPAIGN = "campaign"


REPORT_FILE = {TaskKind.SIMULATION: "report.json", TaskKind.CAMPAIGN: "campaign.json"}


@dataclass
class TaskRecord:
    task_id: str
    kind: TaskKind
    status: TaskStatus
    submitted_at: float
    started_at: Optional[float] = None
    finished_at: Optional[float] = None
    result_location: Optional[str] = None
    error: Optional[str] = None

    def summary(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        d["status"] = self.status.value
        return d


@dataclass
class _Job:
    record: TaskRecord
    spec: ScenarioSpec
    world: WorldModel
    fuzz: Optional[FuzzSpec] = None
    base_dir: Optional[Path] = None


_STOP = object()


class TaskQueue:
    def __init__(self, data_dir, workers: int = 1):
        if workers < 1:
            raise ValueError("workers must be >= 1")
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.workers = workers
        self._q: "queue.Queue[Any]" = queue.Queue()
        self._lock = threading.Lock()
        self._records: dict[str, TaskRecord] = {}
        self._threads: list[threading.Thread] = []
        self._stopping = threading.Event()
        self._last_ts = 0.0
        self._load_finished()

    def _now(self) -> float:
        # timestamps never go backwards even if the wall clock does
        with self._lock:
            self._last_ts = max(time.time(), self._last_ts)
            return self._last_ts

    def _load_finished(self) -> None:
        for path in sorted(self.data_dir.glob("*/task.json")):
            try:
                d = json.loads(path.read_text(encoding="utf-8"))
                rec = TaskRecord(**{**d, "kind": TaskKind(d["kind"]), "status": TaskStatus(d["status"])})
            except (ValueError, KeyError, TypeError) as exc:
                log.warning("skipping unreadable task record %s: %s", path, exc)
                continue
            if rec.status in (TaskStatus.DONE, TaskStatus.FAILED):
                self._records[rec.task_id] = rec

    def start(self) -> None:
        self._stopping.clear()
        for i in range(self.workers):
            t = threading.Thread(target=self._work, name=f"task-worker-{i}", daemon=True)
            t.start()
            self._threads.append(t)

    def stop(self, timeout: Optional[float] = None) -> None:
        """Stop after the tasks currently running; queued tasks are dropped."""
        self._stopping.set()
        for _ in self._threads:
            self._q.put(_STOP)
        for t in self._threads:
            t.join(timeout)
        self._threads.clear()

    def submit_simulation(self, spec: ScenarioSpec, world: WorldModel) -> TaskRecord:
        return self._submit(TaskKind.SIMULATION, spec, world)

    def submit_campaign(self, spec: ScenarioSpec, world: WorldModel, fuzz: FuzzSpec,
                        base_dir: Optional[Path] = None) -> TaskRecord:
        return self._submit(TaskKind.CAMPAIGN, spec, world, fuzz, base_dir)

    def _submit(self, kind, spec, world, fuzz=None, base_dir=None) -> TaskRecord:
        rec = TaskRecord(uuid.uuid4().hex, kind, TaskStatus.QUEUED, self._now())
        with self._lock:
            self._records[rec.task_id] = rec
        self._q.put(_Job(rec, spec, world, fuzz, base_dir))
        return rec

    def get(self, task_id: str) -> Optional[TaskRecord]:
        with self._lock:
            rec = self._records.get(task_id)
            return None if rec is None else TaskRecord(**asdict(rec))

    def report_path(self, rec: TaskRecord) -> Path:
        return self.data_dir / rec.task_id / REPORT_FILE[rec.kind]

    def _set(self, rec: TaskRecord, **changes) -> None:
        with self._lock:
            for k, v in changes.items():
                setattr(rec, k, v)

    def _work(self) -> None:
        while True:
            job = self._q.get()
            if job is _STOP or self._stopping.is_set():
                return
            rec = job.record
            self._set(rec, status=TaskStatus.RUNNING, started_at=self._now())
            out = self.data_dir / rec.task_id
            try:
                if rec.kind is TaskKind.SIMULATION:
                    run_to_dir(job.spec, job.world, out)
                else:
                    run_campaign(job.spec, job.fuzz, base_dir=job.base_dir, out_dir=out, jobs=1)
            except Exception as exc:  # a failed task must never kill the worker
                log.exception("task %s failed", rec.task_id)
                self._finish(rec, TaskStatus.FAILED, error=f"{type(exc).__name__}: {exc}")
            else:
                self._finish(rec, TaskStatus.DONE, result_location=str(self.report_path(rec)))

    def _finish(self, rec: TaskRecord, status: TaskStatus, **changes) -> None:
        out = self.data_dir / rec.task_id
        out.mkdir(parents=True, exist_ok=True)
        finished = self._now()
        snapshot = TaskRecord(**{**asdict(rec), **changes, "status": status, "finished_at": finished})
        (out / "task.json").write_text(json.dumps(snapshot.summary(), indent=2) + "\n", encoding="utf-8")
        self._set(rec, status=status, finished_at=finished, **changes)
