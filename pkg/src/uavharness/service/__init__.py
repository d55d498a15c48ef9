"""HTTP service: a FastAPI app over a FIFO task queue."""
from .app import create_app
from .tasks import TaskQueue, TaskRecord, TaskStatus

__all__ = ["create_app", "TaskQueue", "TaskRecord", "TaskStatus"]
