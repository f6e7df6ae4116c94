"""Localhost review service.

Publishes blinded review tasks, stores expert annotations, reports live
inter-rater agreement, and statically hosts the review UI bundle when
one is configured. Ground-truth sources never appear in any response;
a contract test walks every endpoint to enforce that.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .errors import InsufficientOverlap
from .review import (
    Annotation,
    ReviewTask,
    agreement_to_json,
    annotation_to_json,
    inter_rater_agreement,
)

_STATIC_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "application/javascript",
    ".css": "text/css",
    ".svg": "image/svg+xml",
    ".json": "application/json",
    ".map": "application/json",
}


class ReviewStore:
    """Task queue plus annotation storage, serialized through one writer lock."""

    def __init__(self, tasks: list[ReviewTask], annotations_path: str | Path | None = None):
        self.tasks = list(tasks)
        self._by_id = {task.id: task for task in tasks}
        self.annotations: list[Annotation] = []
        self._keys: set[tuple[str, str]] = set()
        self._lock = threading.Lock()
        self.annotations_path = Path(annotations_path) if annotations_path else None
        if self.annotations_path and self.annotations_path.exists():
            with open(self.annotations_path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        doc = json.loads(line)
                        self._remember(Annotation(**doc))

    def _remember(self, annotation: Annotation) -> None:
        self.annotations.append(annotation)
        self._keys.add((annotation.task_id, annotation.annotator_id))

    def next_task(self, annotator_id: str) -> tuple[ReviewTask | None, int, int]:
        """The first task this annotator has not rated, plus progress counters."""
        with self._lock:
            done = sum(1 for task in self.tasks if (task.id, annotator_id) in self._keys)
            for task in self.tasks:
                if (task.id, annotator_id) not in self._keys:
                    return task, done, len(self.tasks)
            return None, done, len(self.tasks)

    def add(self, annotation: Annotation) -> None:
        with self._lock:
            if annotation.task_id not in self._by_id:
                raise KeyError(annotation.task_id)
            key = (annotation.task_id, annotation.annotator_id)
            if key in self._keys:
                raise ValueError(f"duplicate annotation for {key}")
            self._remember(annotation)
            if self.annotations_path is not None:
                with open(self.annotations_path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(annotation_to_json(annotation), sort_keys=True) + "\n")

    def agreement(self) -> dict:
        with self._lock:
            annotations = list(self.annotations)
        try:
            stats = inter_rater_agreement(annotations)
        except InsufficientOverlap:
            return {
                "status": "insufficient_overlap",
                "n_annotations": len(annotations),
            }
        doc = agreement_to_json(stats)
        doc["status"] = "ok"
        return doc


def make_handler(store: ReviewStore, static_dir: str | Path | None = None):
    static_root = Path(static_dir).resolve() if static_dir else None

    class ReviewHandler(BaseHTTPRequestHandler):
        server_version = "synthpoll-review/0.1"

        def log_message(self, format, *args):  # noqa: A002 - stdlib signature
            pass  # quiet by default; the audit log is the evidence trail

        def _send_json(self, status: int, payload: dict) -> None:
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):  # noqa: N802 - stdlib naming
            parsed = urlparse(self.path)
            if parsed.path == "/tasks":
                query = parse_qs(parsed.query)
                annotator = query.get("annotator_id", [""])[0]
                if not annotator:
                    self._send_json(400, {"error": "annotator_id query parameter required"})
                    return
                task, done, total = store.next_task(annotator)
                payload = {
                    "task_id": task.id if task else None,
                    "statement": task.statement if task else None,
                    "progress": {"completed": done, "total": total},
                }
                self._send_json(200, payload)
            elif parsed.path == "/agreement":
                self._send_json(200, store.agreement())
            elif static_root is not None:
                self._serve_static(parsed.path)
            else:
                self._send_json(404, {"error": f"unknown path {parsed.path}"})

        def _serve_static(self, path: str) -> None:
            relative = "index.html" if path == "/" else path.lstrip("/")
            target = (static_root / relative).resolve()
            if not str(target).startswith(str(static_root)) or not target.is_file():
                self._send_json(404, {"error": f"unknown path {path}"})
                return
            body = target.read_bytes()
            self.send_response(200)
            content_type = _STATIC_TYPES.get(target.suffix, "application/octet-stream")
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_POST(self):  # noqa: N802 - stdlib naming
            parsed = urlparse(self.path)
            if parsed.path != "/annotations":
                self._send_json(404, {"error": f"unknown path {parsed.path}"})
                return
            length = int(self.headers.get("Content-Length", "0"))
            try:
                doc = json.loads(self.rfile.read(length).decode("utf-8"))
                annotation = Annotation(
                    task_id=doc["task_id"],
                    annotator_id=doc["annotator_id"],
                    verdict=doc["verdict"],
                    reasoning=doc["reasoning"],
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as error:
                self._send_json(400, {"error": f"malformed annotation: {error}"})
                return
            try:
                store.add(annotation)
            except KeyError:
                self._send_json(404, {"error": f"unknown task {annotation.task_id!r}"})
                return
            except ValueError:
                self._send_json(
                    409,
                    {
                        "error": "task already annotated by this annotator",
                        "task_id": annotation.task_id,
                    },
                )
                return
            self._send_json(201, {"status": "stored", "task_id": annotation.task_id})

    return ReviewHandler


def make_server(
    store: ReviewStore,
    port: int = 0,
    host: str = "127.0.0.1",
    static_dir: str | Path | None = None,
) -> ThreadingHTTPServer:
    """Bind the review service; port 0 picks a free port. Caller runs serve_forever."""
    handler = make_handler(store, static_dir=static_dir)
    return ThreadingHTTPServer((host, port), handler)
