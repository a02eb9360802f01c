"""Human-validation task queue and its HTTP service.

Tasks are drawn per attribute without replacement up to a quota (the
default 40 samples per attribute), from a seeded stream so a queue is
reproducible.  Each sample is served to one annotator (configurable
overlap); an annotator who re-requests without answering gets the same
task back.  Answers append to a line-delimited log with a single writer;
progress is a pure fold over that log, and restarting the service replays
it, so the stage is resumable.

Two question forms exist: the binary pair (was the attribute applied? is
the bird faithful to the reference?) answered yes/somewhat/no, and the
group-choice form listing every option of the sample's attribute group.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Mapping
from urllib.parse import parse_qs, urlparse

from . import rng
from .errors import AnnotationValidationError, ParameterError
from .pipeline import (
    BINARY_ANSWERS,
    AnnotationRecord,
    AttributeGroup,
    Manifest,
)

__all__ = [
    "AnnotationTask",
    "QuestionSpec",
    "TaskQueue",
    "UnknownAnnotatorError",
    "UnknownTaskError",
    "DuplicateAnswerError",
    "serve",
]


class UnknownAnnotatorError(KeyError):
    """The annotator id is not registered with this queue."""


class UnknownTaskError(KeyError):
    """No task with that id exists."""


class DuplicateAnswerError(RuntimeError):
    """The (task, question) pair was already answered."""


@dataclass(frozen=True)
class QuestionSpec:
    name: str
    options: tuple[str, ...]


@dataclass(frozen=True)
class AnnotationTask:
    task_id: str
    sample_id: str
    attribute: str
    form: str
    questions: tuple[QuestionSpec, ...]
    payload: dict

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "sample_id": self.sample_id,
            "attribute": self.attribute,
            "form": self.form,
            "questions": [
                {"name": q.name, "options": list(q.options)} for q in self.questions
            ],
            "payload": self.payload,
        }


def _decode_payload_ref(ref: str) -> dict:
    if ref.startswith("xy:"):
        coords = [float(v) for v in ref[3:].split(",")]
        return {"coords": coords}
    return {"ref": ref}


class TaskQueue:
    """Serves annotation tasks from a manifest and records the answers."""

    def __init__(
        self,
        manifest: Manifest,
        annotators: list[str],
        groups: Mapping[str, AttributeGroup] | None = None,
        quota: int = 40,
        form: str = "binary",
        seed: int = 0,
        overlap: int = 1,
        log_path: str | Path | None = None,
    ):
        if form not in ("binary", "group"):
            raise ParameterError(f"unknown question form {form!r}")
        if quota < 1 or overlap < 1:
            raise ParameterError("quota and overlap must be >= 1")
        self.annotators = set(annotators)
        self.quota = quota
        self.form = form
        self.seed = seed
        self.overlap = overlap
        self.log_path = Path(log_path) if log_path is not None else None
        self._lock = threading.Lock()
        self._records: list[AnnotationRecord] = []
        self._assigned: dict[str, str] = {}          # annotator -> open task id
        self._served: dict[str, set[str]] = {}       # task id -> annotators
        self._answered: dict[str, set[str]] = {}     # task id -> answered questions
        self._tasks: dict[str, AnnotationTask] = {}
        self._order: list[str] = []
        self._build_tasks(manifest, groups or {})
        if self.log_path is not None and self.log_path.exists():
            self._replay_log()

    def _build_tasks(self, manifest: Manifest, groups: Mapping[str, AttributeGroup]) -> None:
        by_attr: dict[str, list] = {}
        for rec in manifest.records:
            by_attr.setdefault(rec.attribute, []).append(rec)
        for attr in sorted(by_attr):
            recs = sorted(by_attr[attr], key=lambda r: r.sample_id)
            picker = rng.stream(self.quota_seed(attr))
            order = picker.permutation(len(recs))[: self.quota]
            for idx in order:
                rec = recs[int(idx)]
                if self.form == "binary":
                    questions = (
                        QuestionSpec("attribute_applied", BINARY_ANSWERS),
                        QuestionSpec("bird_faithful", BINARY_ANSWERS),
                    )
                else:
                    group = groups.get(rec.group)
                    if group is None:
                        raise ParameterError(
                            f"group-choice form needs the option list for {rec.group!r}"
                        )
                    questions = (QuestionSpec("group_choice", tuple(group.options) + ("Other",)),)
                task = AnnotationTask(
                    task_id=f"{rec.sample_id}:{self.form}",
                    sample_id=rec.sample_id,
                    attribute=attr,
                    form=self.form,
                    questions=questions,
                    payload={
                        **_decode_payload_ref(rec.payload_ref),
                        "class_R": rec.class_R,
                        "group": rec.group,
                        "s_plus": rec.s_plus,
                    },
                )
                self._tasks[task.task_id] = task
                self._order.append(task.task_id)

    def quota_seed(self, attribute: str) -> int:
        return self.seed ^ rng.pairing_key(attribute)

    def _replay_log(self) -> None:
        with open(self.log_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = AnnotationRecord.from_dict(json.loads(line))
                self._records.append(rec)
                task_id = f"{rec.sample_id}:{self.form}"
                if task_id in self._tasks:
                    self._answered.setdefault(task_id, set()).add(rec.question)
                    self._served.setdefault(task_id, set()).add(rec.annotator)

    def _task_complete(self, task_id: str) -> bool:
        answered = self._answered.get(task_id, set())
        return all(q.name in answered for q in self._tasks[task_id].questions)

    def next_task(self, annotator: str) -> AnnotationTask | None:
        """The annotator's open task, a fresh one, or None when quotas are met."""
        if annotator not in self.annotators:
            raise UnknownAnnotatorError(annotator)
        with self._lock:
            open_id = self._assigned.get(annotator)
            if open_id is not None and not self._task_complete(open_id):
                return self._tasks[open_id]
            for task_id in self._order:
                if self._task_complete(task_id):
                    continue
                served = self._served.setdefault(task_id, set())
                if annotator in served:
                    continue
                if len(served) >= self.overlap:
                    continue
                served.add(annotator)
                self._assigned[annotator] = task_id
                return self._tasks[task_id]
            return None

    def submit(self, task_id: str, question: str, answer: str, annotator: str) -> AnnotationRecord:
        """Record one answer; duplicates are rejected and leave the log unchanged."""
        if annotator not in self.annotators:
            raise UnknownAnnotatorError(annotator)
        with self._lock:
            task = self._tasks.get(task_id)
            if task is None:
                raise UnknownTaskError(task_id)
            spec = next((q for q in task.questions if q.name == question), None)
            if spec is None:
                raise AnnotationValidationError(
                    f"task {task_id!r} has no question {question!r}"
                )
            if answer not in spec.options:
                raise AnnotationValidationError(
                    f"answer {answer!r} not in legal set {spec.options}"
                )
            answered = self._answered.setdefault(task_id, set())
            if question in answered:
                raise DuplicateAnswerError(f"{task_id}:{question}")
            record = AnnotationRecord(
                sample_id=task.sample_id,
                question=question,
                answer=answer,
                annotator=annotator,
                timestamp=datetime.now(timezone.utc).isoformat(),
            )
            if self.log_path is not None:
                with open(self.log_path, "a", encoding="utf-8") as fh:
                    fh.write(record.to_json() + "\n")
            answered.add(question)
            self._records.append(record)
            if self._assigned.get(annotator) == task_id and self._task_complete(task_id):
                del self._assigned[annotator]
            return record

    def progress(self) -> dict:
        """Per-attribute completion counts and live yes-rate, folded from the log."""
        with self._lock:
            per_attr: dict[str, dict] = {}
            for task_id in self._order:
                task = self._tasks[task_id]
                stats = per_attr.setdefault(
                    task.attribute,
                    {"selected": 0, "completed": 0, "answers": 0, "yes": 0, "applied": 0},
                )
                stats["selected"] += 1
                stats["completed"] += self._task_complete(task_id)
            sample_attr = {t.sample_id: t.attribute for t in self._tasks.values()}
            for rec in self._records:
                attr = sample_attr.get(rec.sample_id)
                if attr is None:
                    continue
                stats = per_attr[attr]
                stats["answers"] += 1
                if rec.question == "attribute_applied":
                    stats["applied"] += 1
                    stats["yes"] += rec.answer == "yes"
            out = {}
            for attr, stats in sorted(per_attr.items()):
                out[attr] = {
                    "quota": self.quota,
                    "selected": stats["selected"],
                    "completed": stats["completed"],
                    "answers": stats["answers"],
                    "yes_rate": (stats["yes"] / stats["applied"]) if stats["applied"] else None,
                    "complete": stats["completed"] >= stats["selected"],
                }
            return {
                "attributes": out,
                "total_tasks": len(self._order),
                "completed_tasks": sum(1 for t in self._order if self._task_complete(t)),
                "records": len(self._records),
            }

    @property
    def records(self) -> list[AnnotationRecord]:
        with self._lock:
            return list(self._records)


def _make_handler(queue: TaskQueue, ui_dir: Path | None):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):  # keep test output quiet
            pass

        def _send_json(self, status: int, doc: dict) -> None:
            body = json.dumps(doc).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            url = urlparse(self.path)
            if url.path == "/tasks/next":
                params = parse_qs(url.query)
                annotator = params.get("annotator", [None])[0]
                if annotator is None:
                    return self._send_json(400, {"error": "annotator parameter required"})
                try:
                    task = queue.next_task(annotator)
                except UnknownAnnotatorError:
                    return self._send_json(401, {"error": f"unknown annotator {annotator!r}"})
                if task is None:
                    return self._send_json(200, {"done": True})
                return self._send_json(200, {"done": False, "task": task.to_dict()})
            if url.path == "/progress":
                return self._send_json(200, queue.progress())
            if ui_dir is not None:
                return self._serve_static(url.path)
            return self._send_json(404, {"error": "not found"})

        def _serve_static(self, path: str) -> None:
            rel = "index.html" if path in ("", "/") else path.lstrip("/")
            target = (ui_dir / rel).resolve()
            if not str(target).startswith(str(ui_dir.resolve())) or not target.is_file():
                return self._send_json(404, {"error": "not found"})
            content_types = {
                ".html": "text/html",
                ".js": "text/javascript",
                ".css": "text/css",
                ".svg": "image/svg+xml",
            }
            body = target.read_bytes()
            self.send_response(200)
            self.send_header("Content-Type", content_types.get(target.suffix, "application/octet-stream"))
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_POST(self):
            url = urlparse(self.path)
            if url.path != "/answers":
                return self._send_json(404, {"error": "not found"})
            length = int(self.headers.get("Content-Length", "0"))
            try:
                doc = json.loads(self.rfile.read(length).decode("utf-8"))
            except json.JSONDecodeError:
                return self._send_json(400, {"error": "invalid JSON body"})
            missing = [k for k in ("task_id", "question", "answer", "annotator") if k not in doc]
            if missing:
                return self._send_json(400, {"error": f"missing fields: {missing}"})
            try:
                record = queue.submit(doc["task_id"], doc["question"], doc["answer"], doc["annotator"])
            except UnknownAnnotatorError:
                return self._send_json(401, {"error": "unknown annotator"})
            except UnknownTaskError:
                return self._send_json(404, {"error": "unknown task"})
            except AnnotationValidationError as exc:
                return self._send_json(400, {"error": str(exc)})
            except DuplicateAnswerError:
                return self._send_json(409, {"error": "answer already recorded"})
            return self._send_json(200, {"recorded": True, "sample_id": record.sample_id})

    return Handler


def serve(queue: TaskQueue, host: str = "127.0.0.1", port: int = 0, ui_dir: str | Path | None = None) -> ThreadingHTTPServer:
    """Bind the service; the caller decides whether to serve_forever()."""
    handler = _make_handler(queue, Path(ui_dir) if ui_dir is not None else None)
    return ThreadingHTTPServer((host, port), handler)
