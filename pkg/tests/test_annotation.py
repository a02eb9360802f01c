import json
import threading
import urllib.request
from urllib.error import HTTPError

import pytest

from conftest import tiny_manifest
from tdg.annotation import (
    DuplicateAnswerError,
    TaskQueue,
    UnknownAnnotatorError,
    UnknownTaskError,
    serve,
)
from tdg.errors import AnnotationValidationError
from tdg.pipeline import aggregate_human_validation, load_attribute_groups, manifest_sample_index

GROUPS = load_attribute_groups()


def make_queue(tmp_path=None, quota=3, form="binary", annotators=("a1", "a2"), overlap=1):
    manifest = tiny_manifest(n_pairings=2, per_pairing=5)
    return TaskQueue(
        manifest,
        annotators=list(annotators),
        groups=GROUPS,
        quota=quota,
        form=form,
        seed=7,
        overlap=overlap,
        log_path=None if tmp_path is None else tmp_path / "annotations.jsonl",
    ), manifest


def answer_task(queue, task, annotator, answers=("yes", "yes")):
    for question, ans in zip(task.questions, answers):
        queue.submit(task.task_id, question.name, ans, annotator)


class TestTaskQueue:
    def test_serves_up_to_quota_then_done(self):
        queue, _ = make_queue(quota=3)
        served = set()
        while True:
            task = queue.next_task("a1")
            if task is None:
                break
            answer_task(queue, task, "a1")
            served.add(task.task_id)
        # two attributes in the manifest, three samples each
        assert len(served) == 6
        assert queue.next_task("a1") is None

    def test_quota_selection_is_random_without_replacement(self):
        queue, manifest = make_queue(quota=5)
        sample_ids = {t.sample_id for t in queue._tasks.values()}
        assert len(sample_ids) == len(queue._tasks)  # no duplicates
        assert sample_ids <= {rec.sample_id for rec in manifest.records}

    def test_reserves_same_task_until_answered(self):
        queue, _ = make_queue()
        first = queue.next_task("a1")
        again = queue.next_task("a1")
        assert first.task_id == again.task_id
        queue.submit(first.task_id, "attribute_applied", "yes", "a1")
        still = queue.next_task("a1")  # one question open
        assert still.task_id == first.task_id
        queue.submit(first.task_id, "bird_faithful", "somewhat", "a1")
        fresh = queue.next_task("a1")
        assert fresh.task_id != first.task_id

    def test_unknown_annotator(self):
        queue, _ = make_queue()
        with pytest.raises(UnknownAnnotatorError):
            queue.next_task("nobody")
        with pytest.raises(UnknownAnnotatorError):
            queue.submit("x", "attribute_applied", "yes", "nobody")

    def test_duplicate_answer_rejected_and_log_unchanged(self, tmp_path):
        queue, _ = make_queue(tmp_path)
        task = queue.next_task("a1")
        queue.submit(task.task_id, "attribute_applied", "yes", "a1")
        log_before = (tmp_path / "annotations.jsonl").read_bytes()
        with pytest.raises(DuplicateAnswerError):
            queue.submit(task.task_id, "attribute_applied", "no", "a1")
        assert (tmp_path / "annotations.jsonl").read_bytes() == log_before

    def test_illegal_answer_rejected(self):
        queue, _ = make_queue()
        task = queue.next_task("a1")
        with pytest.raises(AnnotationValidationError):
            queue.submit(task.task_id, "attribute_applied", "definitely", "a1")
        with pytest.raises(AnnotationValidationError):
            queue.submit(task.task_id, "group_choice", "yes", "a1")

    def test_unknown_task(self):
        queue, _ = make_queue()
        with pytest.raises(UnknownTaskError):
            queue.submit("ghost:binary", "attribute_applied", "yes", "a1")

    def test_single_annotator_per_sample_by_default(self):
        queue, _ = make_queue(quota=1)
        t1 = queue.next_task("a1")
        t2 = queue.next_task("a2")
        assert t1.task_id != t2.task_id

    def test_overlap_two_serves_same_task_twice(self):
        queue, _ = make_queue(quota=1, overlap=2)
        t1 = queue.next_task("a1")
        t2 = queue.next_task("a2")
        assert t1.task_id == t2.task_id

    def test_progress_is_consistent_with_rescan(self):
        queue, _ = make_queue(quota=2)
        empty = queue.progress()
        assert empty["records"] == 0
        assert all(v["completed"] == 0 for v in empty["attributes"].values())
        tasks = []
        for _ in range(2):
            task = queue.next_task("a1")
            answer_task(queue, task, "a1", ("yes", "no"))
            tasks.append(task)
        progress = queue.progress()
        records = queue.records
        assert progress["records"] == len(records) == 4
        yes = sum(1 for r in records if r.question == "attribute_applied" and r.answer == "yes")
        applied = sum(1 for r in records if r.question == "attribute_applied")
        attr = tasks[0].attribute
        got = progress["attributes"][attr]
        # direct re-scan of the log matches the view
        scan_yes = sum(
            1
            for r in records
            if r.question == "attribute_applied" and r.answer == "yes"
            and queue._tasks[f"{r.sample_id}:binary"].attribute == attr
        )
        scan_applied = sum(
            1
            for r in records
            if r.question == "attribute_applied"
            and queue._tasks[f"{r.sample_id}:binary"].attribute == attr
        )
        assert got["yes_rate"] == scan_yes / scan_applied

    def test_group_form_lists_group_options(self):
        queue, _ = make_queue(form="group")
        task = queue.next_task("a1")
        assert task.form == "group"
        (question,) = task.questions
        assert question.name == "group_choice"
        assert "Other" in question.options
        assert set(GROUPS[task.payload["group"]].options) <= set(question.options)

    def test_log_replay_restores_state(self, tmp_path):
        queue, manifest = make_queue(tmp_path, quota=2)
        task = queue.next_task("a1")
        answer_task(queue, task, "a1")
        # restart the service over the same log
        revived = TaskQueue(
            manifest,
            annotators=["a1", "a2"],
            groups=GROUPS,
            quota=2,
            form="binary",
            seed=7,
            log_path=tmp_path / "annotations.jsonl",
        )
        assert revived.progress()["records"] == 2
        nxt = revived.next_task("a1")
        assert nxt is None or nxt.task_id != task.task_id

    def test_records_feed_aggregation(self, tmp_path):
        queue, manifest = make_queue(tmp_path, quota=2)
        while (task := queue.next_task("a1")) is not None:
            answer_task(queue, task, "a1", ("yes", "yes"))
        report = aggregate_human_validation(
            queue.records, manifest_sample_index(manifest, GROUPS)
        )
        assert all(v.yes_rate == 1.0 for v in report.per_attribute.values())


class TestHttpService:
    @pytest.fixture
    def server(self, tmp_path):
        queue, manifest = make_queue(tmp_path, quota=2, annotators=("alice",))
        srv = serve(queue, port=0)
        thread = threading.Thread(target=srv.serve_forever, daemon=True)
        thread.start()
        yield srv, queue
        srv.shutdown()
        srv.server_close()

    def _get(self, srv, path):
        host, port = srv.server_address[:2]
        try:
            with urllib.request.urlopen(f"http://{host}:{port}{path}") as resp:
                return resp.status, json.loads(resp.read())
        except HTTPError as err:
            return err.code, json.loads(err.read())

    def _post(self, srv, path, doc):
        host, port = srv.server_address[:2]
        req = urllib.request.Request(
            f"http://{host}:{port}{path}",
            data=json.dumps(doc).encode(),
            headers={"Content-Type": "application/json"},
        )
        try:
            with urllib.request.urlopen(req) as resp:
                return resp.status, json.loads(resp.read())
        except HTTPError as err:
            return err.code, json.loads(err.read())

    def test_task_answer_progress_cycle(self, server):
        srv, _ = server
        status, doc = self._get(srv, "/tasks/next?annotator=alice")
        assert status == 200 and not doc["done"]
        task = doc["task"]
        assert {"task_id", "sample_id", "questions", "payload"} <= set(task)
        status, ack = self._post(
            srv,
            "/answers",
            {"task_id": task["task_id"], "question": "attribute_applied", "answer": "yes", "annotator": "alice"},
        )
        assert status == 200 and ack["recorded"]
        status, progress = self._get(srv, "/progress")
        assert status == 200 and progress["records"] == 1

    def test_http_error_codes(self, server):
        srv, _ = server
        status, _ = self._get(srv, "/tasks/next?annotator=mallory")
        assert status == 401
        status, doc = self._get(srv, "/tasks/next?annotator=alice")
        task = doc["task"]
        body = {"task_id": task["task_id"], "question": "attribute_applied", "answer": "yes", "annotator": "alice"}
        assert self._post(srv, "/answers", body)[0] == 200
        assert self._post(srv, "/answers", body)[0] == 409  # duplicate
        bad = dict(body, answer="nope", question="bird_faithful")
        assert self._post(srv, "/answers", bad)[0] == 400
        missing = dict(body, task_id="ghost:binary")
        assert self._post(srv, "/answers", missing)[0] == 404
        assert self._get(srv, "/nothing-here")[0] == 404
