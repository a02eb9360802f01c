"""The human-validation loop, scripted: serve tasks, answer, aggregate.

Builds a small manifest, starts the annotation HTTP service on an
ephemeral port, walks an annotator through the queue over real HTTP, and
feeds the resulting log into the aggregation step.
"""

import json
import threading
import urllib.request

from tdg.annotation import TaskQueue, serve
from tdg.pipeline import (
    FilterOutcome,
    PairingSpec,
    Provenance,
    aggregate_human_validation,
    emit_manifest,
    load_attribute_groups,
    manifest_sample_index,
)
from tdg.pipeline import GeneratedSample, payload_reference, sample_identifier

groups = load_attribute_groups()
pairing = PairingSpec("Blue Jay", groups["crown color"], "yellow", "blue", "bird", "color")
samples = []
for seed, y in enumerate((1.4, 0.9, 2.2)):
    payload = (-2.0, y)
    samples.append(
        GeneratedSample(
            sample_id=sample_identifier(pairing.pairing_id, seed),
            pairing_id=pairing.pairing_id,
            seed=seed,
            payload=payload,
            payload_ref=payload_reference(payload),
            oracle_answer="yellow",
            oracle_confidence=0.8 + 0.05 * seed,
        )
    )
manifest = emit_manifest(
    [(pairing, FilterOutcome(pairing.pairing_id, False, tuple(samples), 30, 3, 3))],
    Provenance("demo", (0, 1, 2), 3),
)

queue = TaskQueue(manifest, annotators=["demo-annotator"], groups=groups, quota=3, form="binary")
server = serve(queue, port=0)
host, port = server.server_address[:2]
threading.Thread(target=server.serve_forever, daemon=True).start()
print(f"service on http://{host}:{port}")


def get(path):
    with urllib.request.urlopen(f"http://{host}:{port}{path}") as resp:
        return json.loads(resp.read())


def post(path, doc):
    req = urllib.request.Request(
        f"http://{host}:{port}{path}", data=json.dumps(doc).encode(),
        headers={"Content-Type": "application/json"},
    )
    with urllib.request.urlopen(req) as resp:
        return json.loads(resp.read())


answers = iter(["yes", "somewhat", "no"])
while True:
    doc = get("/tasks/next?annotator=demo-annotator")
    if doc["done"]:
        print("queue exhausted: Done")
        break
    task = doc["task"]
    applied = next(answers)
    print(f"task {task['task_id']}: payload {task['payload']['coords']} -> attribute_applied={applied}")
    post("/answers", {"task_id": task["task_id"], "question": "attribute_applied",
                      "answer": applied, "annotator": "demo-annotator"})
    post("/answers", {"task_id": task["task_id"], "question": "bird_faithful",
                      "answer": "yes", "annotator": "demo-annotator"})

progress = get("/progress")
print(f"progress: {json.dumps(progress['attributes'], indent=2)}")
server.shutdown()

report = aggregate_human_validation(queue.records, manifest_sample_index(manifest, groups))
for attr, v in report.per_attribute.items():
    print(f"{attr}: yes_rate={v.yes_rate:.3f} mean_score={v.mean_score:.3f} retained={v.retained}")
