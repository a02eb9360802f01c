"""Operator entry point: generate -> filter -> validate -> evaluate -> report.

Stages communicate only through files so each is resumable and inspectable;
outputs are written atomically and embed the config hash, and `evaluate`
refuses a manifest produced under a different config.  Exit codes: 0 ok,
1 usage (missing inputs, bad flags), 2 data (integrity/validation errors).
``TDG_LOG`` controls log verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import rng
from .annotation import TaskQueue, serve
from .errors import (
    AnnotationValidationError,
    CoverageError,
    IntegrityError,
    ParameterError,
)
from .evaluation import (
    ConceptPrediction,
    EvalReport,
    MetricCount,
    manifest_chance_targets,
    memorizer_predictions,
    oracle_predictions,
    random_chance_baseline,
    render_binary_table,
    render_multiclass_table,
    score_binary_concepts,
)
from .fileio import atomic_write_text, canonical_json, config_digest
from .guidance import TiedSamplerConfig, TieSchedule, tied_sample
from .mixture import Condition, GaussianMixture, world_from_dict
from .pipeline import (
    AttributeGroup,
    GeneratedSample,
    AnnotationRecord,
    GeometricOracle,
    PairingSpec,
    Provenance,
    ScriptedOracle,
    aggregate_human_validation,
    apply_oracle,
    build_prompts,
    emit_manifest,
    load_attribute_groups,
    manifest_sample_index,
    payload_reference,
    read_manifest,
    sample_identifier,
    vqa_filter_pairing,
    write_manifest,
)
from .schedule import schedule_from_dict
from .worlds import make_composition_world

log = logging.getLogger("tdg")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


def parse_seeds(spec) -> list[int]:
    """Seed list from a JSON list, "a..b" range, or comma list."""
    if isinstance(spec, list):
        return [int(s) for s in spec]
    text = str(spec).strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(part) for part in text.split(",") if part.strip()]


class RunConfig:
    """Loaded run configuration; paths resolve relative to the config file."""

    def __init__(self, doc: dict, base: Path):
        self.doc = doc
        self.base = base
        self.hash = config_digest(doc)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise UsageError(f"config file {path} does not exist")
        with open(path, "r", encoding="utf-8") as fh:
            return cls(json.load(fh), path.parent)

    def path(self, value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else self.base / p

    def input_path(self, value: str, what: str) -> Path:
        p = self.path(value)
        if not p.exists():
            raise UsageError(f"{what} {p} does not exist")
        return p

    def section(self, name: str) -> dict:
        return dict(self.doc.get(name, {}))

    def world(self) -> tuple[GaussianMixture, dict[str, Condition]]:
        spec = self.doc.get("world")
        if spec is None:
            raise UsageError("config lacks a 'world' entry")
        if isinstance(spec, dict) and spec.get("kind") == "composition":
            params = {k: v for k, v in spec.items() if k != "kind"}
            if "bias" in params:
                params["bias"] = tuple(params["bias"])
            cw = make_composition_world(**params)
            return cw.world, cw.conditions()
        with open(self.input_path(spec, "world file"), "r", encoding="utf-8") as fh:
            return world_from_dict(json.load(fh))

    def schedule(self):
        spec = self.doc.get("schedule")
        if spec is None:
            raise UsageError("config lacks a 'schedule' entry")
        return schedule_from_dict(spec)

    def sampler(self, seed: int) -> TiedSamplerConfig:
        spec = self.section("sampler")
        tie = spec.get("tie", {})
        return TiedSamplerConfig(
            guidance_scale=float(spec.get("guidance_scale", 3.5)),
            steps=self.schedule().T,
            tie=TieSchedule(
                t_min=float(tie.get("t_min", 0.2)),
                t_max=float(tie.get("t_max", 0.6)),
                k=float(tie.get("k", 10.0)),
            ),
            seed=seed,
        )

    def pairings(self, groups: dict[str, AttributeGroup]) -> list[PairingSpec]:
        spec = self.doc.get("pairings")
        if spec is None:
            raise UsageError("config lacks a 'pairings' entry")
        if isinstance(spec, str):
            with open(self.input_path(spec, "pairings file"), "r", encoding="utf-8") as fh:
                spec = json.load(fh)
        out = []
        for doc in spec:
            group = groups.get(doc["group"])
            if group is None:
                raise UsageError(f"pairing references unknown attribute group {doc['group']!r}")
            out.append(
                PairingSpec(
                    reference_class=doc["reference_class"],
                    group=group,
                    s_plus=doc["s_plus"],
                    s_minus=doc["s_minus"],
                    guidance_class=doc["guidance_class"],
                    category=doc["category"],
                )
            )
        return out


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------


def _generate_one(pairing, seeds, world, conditions, cfg_builder, sched, trace_sink):
    cond_r = conditions["reference_with_target_attribute"]
    cond_g = conditions["guide_with_target_attribute"]
    prompt_r, prompt_g = build_prompts(pairing)
    key = rng.pairing_key(pairing.pairing_id)
    rows = []
    for seed in seeds:
        cfg = cfg_builder(seed)
        diags = [] if trace_sink is not None else None
        x_ref, _ = tied_sample(
            world,
            cond_r,
            cond_g,
            cfg,
            sched,
            pairing=key,
            on_step=diags.append if diags is not None else None,
        )
        payload = tuple(float(v) for v in x_ref)
        rows.append(
            {
                "kind": "sample",
                "sample_id": sample_identifier(pairing.pairing_id, seed),
                "pairing_id": pairing.pairing_id,
                "seed": seed,
                "payload": list(payload),
                "payload_ref": payload_reference(payload),
                "prompt_R": prompt_r,
                "prompt_G": prompt_g,
            }
        )
        if diags is not None:
            for d in diags:
                trace_sink.append(
                    {
                        "pairing_id": pairing.pairing_id,
                        "seed": seed,
                        "step": d.step,
                        "tau": d.tau,
                        "eta": d.eta,
                        "averaged_fraction": d.averaged_fraction,
                        "trajectory_l2": d.trajectory_l2,
                    }
                )
    return rows


def stage_generate(config: RunConfig, args) -> int:
    section = config.section("generate")
    seeds = parse_seeds(args.seeds if args.seeds else section.get("seeds", []))
    if not seeds:
        raise UsageError("no seeds given (config generate.seeds or --seeds)")
    out = config.path(args.out or section.get("out", "samples.jsonl"))
    world, conditions = config.world()
    for name in ("reference_with_target_attribute", "guide_with_target_attribute"):
        if name not in conditions:
            raise UsageError(f"world must define the condition {name!r}")
    sched = config.schedule()
    groups = load_attribute_groups()
    pairings = config.pairings(groups)
    trace_path = section.get("trace")
    trace_sink = [] if trace_path else None

    jobs = args.jobs or int(config.doc.get("jobs", 1))
    results: dict[str, list[dict]] = {}
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = {
                pool.submit(
                    _generate_one, p, seeds, world, conditions,
                    lambda s: config.sampler(s), sched, None,
                ): p.pairing_id
                for p in pairings
            }
            for fut, pid in futures.items():
                results[pid] = fut.result()
        if trace_sink is not None:
            log.warning("step traces are only collected with --jobs 1; skipping trace output")
            trace_sink = None
    else:
        for pairing in pairings:
            results[pairing.pairing_id] = _generate_one(
                pairing, seeds, world, conditions, lambda s: config.sampler(s), sched, trace_sink
            )

    lines = [canonical_json({"kind": "samples", "config_hash": config.hash, "seeds": seeds})]
    for pid in sorted(results):
        for row in sorted(results[pid], key=lambda r: r["seed"]):
            lines.append(canonical_json(row))
    atomic_write_text(out, "\n".join(lines) + "\n")
    if trace_sink is not None:
        trace_lines = [canonical_json(row) for row in trace_sink]
        atomic_write_text(config.path(trace_path), "\n".join(trace_lines) + "\n")
    log.info("generate: %d samples -> %s", sum(len(v) for v in results.values()), out)
    print(f"generate: wrote {sum(len(v) for v in results.values())} samples to {out}")
    return EXIT_OK


def _read_samples(path: Path) -> dict[str, list[GeneratedSample]]:
    by_pairing: dict[str, list[GeneratedSample]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            if doc.get("kind") != "sample":
                continue
            sample = GeneratedSample(
                sample_id=doc["sample_id"],
                pairing_id=doc["pairing_id"],
                seed=int(doc["seed"]),
                payload=tuple(doc["payload"]),
                payload_ref=doc["payload_ref"],
            )
            by_pairing.setdefault(sample.pairing_id, []).append(sample)
    return by_pairing


def stage_filter(config: RunConfig, args) -> int:
    section = config.section("filter")
    samples_path = config.input_path(
        config.section("generate").get("out", "samples.jsonl"), "samples file"
    )
    out = config.path(args.out or section.get("out", "manifest.jsonl"))
    groups = load_attribute_groups()
    pairings = {p.pairing_id: p for p in config.pairings(groups)}
    by_pairing = _read_samples(samples_path)

    oracle_spec = section.get("oracle", "geometric")
    if oracle_spec == "geometric":
        oracle = GeometricOracle()
    elif isinstance(oracle_spec, dict) and "scripted" in oracle_spec:
        with open(config.input_path(oracle_spec["scripted"], "scripted answers"), "r", encoding="utf-8") as fh:
            answers = {k: (v[0], float(v[1])) for k, v in json.load(fh).items()}
        oracle = ScriptedOracle(answers)
    else:
        raise UsageError(f"unknown oracle spec {oracle_spec!r}")

    outcomes = []
    retain_count = section.get("retain_count")
    generated_count = section.get("generated_count")
    for pid in sorted(by_pairing):
        pairing = pairings.get(pid)
        if pairing is None:
            raise IntegrityError(f"samples reference unknown pairing {pid!r}")
        judged = apply_oracle(by_pairing[pid], pairing, oracle)
        outcomes.append(
            (
                pairing,
                vqa_filter_pairing(
                    judged,
                    pairing,
                    retain_count=retain_count,
                    generated_count=generated_count or len(judged),
                ),
            )
        )
    if not outcomes:
        raise IntegrityError("no samples to filter")
    manifest = emit_manifest(
        outcomes,
        Provenance(
            config_hash=config.hash,
            seeds=tuple(parse_seeds(config.section("generate").get("seeds", []))),
            retain_count=outcomes[0][1].retain_count,
        ),
    )
    write_manifest(manifest, out)
    kept = len(manifest.pairing_ids())
    print(
        f"filter: retained {len(manifest.records)} samples across {kept} pairings, "
        f"eliminated {list(manifest.provenance.eliminated)} -> {out}"
    )
    return EXIT_OK


def _read_annotation_log(path: Path) -> list[AnnotationRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(AnnotationRecord.from_dict(json.loads(line)))
    return records


def stage_validate(config: RunConfig, args) -> int:
    section = config.section("validate")
    manifest = read_manifest(
        config.input_path(config.section("filter").get("out", "manifest.jsonl"), "manifest")
    )
    log_path = config.input_path(
        section.get("annotations", config.section("annotation").get("log", "annotations.jsonl")),
        "annotation log",
    )
    out = config.path(args.out or section.get("out", "validation.json"))
    groups = load_attribute_groups()
    records = _read_annotation_log(log_path)
    report = aggregate_human_validation(
        records,
        manifest_sample_index(manifest, groups),
        per_attribute_sample=int(section.get("per_attribute_sample", 40)),
    )
    doc = {
        "config_hash": config.hash,
        "per_attribute": {
            attr: {
                "yes_rate": v.yes_rate,
                "mean_score": v.mean_score,
                "count": v.count,
                "expected": v.expected,
                "retained": v.retained,
            }
            for attr, v in sorted(report.per_attribute.items())
        },
        "retained_attributes": report.retained_attributes,
        "pairing_flags": {
            pid: {
                "low_attribute_accuracy": f.low_attribute_accuracy,
                "excessive_modification": f.excessive_modification,
                "degenerate_substitution": f.degenerate_substitution,
                "flagged": f.flagged,
            }
            for pid, f in sorted(report.pairing_flags.items())
        },
    }
    atomic_write_text(out, canonical_json(doc) + "\n")
    print(f"validate: {len(records)} records, retained attributes {report.retained_attributes} -> {out}")
    return EXIT_OK


def _load_prediction_file(path: Path) -> dict[str, ConceptPrediction]:
    preds = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            preds[doc["sample_id"]] = ConceptPrediction(
                sample_id=doc["sample_id"], values=dict(doc["values"])
            )
    return preds


def stage_evaluate(config: RunConfig, args) -> int:
    section = config.section("evaluate")
    manifest_path = config.input_path(
        config.section("filter").get("out", "manifest.jsonl"), "manifest"
    )
    manifest = read_manifest(manifest_path)
    if manifest.provenance.config_hash != config.hash:
        raise IntegrityError(
            f"manifest {manifest_path} was produced under config {manifest.provenance.config_hash}, "
            f"current config is {config.hash}"
        )
    out = config.path(args.out or section.get("out", "report.json"))
    predictor = section.get("predictor", "oracle")
    if predictor == "oracle":
        predictions = oracle_predictions(manifest)
    elif predictor == "memorizer":
        predictions = memorizer_predictions(manifest)
    elif isinstance(predictor, dict) and "file" in predictor:
        predictions = _load_prediction_file(config.input_path(predictor["file"], "predictions"))
        predictor = f"file:{predictor['file']}"
    else:
        raise UsageError(f"unknown predictor spec {predictor!r}")
    groups = load_attribute_groups()
    report = score_binary_concepts(predictions, manifest, label=str(predictor))
    chance = random_chance_baseline(groups, manifest_chance_targets(manifest, groups))
    doc = {
        "config_hash": config.hash,
        "predictor": str(predictor),
        "binary": {
            "label": report.label,
            "s_plus": {"hits": report.s_plus.hits, "total": report.s_plus.total},
            "s_minus": {"hits": report.s_minus.hits, "total": report.s_minus.total},
            "per_group": {
                g: {
                    "s_plus": {"hits": v["s_plus"].hits, "total": v["s_plus"].total},
                    "s_minus": {"hits": v["s_minus"].hits, "total": v["s_minus"].total},
                }
                for g, v in report.per_group.items()
            },
        },
        "chance": {
            "s_plus_pct": chance.s_plus_pct,
            "s_minus_pct": chance.s_minus_pct,
        },
    }
    atomic_write_text(out, canonical_json(doc) + "\n")
    print(
        f"evaluate[{predictor}]: S+ {report.s_plus_acc:.1f} S- {report.s_minus_acc:.1f} "
        f"(chance S+ {chance.s_plus_pct:.1f}) -> {out}"
    )
    return EXIT_OK


def stage_report(config: RunConfig, args) -> int:
    section = config.section("report")
    eval_path = config.input_path(config.section("evaluate").get("out", "report.json"), "evaluation report")
    out = config.path(args.out or section.get("out", "report.txt"))
    with open(eval_path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    binary = doc["binary"]
    computed = EvalReport(
        label=binary["label"],
        s_plus=MetricCount(binary["s_plus"]["hits"], binary["s_plus"]["total"]),
        s_minus=MetricCount(binary["s_minus"]["hits"], binary["s_minus"]["total"]),
    )
    text = "\n".join(
        [
            "Binary concept predictions",
            "==========================",
            render_binary_table([computed]),
            "",
            f"Closed-form chance on this manifest: "
            f"S+ {doc['chance']['s_plus_pct']:.1f}, S- {doc['chance']['s_minus_pct']:.1f}",
            "",
            "Group multiclass scorers",
            "========================",
            render_multiclass_table(),
            "",
            f"config {doc['config_hash']}",
            "",
        ]
    )
    atomic_write_text(out, text)
    print(f"report: wrote {out}")
    return EXIT_OK


def stage_serve_annotation(config: RunConfig, args) -> int:
    section = config.section("annotation")
    manifest = read_manifest(
        config.input_path(config.section("filter").get("out", "manifest.jsonl"), "manifest")
    )
    annotators = section.get("annotators", [])
    if not annotators:
        raise UsageError("config annotation.annotators must list at least one annotator id")
    log_path = config.path(section.get("log", "annotations.jsonl"))
    queue = TaskQueue(
        manifest,
        annotators=annotators,
        groups=load_attribute_groups(),
        quota=int(section.get("quota", 40)),
        form=section.get("form", "binary"),
        seed=int(config.doc.get("seed", 0)),
        overlap=int(section.get("overlap", 1)),
        log_path=log_path,
    )
    ui_dir = section.get("ui")
    if args.ui:
        ui_dir = args.ui
    port = args.port if args.port is not None else int(section.get("port", 0))
    server = serve(queue, port=port, ui_dir=config.path(ui_dir) if ui_dir else None)
    host, bound_port = server.server_address[:2]
    print(f"annotation service listening on http://{host}:{bound_port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

STAGES = {
    "generate": stage_generate,
    "filter": stage_filter,
    "validate": stage_validate,
    "evaluate": stage_evaluate,
    "report": stage_report,
    "serve-annotation": stage_serve_annotation,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tdg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="run configuration JSON")
        p.add_argument("--out", help="override the stage's output path")
        if name == "generate":
            p.add_argument("--seeds", help='seed list, e.g. "0..499" or "1,2,5"')
            p.add_argument("--jobs", type=int, help="parallel workers across pairings")
        if name == "serve-annotation":
            p.add_argument("--port", type=int, help="bind port (0 = ephemeral)")
            p.add_argument("--ui", help="directory of static UI files to serve")
    return parser


def dispatch(command: str, config: RunConfig, args) -> int:
    return STAGES[command](config, args)


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("TDG_LOG", "WARNING").upper())
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = RunConfig.load(args.config)
        return dispatch(args.command, config, args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IntegrityError, AnnotationValidationError, CoverageError, ParameterError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
