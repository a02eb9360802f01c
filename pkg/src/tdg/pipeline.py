"""Benchmark construction: prompts, candidate selection, filtering, manifests.

The pipeline turns (reference class, attribute substitution, guidance
class) pairings into a filtered benchmark manifest:

1. build the paired prompts for the reference and guide trajectories,
2. select reference classes the class oracle identifies perfectly and
   attributes the answer oracle detects reliably,
3. generate samples per pairing, query the attribute oracle, keep the
   top slice by answer confidence (or eliminate the pairing),
4. fold human annotations into per-attribute retention decisions and
   per-pairing removal flags,
5. emit a deterministic line-delimited manifest with provenance.

Generative and answer models stay behind oracle interfaces; the shipped
ones replay fixture answers or read the toy world's geometry.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Iterable, Mapping, Sequence

from .errors import (
    AnnotationValidationError,
    IntegrityError,
    ParameterError,
)

__all__ = [
    "AttributeGroup",
    "PairingSpec",
    "GeneratedSample",
    "AnnotationRecord",
    "Manifest",
    "ManifestRecord",
    "Provenance",
    "FilterOutcome",
    "SampleRef",
    "AttributeValidation",
    "PairingFlags",
    "ValidationReport",
    "OracleReading",
    "ScriptedOracle",
    "GeometricOracle",
    "attribute_key",
    "build_prompts",
    "render_vqa_question",
    "select_class_candidates",
    "select_attribute_candidates",
    "vqa_filter_pairing",
    "apply_oracle",
    "aggregate_human_validation",
    "emit_manifest",
    "write_manifest",
    "read_manifest",
    "manifest_sample_index",
    "load_reference_birds",
    "load_substitutions",
    "load_guidance_birds",
    "load_attribute_groups",
    "slugify",
]

CATEGORIES = ("color", "shape", "texture")
BINARY_ANSWERS = ("yes", "somewhat", "no")
ANSWER_SCORES = {"yes": 1.0, "somewhat": 0.5, "no": 0.0}
QUESTIONS = ("attribute_applied", "bird_faithful", "group_choice")

THRESHOLD_SWEEP_LO = 0.60
THRESHOLD_SWEEP_HI = 0.95

# prompt surface forms: body parts are phrased as in the generation
# templates; breast patterns read better as "belly" in a photo prompt
_PATTERN_PART_WORDS = {"breast": "belly"}


@dataclass(frozen=True)
class AttributeGroup:
    """A named family of mutually exclusive attribute options."""

    name: str
    options: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "options", tuple(self.options))
        if not self.options:
            raise ParameterError(f"attribute group {self.name!r} has no options")
        if len(set(self.options)) != len(self.options):
            raise ParameterError(f"attribute group {self.name!r} has duplicate options")


def attribute_key(group: str, option: str) -> str:
    """Canonical identifier for one attribute option within its group."""
    return f"{group}::{option}"


def slugify(text: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", text.lower()).strip("-")


@dataclass(frozen=True)
class PairingSpec:
    """One benchmark pairing: depict `reference_class` with the target option."""

    reference_class: str
    group: AttributeGroup
    s_plus: str
    s_minus: str
    guidance_class: str
    category: str

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ParameterError(f"unknown category {self.category!r}")
        if self.s_plus == self.s_minus:
            raise ParameterError(
                f"substitution must change the attribute, got {self.s_plus!r} twice"
            )
        if self.s_plus not in self.group.options:
            raise ParameterError(
                f"target option {self.s_plus!r} not in group {self.group.name!r}"
            )

    @property
    def pairing_id(self) -> str:
        return f"{slugify(self.reference_class)}__{slugify(self.group.name)}__{slugify(self.s_plus)}"

    @property
    def attribute(self) -> str:
        return attribute_key(self.group.name, self.s_plus)


@dataclass(frozen=True)
class GeneratedSample:
    """One generated sample, optionally carrying its oracle verdict."""

    sample_id: str
    pairing_id: str
    seed: int
    payload: tuple[float, ...]
    payload_ref: str
    oracle_answer: str | None = None
    oracle_confidence: float | None = None
    vqa_prompt: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "payload", tuple(float(v) for v in self.payload))
        if self.oracle_confidence is not None and not (0.0 <= self.oracle_confidence <= 1.0):
            raise ParameterError(
                f"oracle confidence must lie in [0, 1], got {self.oracle_confidence}"
            )


def payload_reference(payload: Sequence[float]) -> str:
    """Self-contained payload reference encoding the coordinates."""
    return "xy:" + ",".join(repr(float(v)) for v in payload)


def sample_identifier(pairing_id: str, seed: int) -> str:
    return f"{pairing_id}/{seed}"


@dataclass(frozen=True)
class AnnotationRecord:
    """One human answer, as appended to the annotation log."""

    sample_id: str
    question: str
    answer: str
    annotator: str
    timestamp: str

    def __post_init__(self):
        if self.question not in QUESTIONS:
            raise AnnotationValidationError(f"unknown question {self.question!r}")

    def to_json(self) -> str:
        return json.dumps(
            {
                "sample_id": self.sample_id,
                "question": self.question,
                "answer": self.answer,
                "annotator": self.annotator,
                "timestamp": self.timestamp,
            },
            sort_keys=True,
            separators=(",", ":"),
        )

    @classmethod
    def from_dict(cls, doc: Mapping) -> "AnnotationRecord":
        return cls(
            sample_id=doc["sample_id"],
            question=doc["question"],
            answer=doc["answer"],
            annotator=doc["annotator"],
            timestamp=doc["timestamp"],
        )


# ---------------------------------------------------------------------------
# prompts
# ---------------------------------------------------------------------------


def _color_phrase(group_name: str, option: str) -> str:
    part = group_name.removesuffix(" color").strip()
    if part == "crown":
        return f"{option} colored feathers on the crown of its head"
    return f"a {option} colored {part}"


def _texture_phrase(group_name: str, option: str) -> str:
    part = group_name.removesuffix(" pattern").strip()
    part = _PATTERN_PART_WORDS.get(part, part)
    return f"a {option} {part}"


def build_prompts(pairing: PairingSpec) -> tuple[str, str]:
    """Instantiate the category template as (reference prompt, guide prompt)."""
    r = pairing.reference_class
    g = pairing.guidance_class
    if pairing.category == "color":
        phrase = _color_phrase(pairing.group.name, pairing.s_plus)
        return (
            f"A photo of a {r} with {phrase}",
            f"A photo of a bird with {phrase}",
        )
    if pairing.category == "texture":
        phrase = _texture_phrase(pairing.group.name, pairing.s_plus)
        return (
            f"A photo of a {r} with {phrase} like a {g}",
            f"A photo of a {g} with {phrase}",
        )
    if pairing.category == "shape":
        return (
            f"A photo of a {r} with the body of a {r} and a beak like a {g}",
            f"A photo of a {g}",
        )
    raise ParameterError(f"unknown category {pairing.category!r}")


def render_vqa_question(group: AttributeGroup) -> str:
    """Multiple-choice question shown to the attribute oracle, kept for audit."""

    def letter(i: int) -> str:
        return chr(ord("A") + i)

    lines = [f"What type of {group.name} does this bird have?", "Please pick between"]
    lines += [f"{letter(i)}) {opt}" for i, opt in enumerate(group.options)]
    lines.append(f"{letter(len(group.options))}) Other")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# candidate selection
# ---------------------------------------------------------------------------


def select_class_candidates(per_class_results: Mapping[str, tuple[int, int]]) -> list[str]:
    """Classes the class oracle identified on every trial."""
    retained = []
    for name, (hits, trials) in per_class_results.items():
        if trials < 1:
            raise ParameterError(f"class {name!r} has no trials")
        if not 0 <= hits <= trials:
            raise ParameterError(f"class {name!r} has {hits}/{trials} hits")
        if hits == trials:
            retained.append(name)
    return retained


@dataclass(frozen=True)
class ThresholdChoice:
    threshold: float
    accuracy: float
    retained: bool


def select_attribute_candidates(
    per_attribute_curves: Mapping[str, Sequence[tuple[float, float]]],
    min_accuracy: float = 0.90,
) -> dict[str, ThresholdChoice]:
    """Best confidence threshold per attribute; retained at >= min_accuracy.

    Ties between thresholds break toward the lower threshold.
    """
    out: dict[str, ThresholdChoice] = {}
    for attr, curve in per_attribute_curves.items():
        if not curve:
            raise ParameterError(f"attribute {attr!r} has an empty threshold curve")
        for thr, _ in curve:
            if not (THRESHOLD_SWEEP_LO - 1e-9 <= thr <= THRESHOLD_SWEEP_HI + 1e-9):
                raise ParameterError(
                    f"threshold {thr} for {attr!r} outside sweep range "
                    f"[{THRESHOLD_SWEEP_LO}, {THRESHOLD_SWEEP_HI}]"
                )
        best_thr, best_acc = min(curve, key=lambda pair: (-pair[1], pair[0]))
        out[attr] = ThresholdChoice(
            threshold=best_thr, accuracy=best_acc, retained=best_acc >= min_accuracy
        )
    return out


# ---------------------------------------------------------------------------
# oracles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OracleReading:
    answer: str
    confidence: float
    prompt: str


class ScriptedOracle:
    """Replays fixture answers keyed by sample id."""

    def __init__(self, answers: Mapping[str, tuple[str, float]]):
        self.answers = dict(answers)

    def query(self, sample: GeneratedSample, pairing: PairingSpec) -> OracleReading:
        if sample.sample_id not in self.answers:
            raise IntegrityError(f"no scripted answer for sample {sample.sample_id!r}")
        answer, confidence = self.answers[sample.sample_id]
        return OracleReading(
            answer=answer,
            confidence=float(confidence),
            prompt=render_vqa_question(pairing.group),
        )


class GeometricOracle:
    """Region-membership oracle for the 2-D toy world.

    The attribute axis sign decides between the target and original option;
    the margin maps to confidence through a logistic curve.
    """

    def __init__(self, attribute_axis: int = 1, steepness: float = 2.0):
        self.attribute_axis = attribute_axis
        self.steepness = steepness

    def query(self, sample: GeneratedSample, pairing: PairingSpec) -> OracleReading:
        coord = sample.payload[self.attribute_axis]
        answer = pairing.s_plus if coord > 0.0 else pairing.s_minus
        confidence = 1.0 / (1.0 + math.exp(-self.steepness * abs(coord)))
        return OracleReading(
            answer=answer,
            confidence=confidence,
            prompt=render_vqa_question(pairing.group),
        )


def apply_oracle(samples: Iterable[GeneratedSample], pairing: PairingSpec, oracle) -> list[GeneratedSample]:
    """Attach oracle verdicts to samples."""
    out = []
    for sample in samples:
        reading = oracle.query(sample, pairing)
        out.append(
            replace(
                sample,
                oracle_answer=reading.answer,
                oracle_confidence=reading.confidence,
                vqa_prompt=reading.prompt,
            )
        )
    return out


# ---------------------------------------------------------------------------
# filtering
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FilterOutcome:
    pairing_id: str
    eliminated: bool
    retained: tuple[GeneratedSample, ...]
    generated_count: int
    correct_count: int
    retain_count: int


def vqa_filter_pairing(
    samples: Sequence[GeneratedSample],
    pairing: PairingSpec,
    retain_count: int | None = None,
    generated_count: int | None = None,
) -> FilterOutcome:
    """Keep the most confident correctly-answered samples, or eliminate.

    Samples whose oracle answer differs from the target option are
    discarded; the survivors are ranked by confidence (ties broken by
    sample id) and the top ``retain_count`` kept.  Fewer survivors than
    that eliminates the pairing outright -- never a partial retention.
    """
    ids = [s.sample_id for s in samples]
    if len(set(ids)) != len(ids):
        raise IntegrityError(f"duplicate sample ids for pairing {pairing.pairing_id!r}")
    if generated_count is None:
        generated_count = len(samples)
    if retain_count is None:
        retain_count = math.ceil(0.10 * generated_count)
    if retain_count < 1:
        raise ParameterError(f"retain count must be >= 1, got {retain_count}")
    for s in samples:
        if s.oracle_answer is None or s.oracle_confidence is None:
            raise IntegrityError(f"sample {s.sample_id!r} has no oracle verdict")
    survivors = [s for s in samples if s.oracle_answer == pairing.s_plus]
    survivors.sort(key=lambda s: (-s.oracle_confidence, s.sample_id))
    if len(survivors) < retain_count:
        return FilterOutcome(
            pairing_id=pairing.pairing_id,
            eliminated=True,
            retained=(),
            generated_count=generated_count,
            correct_count=len(survivors),
            retain_count=retain_count,
        )
    return FilterOutcome(
        pairing_id=pairing.pairing_id,
        eliminated=False,
        retained=tuple(survivors[:retain_count]),
        generated_count=generated_count,
        correct_count=len(survivors),
        retain_count=retain_count,
    )


# ---------------------------------------------------------------------------
# human validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SampleRef:
    """What the aggregator needs to know about one manifest sample."""

    pairing_id: str
    attribute: str
    s_plus: str
    s_minus: str
    group_options: tuple[str, ...] = ()


@dataclass(frozen=True)
class AttributeValidation:
    yes_rate: float
    mean_score: float
    count: int
    expected: int
    retained: bool


@dataclass(frozen=True)
class PairingFlags:
    low_attribute_accuracy: bool = False
    excessive_modification: bool = False
    degenerate_substitution: bool = False

    @property
    def flagged(self) -> bool:
        return self.low_attribute_accuracy or self.excessive_modification or self.degenerate_substitution


@dataclass(frozen=True)
class ValidationReport:
    per_attribute: dict[str, AttributeValidation]
    pairing_flags: dict[str, PairingFlags]

    @property
    def retained_attributes(self) -> list[str]:
        return sorted(a for a, v in self.per_attribute.items() if v.retained)


def aggregate_human_validation(
    records: Sequence[AnnotationRecord],
    sample_index: Mapping[str, SampleRef],
    per_attribute_sample: int = 40,
    attribute_cutoff: float = 0.90,
    faithful_cutoff: float = 0.5,
) -> ValidationReport:
    """Fold annotation records into retention decisions and removal flags.

    Per attribute: yes_rate is the fraction of "attribute applied" answers
    that are yes; mean_score maps yes/somewhat/no to 1/0.5/0.  The
    attribute is retained at yes_rate >= attribute_cutoff.  Per pairing:
    low attribute accuracy and excessive modification (weak "faithful to
    the reference bird" answers) come purely from annotations; a pairing
    whose substitution does not change the attribute is flagged degenerate.
    """
    by_attr_applied: dict[str, list[float]] = {}
    by_pairing_applied: dict[str, list[float]] = {}
    by_pairing_faithful: dict[str, list[float]] = {}
    for rec in records:
        ref = sample_index.get(rec.sample_id)
        if ref is None:
            raise AnnotationValidationError(f"record references unknown sample {rec.sample_id!r}")
        if rec.question in ("attribute_applied", "bird_faithful"):
            if rec.answer not in BINARY_ANSWERS:
                raise AnnotationValidationError(
                    f"answer {rec.answer!r} not in {BINARY_ANSWERS} for {rec.question}"
                )
            score = ANSWER_SCORES[rec.answer]
            if rec.question == "attribute_applied":
                by_attr_applied.setdefault(ref.attribute, []).append(score)
                by_pairing_applied.setdefault(ref.pairing_id, []).append(score)
            else:
                by_pairing_faithful.setdefault(ref.pairing_id, []).append(score)
        else:  # group_choice
            legal = set(ref.group_options) | {"Other"}
            if ref.group_options and rec.answer not in legal:
                raise AnnotationValidationError(
                    f"answer {rec.answer!r} not an option of the sample's group"
                )

    per_attribute = {}
    for attr, scores in by_attr_applied.items():
        yes = sum(1 for s in scores if s == 1.0)
        yes_rate = yes / len(scores)
        per_attribute[attr] = AttributeValidation(
            yes_rate=yes_rate,
            mean_score=sum(scores) / len(scores),
            count=len(scores),
            expected=per_attribute_sample,
            retained=yes_rate >= attribute_cutoff,
        )

    pairing_flags = {}
    pairing_ids = {ref.pairing_id for ref in sample_index.values()}
    for pid in sorted(pairing_ids):
        applied = by_pairing_applied.get(pid, [])
        faithful = by_pairing_faithful.get(pid, [])
        ref = next(r for r in sample_index.values() if r.pairing_id == pid)
        yes_rate = (
            sum(1 for s in applied if s == 1.0) / len(applied) if applied else None
        )
        pairing_flags[pid] = PairingFlags(
            low_attribute_accuracy=yes_rate is not None and yes_rate < attribute_cutoff,
            excessive_modification=bool(faithful)
            and sum(faithful) / len(faithful) < faithful_cutoff,
            degenerate_substitution=ref.s_plus == ref.s_minus,
        )
    return ValidationReport(per_attribute=per_attribute, pairing_flags=pairing_flags)


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ManifestRecord:
    pairing_id: str
    class_R: str
    class_G: str
    group: str
    s_plus: str
    s_minus: str
    category: str
    seed: int
    confidence: float
    payload_ref: str

    @property
    def sample_id(self) -> str:
        return sample_identifier(self.pairing_id, self.seed)

    @property
    def attribute(self) -> str:
        return attribute_key(self.group, self.s_plus)


@dataclass(frozen=True)
class Provenance:
    config_hash: str
    seeds: tuple[int, ...]
    retain_count: int
    filter_stats: dict = field(default_factory=dict)
    eliminated: tuple[str, ...] = ()


@dataclass(frozen=True)
class Manifest:
    records: tuple[ManifestRecord, ...]
    provenance: Provenance

    def pairing_ids(self) -> list[str]:
        seen: dict[str, None] = {}
        for rec in self.records:
            seen.setdefault(rec.pairing_id, None)
        return list(seen)


def emit_manifest(
    outcomes: Sequence[tuple[PairingSpec, FilterOutcome]],
    provenance: Provenance,
) -> Manifest:
    """Assemble retained pairings into a manifest; counts must be exact."""
    records = []
    filter_stats = dict(provenance.filter_stats)
    eliminated = list(provenance.eliminated)
    for pairing, outcome in outcomes:
        filter_stats[pairing.pairing_id] = {
            "generated": outcome.generated_count,
            "correct": outcome.correct_count,
            "retained": len(outcome.retained),
            "eliminated": outcome.eliminated,
        }
        if outcome.eliminated:
            if pairing.pairing_id not in eliminated:
                eliminated.append(pairing.pairing_id)
            continue
        if len(outcome.retained) != outcome.retain_count:
            raise IntegrityError(
                f"pairing {pairing.pairing_id!r} retained {len(outcome.retained)} samples, "
                f"expected exactly {outcome.retain_count}"
            )
        for sample in outcome.retained:
            records.append(
                ManifestRecord(
                    pairing_id=pairing.pairing_id,
                    class_R=pairing.reference_class,
                    class_G=pairing.guidance_class,
                    group=pairing.group.name,
                    s_plus=pairing.s_plus,
                    s_minus=pairing.s_minus,
                    category=pairing.category,
                    seed=sample.seed,
                    confidence=float(sample.oracle_confidence),
                    payload_ref=sample.payload_ref,
                )
            )
    records.sort(key=lambda r: (r.pairing_id, r.seed))
    return Manifest(
        records=tuple(records),
        provenance=replace(
            provenance, filter_stats=filter_stats, eliminated=tuple(sorted(eliminated))
        ),
    )


def _record_to_dict(rec: ManifestRecord) -> dict:
    return {
        "kind": "record",
        "pairing_id": rec.pairing_id,
        "class_R": rec.class_R,
        "class_G": rec.class_G,
        "group": rec.group,
        "s_plus": rec.s_plus,
        "s_minus": rec.s_minus,
        "category": rec.category,
        "seed": rec.seed,
        "confidence": rec.confidence,
        "payload_ref": rec.payload_ref,
    }


def manifest_to_lines(manifest: Manifest) -> list[str]:
    header = {
        "kind": "manifest",
        "config_hash": manifest.provenance.config_hash,
        "seeds": list(manifest.provenance.seeds),
        "retain_count": manifest.provenance.retain_count,
        "filter_stats": manifest.provenance.filter_stats,
        "eliminated": list(manifest.provenance.eliminated),
    }
    lines = [json.dumps(header, sort_keys=True, separators=(",", ":"))]
    lines += [
        json.dumps(_record_to_dict(rec), sort_keys=True, separators=(",", ":"))
        for rec in manifest.records
    ]
    return lines


def write_manifest(manifest: Manifest, path) -> None:
    from .fileio import atomic_write_text

    atomic_write_text(path, "\n".join(manifest_to_lines(manifest)) + "\n")


def read_manifest(path) -> Manifest:
    records = []
    header = None
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            if doc.get("kind") == "manifest":
                header = doc
            elif doc.get("kind") == "record":
                records.append(
                    ManifestRecord(
                        pairing_id=doc["pairing_id"],
                        class_R=doc["class_R"],
                        class_G=doc["class_G"],
                        group=doc["group"],
                        s_plus=doc["s_plus"],
                        s_minus=doc["s_minus"],
                        category=doc["category"],
                        seed=int(doc["seed"]),
                        confidence=float(doc["confidence"]),
                        payload_ref=doc["payload_ref"],
                    )
                )
            else:
                raise IntegrityError(f"unknown manifest line kind {doc.get('kind')!r}")
    if header is None:
        raise IntegrityError(f"manifest {path} has no header line")
    provenance = Provenance(
        config_hash=header["config_hash"],
        seeds=tuple(header["seeds"]),
        retain_count=int(header["retain_count"]),
        filter_stats=header.get("filter_stats", {}),
        eliminated=tuple(header.get("eliminated", ())),
    )
    return Manifest(records=tuple(records), provenance=provenance)


def manifest_sample_index(manifest: Manifest, groups: Mapping[str, AttributeGroup] | None = None) -> dict[str, SampleRef]:
    """Sample-id lookup used by validation and the annotation service."""
    index = {}
    for rec in manifest.records:
        options = tuple(groups[rec.group].options) if groups and rec.group in groups else ()
        index[rec.sample_id] = SampleRef(
            pairing_id=rec.pairing_id,
            attribute=rec.attribute,
            s_plus=rec.s_plus,
            s_minus=rec.s_minus,
            group_options=options,
        )
    return index


# ---------------------------------------------------------------------------
# fixtures
# ---------------------------------------------------------------------------


def _load_data(name: str):
    with resources.files("tdg.data").joinpath(name).open("r", encoding="utf-8") as fh:
        return json.load(fh)


def load_reference_birds() -> list[str]:
    """The retained reference classes (class-oracle accuracy 100%)."""
    return list(_load_data("reference_birds.json"))


@dataclass(frozen=True)
class Substitution:
    label: str
    group: str
    option: str
    category: str


def load_substitutions() -> list[Substitution]:
    return [Substitution(**doc) for doc in _load_data("substitutions.json")]


def load_guidance_birds() -> dict[str, str]:
    """Guide class per pattern/shape substitution label; colors use 'bird'."""
    return dict(_load_data("guidance_birds.json"))


def load_attribute_groups() -> dict[str, AttributeGroup]:
    return {
        name: AttributeGroup(name=name, options=tuple(options))
        for name, options in _load_data("attribute_groups.json").items()
    }
