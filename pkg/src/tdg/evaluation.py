"""Concept-prediction evaluation: substituted/removed attribute accuracy.

Two protocols:

- binary: a predictor makes per-attribute yes/no decisions.  The target
  score is the rate at which the substituted option is predicted present;
  the removal score is the rate at which the original option is predicted
  absent (100 means the predictor never claims the removed attribute).
  Training-set accuracy over a labeled holdout is reported alongside,
  restricted to the benchmark's attributes (T_A) or over all attributes (T).

- group multiclass: a scorer ranks every option of the target's attribute
  group plus "none"; the argmax is the single predicted option.  The target
  score is the rate the argmax hits the substituted option, the removal
  score the rate it avoids the original one.

Random-chance baselines use the closed forms 1/(n+1) for a present target
and 1 - 1/(n+1) for an absent one, where n is the group's option count and
the +1 accounts for "none".  Published results ship as fixture rows for
report rendering and are never recomputed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import CoverageError, IntegrityError, ParameterError, ScorerError
from .pipeline import AttributeGroup, Manifest, ManifestRecord, _load_data, attribute_key

__all__ = [
    "ConceptPrediction",
    "LabeledExample",
    "MetricCount",
    "EvalReport",
    "ChanceBaseline",
    "AgreementInput",
    "AgreementReport",
    "ImageLabels",
    "score_binary_concepts",
    "score_group_multiclass",
    "random_chance_baseline",
    "manifest_chance_targets",
    "cub_agreement",
    "oracle_predictions",
    "memorizer_predictions",
    "flip_predictions",
    "load_reference_tables",
    "render_binary_table",
    "render_multiclass_table",
    "agreement_chart_lines",
]

NONE_LABEL = "none"


@dataclass(frozen=True)
class ConceptPrediction:
    """Per-attribute decisions (bool) or scores (float, thresholded later)."""

    sample_id: str
    values: Mapping[str, bool | float]

    def decision(self, key: str, threshold: float = 0.5) -> bool:
        if key not in self.values:
            raise CoverageError(f"prediction {self.sample_id!r} lacks attribute {key!r}")
        v = self.values[key]
        if isinstance(v, bool):
            return v
        return float(v) >= threshold


@dataclass(frozen=True)
class LabeledExample:
    """A holdout prediction with its ground-truth attribute labels."""

    prediction: ConceptPrediction
    labels: Mapping[str, bool]


@dataclass(frozen=True)
class MetricCount:
    """Exact hit counts; the percentage is derived, never stored rounded."""

    hits: int
    total: int

    @property
    def pct(self) -> float:
        if self.total == 0:
            raise ParameterError("metric has no samples")
        return 100.0 * self.hits / self.total


@dataclass(frozen=True)
class ChanceBaseline:
    s_plus_pct: float | None
    s_minus_pct: float | None
    per_group: dict = field(default_factory=dict)


@dataclass(frozen=True)
class EvalReport:
    """Scores for one predictor, with per-group breakdown and baselines."""

    label: str
    s_plus: MetricCount
    s_minus: MetricCount
    t_a: MetricCount | None = None
    t: MetricCount | None = None
    per_group: dict = field(default_factory=dict)
    chance: ChanceBaseline | None = None

    @property
    def s_plus_acc(self) -> float:
        return self.s_plus.pct

    @property
    def s_minus_acc(self) -> float:
        return self.s_minus.pct

    @property
    def t_a_acc(self) -> float | None:
        return None if self.t_a is None else self.t_a.pct

    @property
    def t_acc(self) -> float | None:
        return None if self.t is None else self.t.pct


def _index_predictions(predictions) -> dict[str, ConceptPrediction]:
    if isinstance(predictions, Mapping):
        return dict(predictions)
    out: dict[str, ConceptPrediction] = {}
    for pred in predictions:
        if pred.sample_id in out:
            raise IntegrityError(f"duplicate prediction for sample {pred.sample_id!r}")
        out[pred.sample_id] = pred
    return out


def score_binary_concepts(
    predictions: Mapping[str, ConceptPrediction] | Iterable[ConceptPrediction],
    manifest: Manifest,
    test_set: Sequence[LabeledExample] | None = None,
    threshold: float = 0.5,
    label: str = "computed",
) -> EvalReport:
    """Score binary concept predictions over a manifest.

    Every manifest sample must have a prediction covering both its
    substituted and original option, or a coverage error is raised.
    """
    preds = _index_predictions(predictions)
    s_plus_hits = s_minus_hits = 0
    per_group: dict[str, dict[str, list[int]]] = {}
    for rec in manifest.records:
        pred = preds.get(rec.sample_id)
        if pred is None:
            raise CoverageError(f"no prediction for manifest sample {rec.sample_id!r}")
        plus = pred.decision(attribute_key(rec.group, rec.s_plus), threshold)
        minus_absent = not pred.decision(attribute_key(rec.group, rec.s_minus), threshold)
        s_plus_hits += plus
        s_minus_hits += minus_absent
        g = per_group.setdefault(rec.group, {"s_plus": [0, 0], "s_minus": [0, 0]})
        g["s_plus"][0] += plus
        g["s_plus"][1] += 1
        g["s_minus"][0] += minus_absent
        g["s_minus"][1] += 1
    n = len(manifest.records)

    t_a = t = None
    if test_set is not None:
        sub_keys = {attribute_key(r.group, r.s_plus) for r in manifest.records}
        ta_hits = ta_total = t_hits = t_total = 0
        for ex in test_set:
            for key, truth in ex.labels.items():
                correct = ex.prediction.decision(key, threshold) == truth
                t_hits += correct
                t_total += 1
                if key in sub_keys:
                    ta_hits += correct
                    ta_total += 1
        t_a = MetricCount(ta_hits, ta_total)
        t = MetricCount(t_hits, t_total)

    return EvalReport(
        label=label,
        s_plus=MetricCount(s_plus_hits, n),
        s_minus=MetricCount(s_minus_hits, n),
        t_a=t_a,
        t=t,
        per_group={
            g: {
                "s_plus": MetricCount(*v["s_plus"]),
                "s_minus": MetricCount(*v["s_minus"]),
            }
            for g, v in sorted(per_group.items())
        },
    )


def score_group_multiclass(
    scorer: Callable[[ManifestRecord, str], float],
    manifest: Manifest,
    groups: Mapping[str, AttributeGroup],
    label: str = "computed",
) -> EvalReport:
    """Argmax a scorer over each sample's group options plus "none".

    ``groups`` selects the candidate vocabulary: pass the full attribute
    vocabulary (``load_attribute_groups()``) by default, or a mapping with
    restricted option lists to evaluate against a trained model's subset.
    """
    s_plus_hits = 0
    s_minus_hits = s_minus_total = 0
    per_group: dict[str, dict[str, list[int]]] = {}
    for rec in manifest.records:
        group = groups.get(rec.group)
        if group is None:
            raise ParameterError(f"no attribute group named {rec.group!r}")
        candidates = list(group.options) + [NONE_LABEL]
        scores = np.array([float(scorer(rec, c)) for c in candidates])
        if not np.all(np.isfinite(scores)):
            raise ScorerError(f"scorer returned non-finite values for {rec.sample_id!r}")
        choice = candidates[int(np.argmax(scores))]
        plus = choice == rec.s_plus
        s_plus_hits += plus
        g = per_group.setdefault(rec.group, {"s_plus": [0, 0], "s_minus": [0, 0]})
        g["s_plus"][0] += plus
        g["s_plus"][1] += 1
        if rec.s_minus in group.options:
            avoided = choice != rec.s_minus
            s_minus_hits += avoided
            s_minus_total += 1
            g["s_minus"][0] += avoided
            g["s_minus"][1] += 1
    return EvalReport(
        label=label,
        s_plus=MetricCount(s_plus_hits, len(manifest.records)),
        s_minus=MetricCount(s_minus_hits, s_minus_total),
        per_group={
            g: {
                "s_plus": MetricCount(*v["s_plus"]),
                "s_minus": MetricCount(*v["s_minus"]),
            }
            for g, v in sorted(per_group.items())
        },
    )


def random_chance_baseline(
    groups: Mapping[str, AttributeGroup],
    targets: Sequence[tuple[str, int]],
) -> ChanceBaseline:
    """Closed-form chance of a uniform single prediction over group + none.

    ``targets`` holds (group name, target label) pairs: label 1 means the
    attribute should be detected (chance 1/(n+1)), label 0 that it should
    be avoided (chance 1 - 1/(n+1)).
    """
    plus_vals: list[float] = []
    minus_vals: list[float] = []
    per_group: dict[str, dict[str, list[float]]] = {}
    for group_name, target in targets:
        group = groups.get(group_name)
        if group is None:
            raise ParameterError(f"no attribute group named {group_name!r}")
        n = len(group.options)
        p_hit = 1.0 / (n + 1)
        value = p_hit if target == 1 else 1.0 - p_hit
        bucket = per_group.setdefault(group_name, {"s_plus": [], "s_minus": []})
        if target == 1:
            plus_vals.append(value)
            bucket["s_plus"].append(value)
        else:
            minus_vals.append(value)
            bucket["s_minus"].append(value)
    return ChanceBaseline(
        s_plus_pct=100.0 * float(np.mean(plus_vals)) if plus_vals else None,
        s_minus_pct=100.0 * float(np.mean(minus_vals)) if minus_vals else None,
        per_group={
            g: {
                kind: (100.0 * float(np.mean(vals)) if vals else None)
                for kind, vals in buckets.items()
            }
            for g, buckets in sorted(per_group.items())
        },
    )


def manifest_chance_targets(manifest: Manifest, groups: Mapping[str, AttributeGroup]) -> list[tuple[str, int]]:
    """Chance-baseline composition for a manifest.

    The substituted option contributes a present target per sample; the
    original option contributes an absent target only when it is a real
    option of the group (mirroring the removal metric's denominator).
    """
    targets: list[tuple[str, int]] = []
    for rec in manifest.records:
        targets.append((rec.group, 1))
        group = groups.get(rec.group)
        if group is not None and rec.s_minus in group.options:
            targets.append((rec.group, 0))
    return targets


# ---------------------------------------------------------------------------
# label agreement
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ImageLabels:
    image_id: str
    class_label: str
    labels: Mapping[str, bool]


@dataclass(frozen=True)
class AgreementInput:
    images: tuple[ImageLabels, ...]

    def __post_init__(self):
        object.__setattr__(self, "images", tuple(self.images))
        for img in self.images:
            if not img.class_label:
                raise ParameterError(f"image {img.image_id!r} has no class label")


@dataclass(frozen=True)
class AgreementReport:
    per_attribute: dict
    overall: float
    tie_break: str = "absent"


def cub_agreement(agreement_input: AgreementInput) -> AgreementReport:
    """Fraction of per-image labels that match their class-level majority.

    Majority ties (even splits) resolve toward absent, recorded in the
    report's ``tie_break`` field.
    """
    by_class: dict[str, list[ImageLabels]] = {}
    for img in agreement_input.images:
        by_class.setdefault(img.class_label, []).append(img)

    majorities: dict[tuple[str, str], bool] = {}
    attrs = sorted({a for img in agreement_input.images for a in img.labels})
    for cls, imgs in by_class.items():
        for attr in attrs:
            votes = [img.labels[attr] for img in imgs if attr in img.labels]
            if votes:
                positive = sum(votes)
                majorities[(cls, attr)] = positive * 2 > len(votes)

    per_attribute = {}
    total_hits = total = 0
    for attr in attrs:
        class_rates = {}
        hits = count = 0
        for cls, imgs in by_class.items():
            if (cls, attr) not in majorities:
                continue
            maj = majorities[(cls, attr)]
            cls_hits = sum(1 for img in imgs if attr in img.labels and img.labels[attr] == maj)
            cls_count = sum(1 for img in imgs if attr in img.labels)
            if cls_count:
                class_rates[cls] = cls_hits / cls_count
            hits += cls_hits
            count += cls_count
        rates = np.array(list(class_rates.values()), dtype=float)
        per_attribute[attr] = {
            "rate": hits / count if count else None,
            "class_rates": class_rates,
            "mean": float(rates.mean()) if rates.size else None,
            "std": float(rates.std()) if rates.size else None,
        }
        total_hits += hits
        total += count
    return AgreementReport(
        per_attribute=per_attribute,
        overall=total_hits / total if total else float("nan"),
    )


def agreement_chart_lines(report: AgreementReport) -> list[str]:
    """Bar-chart data rows: attribute, mean class rate, std across classes."""
    lines = ["attribute\tmean\tstd"]
    for attr, stats in sorted(report.per_attribute.items()):
        mean = stats["mean"] if stats["mean"] is not None else float("nan")
        std = stats["std"] if stats["std"] is not None else float("nan")
        lines.append(f"{attr}\t{mean:.6f}\t{std:.6f}")
    return lines


def write_agreement_chart(path, report: AgreementReport) -> None:
    """Write the per-attribute agreement bar-chart data file."""
    from .fileio import atomic_write_text

    atomic_write_text(path, "\n".join(agreement_chart_lines(report)) + "\n")


# ---------------------------------------------------------------------------
# synthetic predictors
# ---------------------------------------------------------------------------


def oracle_predictions(manifest: Manifest) -> dict[str, ConceptPrediction]:
    """Predictor that matches the manifest's ground truth exactly."""
    return {
        rec.sample_id: ConceptPrediction(
            sample_id=rec.sample_id,
            values={
                attribute_key(rec.group, rec.s_plus): True,
                attribute_key(rec.group, rec.s_minus): False,
            },
        )
        for rec in manifest.records
    }


def memorizer_predictions(manifest: Manifest) -> dict[str, ConceptPrediction]:
    """Predictor that emits the reference class's original concept vector."""
    return {
        rec.sample_id: ConceptPrediction(
            sample_id=rec.sample_id,
            values={
                attribute_key(rec.group, rec.s_plus): False,
                attribute_key(rec.group, rec.s_minus): True,
            },
        )
        for rec in manifest.records
    }


def flip_predictions(predictions: Mapping[str, ConceptPrediction]) -> dict[str, ConceptPrediction]:
    """Invert every boolean decision."""
    out = {}
    for sid, pred in predictions.items():
        flipped = {}
        for key, v in pred.values.items():
            if not isinstance(v, bool):
                raise ParameterError("flip is defined for boolean decisions only")
            flipped[key] = not v
        out[sid] = ConceptPrediction(sample_id=sid, values=flipped)
    return out


# ---------------------------------------------------------------------------
# report rendering
# ---------------------------------------------------------------------------


def load_reference_tables() -> dict:
    return _load_data("reference_rows.json")


def _fmt(value: float | None) -> str:
    return "-" if value is None else f"{value:.1f}"


def _table(headers: list[str], rows: list[list[str]], widths: list[int]) -> str:
    def line(cells):
        return " | ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(cells, widths)))

    sep = "-+-".join("-" * w for w in widths)
    return "\n".join([line(headers), sep] + [line(r) for r in rows])


def render_binary_table(computed: Sequence[EvalReport] = (), include_reference: bool = True) -> str:
    """Aligned text table for the binary protocol; * marks reference rows."""
    rows = []
    if include_reference:
        for doc in load_reference_tables()["binary"]:
            tags = "".join([" [per-img]" if doc["per_image"] else "", " [soft]" if doc["soft"] else ""])
            rows.append([doc["model"] + tags + "*", doc["s_plus"], doc["s_minus"], doc["t_a"], doc["t"]])
    for report in computed:
        rows.append(
            [report.label, _fmt(report.s_plus_acc), _fmt(report.s_minus_acc), _fmt(report.t_a_acc), _fmt(report.t_acc)]
        )
    widths = [max(len(r[i]) for r in rows + [["Model", "S+", "S-", "T_A", "T"]]) for i in range(5)]
    table = _table(["Model", "S+", "S-", "T_A", "T"], rows, widths)
    if include_reference:
        table += "\n(* published reference row, not recomputed)"
    return table


def render_multiclass_table(computed: Sequence[EvalReport] = (), include_reference: bool = True) -> str:
    """Aligned text table for the group-multiclass protocol."""
    rows = []
    if include_reference:
        for doc in load_reference_tables()["multiclass"]:
            rows.append([doc["model"] + "*", doc["s_plus"], doc["s_minus"], doc["t_a"], doc["t"]])
    for report in computed:
        rows.append(
            [report.label, _fmt(report.s_plus_acc), _fmt(report.s_minus_acc), _fmt(report.t_a_acc), _fmt(report.t_acc)]
        )
    widths = [max(len(r[i]) for r in rows + [["Model", "S+", "S-", "T_A", "T"]]) for i in range(5)]
    table = _table(["Model", "S+", "S-", "T_A", "T"], rows, widths)
    if include_reference:
        table += "\n(* published reference row, not recomputed)"
    return table
