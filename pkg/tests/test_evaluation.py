from fractions import Fraction

import numpy as np
import pytest

from conftest import tiny_manifest
from tdg.errors import CoverageError, ParameterError, ScorerError
from tdg.evaluation import (
    AgreementInput,
    ConceptPrediction,
    ImageLabels,
    LabeledExample,
    agreement_chart_lines,
    cub_agreement,
    flip_predictions,
    load_reference_tables,
    manifest_chance_targets,
    memorizer_predictions,
    oracle_predictions,
    random_chance_baseline,
    render_binary_table,
    render_multiclass_table,
    score_binary_concepts,
    score_group_multiclass,
)
from tdg.pipeline import AttributeGroup, attribute_key, load_attribute_groups

GROUPS = load_attribute_groups()


class TestBinaryScoring:
    def test_oracle_predictor_is_perfect(self, manifest):
        report = score_binary_concepts(oracle_predictions(manifest), manifest)
        assert report.s_plus_acc == 100.0
        assert report.s_minus_acc == 100.0

    def test_memorizer_scores_zero(self, manifest):
        report = score_binary_concepts(memorizer_predictions(manifest), manifest)
        assert report.s_plus_acc == 0.0
        assert report.s_minus_acc == 0.0

    def test_flip_identity_exact(self, manifest):
        rng = np.random.default_rng(0)
        preds = {}
        for rec in manifest.records:
            preds[rec.sample_id] = ConceptPrediction(
                sample_id=rec.sample_id,
                values={
                    attribute_key(rec.group, rec.s_plus): bool(rng.integers(2)),
                    attribute_key(rec.group, rec.s_minus): bool(rng.integers(2)),
                },
            )
        base = score_binary_concepts(preds, manifest)
        flipped = score_binary_concepts(flip_predictions(preds), manifest)
        assert flipped.s_plus.hits == base.s_plus.total - base.s_plus.hits
        assert flipped.s_minus.hits == base.s_minus.total - base.s_minus.hits
        assert Fraction(flipped.s_plus.hits, flipped.s_plus.total) == 1 - Fraction(
            base.s_plus.hits, base.s_plus.total
        )

    def test_coverage_error_on_missing_prediction(self, manifest):
        preds = oracle_predictions(manifest)
        preds.pop(manifest.records[0].sample_id)
        with pytest.raises(CoverageError):
            score_binary_concepts(preds, manifest)

    def test_coverage_error_on_missing_attribute(self, manifest):
        preds = oracle_predictions(manifest)
        sid = manifest.records[0].sample_id
        preds[sid] = ConceptPrediction(sample_id=sid, values={"bogus::attr": True})
        with pytest.raises(CoverageError):
            score_binary_concepts(preds, manifest)

    def test_score_threshold(self, manifest):
        preds = {
            rec.sample_id: ConceptPrediction(
                sample_id=rec.sample_id,
                values={
                    attribute_key(rec.group, rec.s_plus): 0.8,
                    attribute_key(rec.group, rec.s_minus): 0.2,
                },
            )
            for rec in manifest.records
        }
        assert score_binary_concepts(preds, manifest, threshold=0.5).s_plus_acc == 100.0
        assert score_binary_concepts(preds, manifest, threshold=0.9).s_plus_acc == 0.0

    def test_holdout_accuracy(self, manifest):
        sub_key = attribute_key(manifest.records[0].group, manifest.records[0].s_plus)
        other_key = "tail pattern::striped"
        examples = [
            LabeledExample(
                prediction=ConceptPrediction("h/0", {sub_key: True, other_key: False}),
                labels={sub_key: True, other_key: True},
            ),
            LabeledExample(
                prediction=ConceptPrediction("h/1", {sub_key: False, other_key: True}),
                labels={sub_key: True, other_key: True},
            ),
        ]
        report = score_binary_concepts(oracle_predictions(manifest), manifest, test_set=examples)
        assert report.t_a.hits == 1 and report.t_a.total == 2   # sub-attribute decisions
        assert report.t.hits == 2 and report.t.total == 4        # all decisions

    def test_per_group_breakdown(self, manifest):
        report = score_binary_concepts(oracle_predictions(manifest), manifest)
        assert set(report.per_group) == {rec.group for rec in manifest.records}
        for stats in report.per_group.values():
            assert stats["s_plus"].pct == 100.0

    def test_permutation_invariance(self, manifest):
        preds = oracle_predictions(manifest)
        items = list(preds.items())
        report_a = score_binary_concepts(dict(items), manifest)
        report_b = score_binary_concepts(dict(items[::-1]), manifest)
        assert report_a.s_plus == report_b.s_plus


class TestGroupMulticlass:
    def test_truth_first_scorer(self, manifest):
        def scorer(rec, candidate):
            return 1.0 if candidate == rec.s_plus else 0.0

        report = score_group_multiclass(scorer, manifest, GROUPS)
        assert report.s_plus_acc == 100.0
        assert report.s_minus_acc == 100.0

    def test_original_attribute_hallucination(self, manifest):
        def scorer(rec, candidate):
            return 1.0 if candidate == rec.s_minus else 0.0

        report = score_group_multiclass(scorer, manifest, GROUPS)
        assert report.s_plus_acc == 0.0
        assert report.s_minus_acc == 0.0

    def test_uniform_random_scorer_approaches_chance(self):
        group = AttributeGroup("crown color", ("yellow", "blue", "black", "red"))
        groups = {"crown color": group}
        manifest = tiny_manifest(n_pairings=1, per_pairing=5)
        rng = np.random.default_rng(11)
        hits = trials = 0
        for _ in range(4000):
            def scorer(rec, candidate):
                return float(rng.uniform())

            report = score_group_multiclass(scorer, manifest, groups)
            hits += report.s_plus.hits
            trials += report.s_plus.total
        rate = hits / trials
        # 5 candidates (4 options + none): expect 20%
        assert abs(rate - 0.2) < 3 * np.sqrt(0.2 * 0.8 / trials)

    def test_non_finite_scorer_rejected(self, manifest):
        with pytest.raises(ScorerError):
            score_group_multiclass(lambda r, c: float("nan"), manifest, GROUPS)

    def test_unknown_group_rejected(self, manifest):
        with pytest.raises(ParameterError):
            score_group_multiclass(lambda r, c: 0.0, manifest, {})


class TestRandomChance:
    def test_closed_forms(self):
        groups = {"g": AttributeGroup("g", ("a", "b", "c", "d"))}
        chance = random_chance_baseline(groups, [("g", 1)])
        assert chance.s_plus_pct == pytest.approx(20.0)
        chance = random_chance_baseline(groups, [("g", 0)])
        assert chance.s_minus_pct == pytest.approx(80.0)

    def test_aggregates_mixed_composition(self):
        groups = {
            "g4": AttributeGroup("g4", tuple("abcd")),
            "g9": AttributeGroup("g9", tuple("abcdefghi")),
        }
        chance = random_chance_baseline(groups, [("g4", 1), ("g9", 1)])
        assert chance.s_plus_pct == pytest.approx(100 * (1 / 5 + 1 / 10) / 2)

    def test_unknown_group(self):
        with pytest.raises(ParameterError):
            random_chance_baseline({}, [("g", 1)])

    def test_matches_monte_carlo(self, manifest):
        targets = manifest_chance_targets(manifest, GROUPS)
        chance = random_chance_baseline(GROUPS, targets)
        plus_targets = [t for t in targets if t[1] == 1]
        rng = np.random.default_rng(5)
        trials = 3000
        rates = np.empty(trials)
        probs = [1.0 / (len(GROUPS[g].options) + 1) for g, _ in plus_targets]
        for i in range(trials):
            rates[i] = np.mean([rng.uniform() < p for p in probs])
        mc = rates.mean() * 100
        se = rates.std(ddof=1) / np.sqrt(trials) * 100
        assert abs(mc - chance.s_plus_pct) < 3 * se


class TestAgreement:
    def test_full_agreement(self):
        images = [
            ImageLabels("i1", "A", {"x": True, "y": False}),
            ImageLabels("i2", "A", {"x": True, "y": False}),
            ImageLabels("i3", "B", {"x": False, "y": False}),
        ]
        report = cub_agreement(AgreementInput(tuple(images)))
        assert report.overall == 1.0
        assert report.per_attribute["x"]["rate"] == 1.0

    def test_two_thirds_agreement(self):
        images = [
            ImageLabels("i1", "A", {"x": True}),
            ImageLabels("i2", "A", {"x": True}),
            ImageLabels("i3", "A", {"x": False}),
        ]
        report = cub_agreement(AgreementInput(tuple(images)))
        assert report.per_attribute["x"]["rate"] == pytest.approx(2 / 3)

    def test_tie_breaks_toward_absent(self):
        images = [
            ImageLabels("i1", "A", {"x": True}),
            ImageLabels("i2", "A", {"x": False}),
        ]
        report = cub_agreement(AgreementInput(tuple(images)))
        # majority resolves to absent, so the False image agrees
        assert report.per_attribute["x"]["rate"] == pytest.approx(0.5)
        assert report.tie_break == "absent"

    def test_reference_values_shipped(self):
        tables = load_reference_tables()
        assert tables["agreement"]["cub_overall"] == 57.50
        assert tables["agreement"]["sub_overall"] == 98.90

    def test_chart_lines(self):
        images = [
            ImageLabels("i1", "A", {"x": True}),
            ImageLabels("i2", "A", {"x": True}),
            ImageLabels("i3", "B", {"x": False}),
        ]
        lines = agreement_chart_lines(cub_agreement(AgreementInput(tuple(images))))
        assert lines[0] == "attribute\tmean\tstd"
        assert lines[1].startswith("x\t1.000000")

    def test_chart_file(self, tmp_path):
        from tdg.evaluation import write_agreement_chart

        images = [
            ImageLabels("i1", "A", {"x": True}),
            ImageLabels("i2", "A", {"x": False}),
            ImageLabels("i3", "B", {"x": True}),
        ]
        report = cub_agreement(AgreementInput(tuple(images)))
        out = tmp_path / "agreement.tsv"
        write_agreement_chart(out, report)
        body = out.read_text().splitlines()
        assert body[0] == "attribute\tmean\tstd"
        assert len(body) == 2


class TestRendering:
    def test_binary_table_contains_reference_rows(self):
        table = render_binary_table()
        assert "Human*" in table
        assert "94.0" in table and "96.8" in table
        assert "not recomputed" in table

    def test_multiclass_table_contains_reference_rows(self):
        table = render_multiclass_table()
        assert "EVA-CLIP*" in table
        assert "46.8" in table and "77.6" in table

    def test_computed_rows_appended(self, manifest):
        report = score_binary_concepts(oracle_predictions(manifest), manifest, label="oracle-backed")
        table = render_binary_table([report])
        assert "oracle-backed" in table
        assert "100.0" in table
