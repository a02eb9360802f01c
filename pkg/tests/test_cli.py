import json
import subprocess
import sys
from pathlib import Path

from tdg.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main, parse_seeds
from tdg.fileio import canonical_json
from tdg.pipeline import read_manifest

PAIRINGS = [
    {
        "reference_class": "Blue Jay",
        "group": "crown color",
        "s_plus": "yellow",
        "s_minus": "blue",
        "guidance_class": "bird",
        "category": "color",
    },
    {
        "reference_class": "Cardinal",
        "group": "breast pattern",
        "s_plus": "spotted",
        "s_minus": "solid",
        "guidance_class": "Brown Thrasher",
        "category": "texture",
    },
]


def desk_config(tmp_path: Path, seeds="0..19", seed=1) -> Path:
    doc = {
        "seed": seed,
        "world": {"kind": "composition"},
        "schedule": {"kind": "vp_linear", "T": 40, "beta_start": 0.002, "beta_end": 0.25},
        "sampler": {"guidance_scale": 3.5, "tie": {"t_min": 0.02, "t_max": 0.1, "k": 10}},
        "jobs": 1,
        "pairings": PAIRINGS,
        "generate": {"seeds": seeds, "out": "samples.jsonl"},
        "filter": {"oracle": "geometric", "out": "manifest.jsonl"},
        "evaluate": {"predictor": "oracle", "out": "report.json"},
        "report": {"out": "report.txt"},
        "validate": {"annotations": "annotations.jsonl", "out": "validation.json"},
        "annotation": {"quota": 3, "annotators": ["alice"], "log": "annotations.jsonl"},
    }
    path = tmp_path / "run.json"
    path.write_text(json.dumps(doc, indent=2))
    return path


def test_parse_seeds_forms():
    assert parse_seeds("0..3") == [0, 1, 2, 3]
    assert parse_seeds("1,5, 9") == [1, 5, 9]
    assert parse_seeds([2, 4]) == [2, 4]


class TestPipelineStages:
    def test_generate_is_deterministic(self, tmp_path):
        config = desk_config(tmp_path)
        assert main(["generate", "--config", str(config)]) == EXIT_OK
        first = (tmp_path / "samples.jsonl").read_bytes()
        assert main(["generate", "--config", str(config)]) == EXIT_OK
        assert (tmp_path / "samples.jsonl").read_bytes() == first
        header = json.loads(first.decode().splitlines()[0])
        assert header["kind"] == "samples" and header["config_hash"]

    def test_full_chain_and_determinism(self, tmp_path):
        config = desk_config(tmp_path)
        for command in ("generate", "filter", "evaluate", "report"):
            assert main([command, "--config", str(config)]) == EXIT_OK
        manifest_bytes = (tmp_path / "manifest.jsonl").read_bytes()
        report_bytes = (tmp_path / "report.json").read_bytes()
        text = (tmp_path / "report.txt").read_text()
        assert "94.0" in text and "96.8" in text  # reference Human row
        assert "Human*" in text

        manifest = read_manifest(tmp_path / "manifest.jsonl")
        assert manifest.records  # desk run retains samples
        retained_per_pairing = {
            pid: sum(1 for r in manifest.records if r.pairing_id == pid)
            for pid in manifest.pairing_ids()
        }
        assert all(v == manifest.provenance.retain_count for v in retained_per_pairing.values())

        # second identical run: byte-identical artifacts
        for command in ("generate", "filter", "evaluate", "report"):
            assert main([command, "--config", str(config)]) == EXIT_OK
        assert (tmp_path / "manifest.jsonl").read_bytes() == manifest_bytes
        assert (tmp_path / "report.json").read_bytes() == report_bytes

    def test_world_and_schedule_load_from_files(self, tmp_path):
        from tdg.mixture import world_to_dict
        from tdg.worlds import make_composition_world

        cw = make_composition_world()
        (tmp_path / "world.json").write_text(
            json.dumps(world_to_dict(cw.world, cw.conditions()))
        )
        config_path = desk_config(tmp_path, seeds="0..4")
        doc = json.loads(config_path.read_text())
        doc["world"] = "world.json"
        config_path.write_text(json.dumps(doc))
        assert main(["generate", "--config", str(config_path)]) == EXIT_OK
        # identical world data -> identical samples as the inline form,
        # apart from the embedded config hash
        (tmp_path / "inline").mkdir(exist_ok=True)
        inline = desk_config(tmp_path / "inline", seeds="0..4")
        assert main(["generate", "--config", str(inline)]) == EXIT_OK
        strip = lambda p: [l for l in p.read_text().splitlines() if '"kind":"sample"' in l]
        assert strip(tmp_path / "samples.jsonl") == strip(tmp_path / "inline" / "samples.jsonl")

    def test_seed_flag_overrides_config(self, tmp_path):
        config = desk_config(tmp_path)
        assert main(["generate", "--config", str(config), "--seeds", "0..4"]) == EXIT_OK
        lines = (tmp_path / "samples.jsonl").read_text().splitlines()
        assert len(lines) == 1 + 5 * len(PAIRINGS)

    def test_parallel_generate_matches_serial(self, tmp_path):
        config = desk_config(tmp_path, seeds="0..7")
        assert main(["generate", "--config", str(config)]) == EXIT_OK
        serial = (tmp_path / "samples.jsonl").read_bytes()
        assert main(["generate", "--config", str(config), "--jobs", "4"]) == EXIT_OK
        assert (tmp_path / "samples.jsonl").read_bytes() == serial

    def test_validate_stage(self, tmp_path):
        config = desk_config(tmp_path)
        assert main(["generate", "--config", str(config)]) == EXIT_OK
        assert main(["filter", "--config", str(config)]) == EXIT_OK
        manifest = read_manifest(tmp_path / "manifest.jsonl")
        sid = manifest.records[0].sample_id
        log = tmp_path / "annotations.jsonl"
        rows = [
            {"sample_id": sid, "question": "attribute_applied", "answer": "yes",
             "annotator": "alice", "timestamp": "2026-01-01T00:00:00+00:00"},
            {"sample_id": sid, "question": "bird_faithful", "answer": "somewhat",
             "annotator": "alice", "timestamp": "2026-01-01T00:00:01+00:00"},
        ]
        log.write_text("\n".join(canonical_json(r) for r in rows) + "\n")
        assert main(["validate", "--config", str(config)]) == EXIT_OK
        doc = json.loads((tmp_path / "validation.json").read_text())
        attr = manifest.records[0].attribute
        assert doc["per_attribute"][attr]["yes_rate"] == 1.0
        assert attr in doc["retained_attributes"]

    def test_trace_output(self, tmp_path):
        config_path = desk_config(tmp_path, seeds="0..1")
        doc = json.loads(config_path.read_text())
        doc["generate"]["trace"] = "trace.jsonl"
        config_path.write_text(json.dumps(doc))
        assert main(["generate", "--config", str(config_path)]) == EXIT_OK
        lines = (tmp_path / "trace.jsonl").read_text().splitlines()
        assert len(lines) == 40 * 2 * len(PAIRINGS)  # steps x seeds x pairings
        row = json.loads(lines[0])
        assert {"eta", "averaged_fraction", "trajectory_l2", "step", "tau"} <= set(row)


class TestFilterFixtures:
    def _write_samples(self, tmp_path, pairing_id, n, config_hash="x"):
        lines = [canonical_json({"kind": "samples", "config_hash": config_hash, "seeds": list(range(n))})]
        for seed in range(n):
            lines.append(
                canonical_json(
                    {
                        "kind": "sample",
                        "sample_id": f"{pairing_id}/{seed}",
                        "pairing_id": pairing_id,
                        "seed": seed,
                        "payload": [0.0, 0.0],
                        "payload_ref": "xy:0.0,0.0",
                        "prompt_R": "r",
                        "prompt_G": "g",
                    }
                )
            )
        (tmp_path / "samples.jsonl").write_text("\n".join(lines) + "\n")

    def _scripted_config(self, tmp_path, n_correct, n=500):
        doc = {
            "seed": 1,
            "world": {"kind": "composition"},
            "schedule": {"kind": "vp_linear", "T": 40, "beta_start": 0.002, "beta_end": 0.25},
            "pairings": PAIRINGS[:1],
            "generate": {"seeds": f"0..{n - 1}", "out": "samples.jsonl"},
            "filter": {"oracle": {"scripted": "answers.json"}, "out": "manifest.jsonl"},
        }
        config = tmp_path / "run.json"
        config.write_text(json.dumps(doc))
        pairing_id = "blue-jay__crown-color__yellow"
        self._write_samples(tmp_path, pairing_id, n)
        answers = {}
        for seed in range(n):
            correct = seed < n_correct
            answers[f"{pairing_id}/{seed}"] = ["yellow" if correct else "blue", 0.5 + 0.001 * seed]
        (tmp_path / "answers.json").write_text(json.dumps(answers))
        return config, pairing_id

    def test_eighty_of_five_hundred_retains_top_fifty(self, tmp_path):
        config, pairing_id = self._scripted_config(tmp_path, n_correct=80)
        assert main(["filter", "--config", str(config)]) == EXIT_OK
        manifest = read_manifest(tmp_path / "manifest.jsonl")
        assert len(manifest.records) == 50
        # scripted confidences increase with seed: top 50 are seeds 30..79
        assert sorted(r.seed for r in manifest.records) == list(range(30, 80))
        stats = manifest.provenance.filter_stats[pairing_id]
        assert stats == {"generated": 500, "correct": 80, "retained": 50, "eliminated": False}

    def test_forty_nine_of_five_hundred_eliminates(self, tmp_path):
        config, pairing_id = self._scripted_config(tmp_path, n_correct=49)
        assert main(["filter", "--config", str(config)]) == EXIT_OK
        manifest = read_manifest(tmp_path / "manifest.jsonl")
        assert manifest.records == ()
        assert pairing_id in manifest.provenance.eliminated
        assert manifest.provenance.filter_stats[pairing_id]["eliminated"] is True


class TestErrorHandling:
    def test_missing_config_is_usage_error(self, tmp_path):
        assert main(["generate", "--config", str(tmp_path / "nope.json")]) == EXIT_USAGE

    def test_missing_inputs_are_usage_errors(self, tmp_path):
        config = desk_config(tmp_path)
        assert main(["filter", "--config", str(config)]) == EXIT_USAGE  # no samples yet
        assert main(["evaluate", "--config", str(config)]) == EXIT_USAGE  # no manifest yet

    def test_config_hash_mismatch_is_data_error(self, tmp_path):
        config = desk_config(tmp_path)
        assert main(["generate", "--config", str(config)]) == EXIT_OK
        assert main(["filter", "--config", str(config)]) == EXIT_OK
        # a different config must refuse the stale manifest
        other = desk_config(tmp_path, seed=2)
        assert main(["evaluate", "--config", str(other)]) == EXIT_DATA

    def test_data_error_leaves_no_partial_output(self, tmp_path):
        config = desk_config(tmp_path)
        assert main(["generate", "--config", str(config)]) == EXIT_OK
        # corrupt the samples: unknown pairing id
        samples = tmp_path / "samples.jsonl"
        text = samples.read_text().replace("blue-jay__crown-color__yellow", "mystery__pairing__x")
        samples.write_text(text)
        assert main(["filter", "--config", str(config)]) == EXIT_DATA
        assert not (tmp_path / "manifest.jsonl").exists()
        assert not list(tmp_path.glob("manifest.jsonl.*.tmp"))

    def test_annotation_requires_annotators(self, tmp_path):
        config = desk_config(tmp_path)
        doc = json.loads(config.read_text())
        doc["annotation"]["annotators"] = []
        config.write_text(json.dumps(doc))
        assert main(["generate", "--config", str(config)]) == EXIT_OK
        assert main(["filter", "--config", str(config)]) == EXIT_OK
        assert main(["serve-annotation", "--config", str(config)]) == EXIT_USAGE


def test_console_entrypoint_runs():
    out = subprocess.run(
        [sys.executable, "-m", "tdg.cli", "generate", "--config", "/definitely/missing.json"],
        capture_output=True,
        text=True,
    )
    assert out.returncode == EXIT_USAGE
    assert "usage error" in out.stderr
