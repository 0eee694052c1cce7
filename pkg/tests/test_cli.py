from __future__ import annotations

import hashlib
import json
from pathlib import Path

import pytest

from conftest import (
    VKITTI_TABLE3,
    generate_toy_data,
    run_cli,
    toy_experiment_config,
)
from gcveval.annotations import read_interchange
from gcveval.harmonize import read_split_manifest


def tree_digest(root: Path) -> dict[str, str]:
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*")) if p.is_file()
    }


class TestPrep:
    def test_corpus_prep(self, corpus_copy):
        code, out, err = run_cli("prep", "--config", str(corpus_copy / "corpus.toml"))
        assert code == 0, err
        assert "shared labels: car, pedestrian" in out

        prep = corpus_copy / "prep"
        manifests = {d: read_split_manifest(prep / d / "split.json")
                     for d in ("sim_city", "urban_real", "dashcam")}
        train_sizes = {len(m["train_ids"]) for m in manifests.values()}
        assert len(train_sizes) == 1
        for name, m in manifests.items():
            assert not set(m["train_ids"]) & set(m["test_ids"])
            records = read_interchange(prep / name / "records.jsonl")
            assert {r.category for r in records} <= {"car", "pedestrian"}
        # the missing-on-disk image was dropped with a warning
        assert "clip_05" in err
        dashcam_ids = {r.image_id
                       for r in read_interchange(prep / "dashcam" / "records.jsonl")}
        assert "clip_05" not in dashcam_ids

    def test_prep_idempotent_byte_identical(self, corpus_copy):
        config = str(corpus_copy / "corpus.toml")
        assert run_cli("prep", "--config", config)[0] == 0
        first = tree_digest(corpus_copy / "prep")
        assert run_cli("prep", "--config", config)[0] == 0
        assert tree_digest(corpus_copy / "prep") == first

    def test_disjoint_label_spaces_exit_2(self, tmp_path):
        from gcveval.annotations import KITTI_TXT, AnnotationRecord, write_interchange

        for name, cat in (("a", "car"), ("b", "person")):
            write_interchange(
                [AnnotationRecord(f"i{k}", cat, (0.0, 0.0, 1.0, 1.0), KITTI_TXT)
                 for k in range(4)],
                tmp_path / name / "records.jsonl")
        doc = {
            "datasets": [
                {"id": "a", "role": "synthetic_under_test", "format": "interchange",
                 "annotations": "a/records.jsonl"},
                {"id": "b", "role": "reference", "format": "interchange",
                 "annotations": "b/records.jsonl"},
            ],
            "splits": {"out_dir": "prep"},
        }
        config = tmp_path / "exp.json"
        config.write_text(json.dumps(doc))
        code, _, err = run_cli("prep", "--config", str(config))
        assert code == 2
        assert "share no labels" in err

    def test_seed_flag_overrides_config(self, corpus_copy):
        config = str(corpus_copy / "corpus.toml")
        run_cli("prep", "--config", config)
        base = read_split_manifest(corpus_copy / "prep/sim_city/split.json")
        run_cli("prep", "--config", config, "--seed", "999")
        other = read_split_manifest(corpus_copy / "prep/sim_city/split.json")
        assert other["seed"] == 999
        assert base["train_ids"] != other["train_ids"]

    def test_missing_config_flag(self):
        code, _, err = run_cli("prep")
        assert code == 2
        assert "--config" in err


class TestScore:
    def test_shipped_fixture_reproduces_published_scores(self):
        code, out, _ = run_cli("score", str(VKITTI_TABLE3), "--terse")
        assert code == 0
        assert out == "A_o = 0.49\nS_o = 0.45\n"

    def test_markdown_gcv_table(self):
        code, out, _ = run_cli("score", str(VKITTI_TABLE3))
        assert code == 0
        assert "| vkitti_syn | 1.00 | 0.66 | 0.39 |" in out
        assert "| kitti | 0.77 | 1.00 | 0.26 |" in out
        assert "| bdd100k | 1.24 | 0.90 | 1.00 |" in out

    def test_all_ones_matrix(self, tmp_path):
        doc = {
            "kind": "cross_performance_matrix",
            "metric_name": "m",
            "dataset_ids": ["o", "a", "b"],
            "cells": [[0.5, 0.5, 0.5], [0.7, 0.7, 0.7], [0.2, 0.2, 0.2]],
        }
        path = tmp_path / "m.json"
        path.write_text(json.dumps(doc))
        code, out, _ = run_cli("score", str(path), "--terse")
        assert code == 0
        assert out == "A_o = 1.00\nS_o = 1.00\n"

    def test_single_reference_renders_na(self, tmp_path):
        doc = {
            "kind": "cross_performance_matrix",
            "metric_name": "m",
            "dataset_ids": ["o", "a"],
            "cells": [[0.8, 0.4], [0.6, 0.9]],
        }
        path = tmp_path / "m.json"
        path.write_text(json.dumps(doc))
        code, out, _ = run_cli("score", str(path))
        assert code == 0
        assert "n/a (requires >= 2 references)" in out

    def test_zero_diagonal_exit_2(self, tmp_path):
        doc = {
            "kind": "cross_performance_matrix",
            "metric_name": "m",
            "dataset_ids": ["o", "a"],
            "cells": [[0.0, 0.4], [0.6, 0.9]],
        }
        path = tmp_path / "m.json"
        path.write_text(json.dumps(doc))
        code, _, err = run_cli("score", str(path))
        assert code == 2
        assert "scored 0 on its own test set" in err

    def test_json_report_round_trips_through_report_command(self, tmp_path):
        report_path = tmp_path / "report.json"
        code, _, _ = run_cli("score", str(VKITTI_TABLE3), "--format", "json",
                             "--out", str(report_path))
        assert code == 0
        code, out, _ = run_cli("report", str(report_path), "--terse")
        assert code == 0
        assert out == "A_o = 0.49\nS_o = 0.45\n"
        # render -> parse -> render is stable
        doc = json.loads(report_path.read_text())
        from gcveval.report import render_json, report_from_doc
        assert json.loads(render_json(report_from_doc(doc))) == doc

    def test_csv_format(self):
        code, out, _ = run_cli("score", str(VKITTI_TABLE3), "--format", "csv")
        assert code == 0
        assert out.splitlines()[0] == "section,key,value"


class TestMatrixCommand:
    def test_normalize_to_gcv_json(self, tmp_path):
        out_path = tmp_path / "gcv.json"
        code, _, _ = run_cli("matrix", str(VKITTI_TABLE3), "--normalize",
                             "--out", str(out_path))
        assert code == 0
        doc = json.loads(out_path.read_text())
        assert doc["kind"] == "gcv_matrix"
        assert doc["ratios"][0][0] == 1.0
        # scoring GCV ratios directly gives the same headline values
        code, out, _ = run_cli("score", str(out_path), "--terse")
        assert code == 0
        assert out == "A_o = 0.49\nS_o = 0.45\n"

    def test_csv_export_import_round_trip(self, tmp_path):
        csv_path = tmp_path / "m.csv"
        code, _, _ = run_cli("matrix", str(VKITTI_TABLE3), "--out", str(csv_path))
        assert code == 0
        json_path = tmp_path / "back.json"
        code, _, _ = run_cli("matrix", str(csv_path), "--metric-name", "ap50",
                             "--out", str(json_path))
        assert code == 0
        assert json.loads(json_path.read_text()) == json.loads(VKITTI_TABLE3.read_text())

    def test_normalizing_gcv_is_an_error(self, tmp_path):
        gcv_path = tmp_path / "g.json"
        run_cli("matrix", str(VKITTI_TABLE3), "--normalize", "--out", str(gcv_path))
        code, _, err = run_cli("matrix", str(gcv_path), "--normalize")
        assert code == 2
        assert "already holds" in err

    def test_malformed_matrix_exit_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"kind": "cross_performance_matrix"}')
        code, _, _ = run_cli("score", str(bad))
        assert code == 2


class TestRunCommand:
    def _prepped_config(self, tmp_path, eval_template=None) -> Path:
        dirs = generate_toy_data(tmp_path, {"syn": 21, "ref_a": 22, "ref_b": 23},
                                 sample_count=120)
        config = toy_experiment_config(tmp_path, dirs, synthetic_id="syn",
                                       eval_template=eval_template)
        assert run_cli("prep", "--config", str(config))[0] == 0
        return config

    def test_run_writes_matrix(self, tmp_path):
        config = self._prepped_config(tmp_path)
        code, out, err = run_cli("run", "--config", str(config))
        assert code == 0, err
        matrix_path = tmp_path / "matrix.json"
        assert matrix_path.exists()
        doc = json.loads(matrix_path.read_text())
        assert doc["dataset_ids"][0] == "syn"
        code, out, _ = run_cli("score", str(matrix_path), "--terse")
        assert code == 0
        assert out.startswith("A_o = ")

    def test_run_before_prep_exit_2(self, tmp_path):
        dirs = generate_toy_data(tmp_path, {"syn": 1, "ref": 2}, sample_count=60)
        config = toy_experiment_config(tmp_path, dirs, synthetic_id="syn")
        code, _, err = run_cli("run", "--config", str(config))
        assert code == 2
        assert "split manifest" in err

    def test_runner_failure_exit_3(self, tmp_path):
        config = self._prepped_config(
            tmp_path,
            eval_template=("{python} -c 'import sys; sys.exit(7)' "
                           "{model_artifact} {test_manifest} {workdir}"),
        )
        code, _, err = run_cli("run", "--config", str(config))
        assert code == 3
        assert "exit code 7" in err

    def test_resume_flag_accepted(self, tmp_path):
        config = self._prepped_config(tmp_path)
        assert run_cli("run", "--config", str(config))[0] == 0
        code, _, err = run_cli("run", "--config", str(config), "--resume")
        assert code == 0, err

    def test_cache_dir_env_override(self, tmp_path, monkeypatch):
        config = self._prepped_config(tmp_path)
        env_cache = tmp_path / "env_cache"
        monkeypatch.setenv("GCVEVAL_CACHE_DIR", str(env_cache))
        assert run_cli("run", "--config", str(config))[0] == 0
        assert env_cache.exists()
        assert not (tmp_path / "cache").exists()


def test_version_flag():
    with pytest.raises(SystemExit) as exc:
        run_cli("--version")
    assert exc.value.code == 0
