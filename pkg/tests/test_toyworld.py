from __future__ import annotations

import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from conftest import write_toy_domain
from gcveval.annotations import read_interchange
from gcveval.harmonize import LabelSpace, filter_to_shared, make_splits
from gcveval.toyworld import (
    ToyClassSpec,
    ToyDomainSpec,
    ToyModel,
    allocate_counts,
    features_and_labels,
    generate_toy_dataset,
    spec_from_doc,
    write_toy_dataset,
)


def two_class_spec(seed: int = 7, sample_count: int = 200, separation: float = 6.0,
                   mean_offset=(0.0, 0.0), spread: float = 1.0) -> ToyDomainSpec:
    return ToyDomainSpec(
        classes=(
            ToyClassSpec("ball", (0.0, 0.0), spread),
            ToyClassSpec("cube", (separation, 0.0), spread),
        ),
        priors=(0.5, 0.5),
        sample_count=sample_count,
        seed=seed,
        mean_offset=mean_offset,
    )


def bayes_accuracy_two_isotropic(separation: float, sigma: float) -> float:
    """Closed-form optimal accuracy for two equal-prior isotropic Gaussians.

    The decision boundary is the perpendicular bisector of the means; the
    error along the connecting axis is Phi(-d / (2 sigma)).
    """
    z = separation / (2.0 * sigma)
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


class TestGeneration:
    def test_byte_identical_given_seed(self, tmp_path):
        p1 = write_toy_dataset(two_class_spec(seed=7), tmp_path / "a")
        p2 = write_toy_dataset(two_class_spec(seed=7), tmp_path / "b")
        assert p1.read_bytes() == p2.read_bytes()

    def test_seed_changes_samples(self, tmp_path):
        p1 = write_toy_dataset(two_class_spec(seed=7), tmp_path / "a")
        p2 = write_toy_dataset(two_class_spec(seed=8), tmp_path / "b")
        assert p1.read_bytes() != p2.read_bytes()

    def test_exact_allocation(self):
        records = generate_toy_dataset(two_class_spec(sample_count=100))
        by_class: dict[str, int] = {}
        for r in records:
            by_class[r.category] = by_class.get(r.category, 0) + 1
        assert by_class == {"ball": 50, "cube": 50}

    def test_largest_remainder_allocation(self):
        assert allocate_counts((0.5, 0.5), 100) == (50, 50)
        assert allocate_counts((0.5, 0.5), 101) == (51, 50)
        assert allocate_counts((1 / 3, 1 / 3, 1 / 3), 100) == (34, 33, 33)
        assert allocate_counts((0.7, 0.2, 0.1), 10) == (7, 2, 1)
        assert sum(allocate_counts((0.21, 0.33, 0.46), 97)) == 97

    def test_records_flow_through_harmonizer(self, tmp_path):
        path = write_toy_dataset(two_class_spec(sample_count=40), tmp_path)
        records = read_interchange(path)
        groups = filter_to_shared(records, LabelSpace.of(["ball", "cube"]))
        assert len(groups) == 40
        splits = make_splits({"toy": groups}, "auto", 0.2, seed=1,
                             shared=LabelSpace.of(["ball", "cube"]))
        assert len(splits["toy"].train_ids) > 0

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            two_class_spec(sample_count=3)  # allocates < 2 to one class
        with pytest.raises(ValueError):
            ToyDomainSpec(classes=(ToyClassSpec("a", (0, 0), 1.0),),
                          priors=(0.7,), sample_count=10, seed=0)
        with pytest.raises(ValueError):
            ToyClassSpec("a", (0, 0), 0.0)

    def test_spec_from_doc_round_trip(self, tmp_path):
        path = write_toy_domain(tmp_path / "d.json", seed=3, sample_count=50)
        spec = spec_from_doc(json.loads(path.read_text()))
        assert spec.seed == 3
        assert spec.sample_count == 50
        assert spec.classes[1].mean == (6.0, 0.0)


class TestToyModel:
    def test_separable_classes_reach_perfect_accuracy(self):
        # offset >> spread: training and test sets are linearly separable
        spec = two_class_spec(separation=50.0, sample_count=400)
        records = generate_toy_dataset(spec)
        ids = [r.image_id for r in records]
        feats, labels = features_and_labels(records, ids)
        train = slice(0, None, 2)  # records come grouped by class; interleave
        test = slice(1, None, 2)
        model = ToyModel.fit(feats[train], labels[train])
        assert model.accuracy(feats[test], labels[test]) == 1.0

    def test_in_domain_accuracy_matches_bayes_oracle(self):
        # 1,000 samples, d=2 sigma=1: overlap is substantial and analytic
        spec = two_class_spec(separation=2.0, sample_count=1000, seed=5)
        records = generate_toy_dataset(spec)
        held_out = generate_toy_dataset(two_class_spec(separation=2.0,
                                                       sample_count=1000, seed=6))
        feats, labels = features_and_labels(records, [r.image_id for r in records])
        model = ToyModel.fit(feats, labels)
        tf, tl = features_and_labels(held_out, [r.image_id for r in held_out])
        acc = model.accuracy(tf, tl)
        assert acc == pytest.approx(bayes_accuracy_two_isotropic(2.0, 1.0), abs=0.05)

    def test_monotone_degradation_with_offset(self):
        # accuracy on the unshifted domain strictly decreases as the training
        # domain shifts away, checked across seeds 0-9 at 3 offsets
        offsets = [0.0, 1.5, 3.0]
        for seed in range(10):
            ref = generate_toy_dataset(two_class_spec(separation=4.0,
                                                      sample_count=400, seed=seed))
            rf, rl = features_and_labels(ref, [r.image_id for r in ref])
            accs = []
            for off in offsets:
                shifted = generate_toy_dataset(two_class_spec(
                    separation=4.0, sample_count=400, seed=seed + 100,
                    mean_offset=(off, off)))
                sf, sl = features_and_labels(shifted, [r.image_id for r in shifted])
                model = ToyModel.fit(sf, sl)
                accs.append(model.accuracy(rf, rl))
            assert accs[0] > accs[1] > accs[2], (seed, accs)

    def test_identical_synthetic_and_reference_concentrate_weight(self):
        # grid computed in-process: synthetic == ref_a (same domain spec and
        # draw), ref_b shifted. The syn/ref_a ratio pair sits at ~1 and the
        # simulation weights favor ref_a.
        from gcveval.matrix import MetricValue, build_matrix, normalize
        from gcveval.metrics import score

        def dataset(seed, offset=(0.0, 0.0)):
            spec = two_class_spec(separation=6.0, sample_count=1000, seed=seed,
                                  mean_offset=offset)
            recs = generate_toy_dataset(spec)
            groups = filter_to_shared(recs, LabelSpace.of(["ball", "cube"]))
            splits = make_splits({"d": groups}, 800, 0.2, seed=1,
                                 shared=LabelSpace.of(["ball", "cube"]))
            by_image = {r.image_id: r for r in recs}
            def select(ids):
                feats = [(by_image[i].bbox[0], by_image[i].bbox[1]) for i in ids]
                labels = [by_image[i].category for i in ids]
                return feats, labels
            return select(splits["d"].train_ids), select(splits["d"].test_ids)

        domains = {
            "syn": dataset(5),
            "ref_a": dataset(5),            # identical draw
            "ref_b": dataset(9, (2.0, 2.0)),
        }
        ids = ("syn", "ref_a", "ref_b")
        cells = []
        for train_id in ids:
            (tf, tl), _ = domains[train_id]
            model = ToyModel.fit(tf, tl)
            for test_id in ids:
                _, (ef, el) = domains[test_id]
                cells.append((train_id, test_id,
                              MetricValue(model.accuracy(ef, el), "toy_accuracy")))
        g = normalize(build_matrix(cells, ids))
        assert g.ratios[0][1] == pytest.approx(1.0, abs=0.05)  # syn -> ref_a
        assert g.ratios[1][0] == pytest.approx(1.0, abs=0.05)  # ref_a -> syn
        s = score(g)
        weights = dict(zip(s.simulation.reference_ids, s.simulation.weights))
        assert weights["ref_a"] > weights["ref_b"]

    def test_model_save_load_round_trip(self, tmp_path):
        model = ToyModel(centroids={"a": (1.0, 2.0), "b": (3.5, -0.25)})
        model.save(tmp_path / "model.json")
        assert ToyModel.load(tmp_path / "model.json") == model

    def test_tie_breaks_toward_smaller_label(self):
        model = ToyModel(centroids={"b": (1.0, 0.0), "a": (-1.0, 0.0)})
        assert model.predict((0.0, 0.0)) == "a"

    def test_empty_test_set_rejected(self):
        model = ToyModel(centroids={"a": (0.0, 0.0)})
        with pytest.raises(ValueError):
            model.accuracy([], [])


class TestRunnerCli:
    def _prep_dataset(self, tmp_path: Path, seed: int = 7) -> Path:
        """Generate a toy dataset and a split manifest for it."""
        from gcveval.harmonize import split_manifest_doc, write_split_manifest

        path = write_toy_dataset(two_class_spec(seed=seed, sample_count=60), tmp_path)
        records = read_interchange(path)
        groups = filter_to_shared(records, LabelSpace.of(["ball", "cube"]))
        splits = make_splits({"toy": groups}, "auto", 0.2, seed=seed,
                             shared=LabelSpace.of(["ball", "cube"]))
        doc = split_manifest_doc(splits["toy"], pool=len(groups), test_fraction=0.2)
        manifest = tmp_path / "split.json"
        write_split_manifest(doc, manifest)
        return manifest

    def test_train_then_eval_protocol_line(self, tmp_path):
        manifest = self._prep_dataset(tmp_path)
        workdir = tmp_path / "work"
        train = subprocess.run(
            [sys.executable, "-m", "gcveval.toy_runner", "train",
             "--manifest", str(manifest), "--workdir", str(workdir), "--seed", "1"],
            capture_output=True, text=True)
        assert train.returncode == 0, train.stderr
        assert (workdir / "model.json").exists()

        ev = subprocess.run(
            [sys.executable, "-m", "gcveval.toy_runner", "eval",
             "--model", str(workdir), "--manifest", str(manifest),
             "--workdir", str(tmp_path / "evalwork")],
            capture_output=True, text=True)
        assert ev.returncode == 0, ev.stderr
        final = ev.stdout.strip().splitlines()[-1]
        doc = json.loads(final)
        assert doc["metric_name"] == "toy_accuracy"
        assert 0.0 <= doc["value"] <= 1.0

    def test_unreadable_manifest_exits_nonzero(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "gcveval.toy_runner", "train",
             "--manifest", str(tmp_path / "missing.json"),
             "--workdir", str(tmp_path), "--seed", "1"],
            capture_output=True, text=True)
        assert proc.returncode != 0
        assert "error" in proc.stderr.lower()

    def test_generate_mode(self, tmp_path):
        spec_path = write_toy_domain(tmp_path / "d.json", seed=1, sample_count=40)
        proc = subprocess.run(
            [sys.executable, "-m", "gcveval.toy_runner", "generate",
             "--spec", str(spec_path), "--out", str(tmp_path / "out")],
            capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert (tmp_path / "out" / "records.jsonl").exists()
