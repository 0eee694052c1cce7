"""Seconds-scale synthetic domains for exercising the full pipeline.

A toy domain is a mixture of isotropic 2D Gaussians, one per class. Samples
are serialized as interchange annotation records (the feature point becomes
the box corner, with a fixed 1x1 extent), so toy datasets flow through
prep, split and run exactly like real ones. Domain shift is injected with
two knobs: ``mean_offset`` translates every class mean and ``spread_scale``
widens every class.

Class counts are allocated exactly by largest remainder on the priors, not
sampled, so a fixed seed reproduces byte-identical datasets. All randomness
comes from the repo's SplitMix64 streams (see :mod:`gcveval.rng`).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .annotations import INTERCHANGE, AnnotationRecord, write_interchange
from .errors import SchemaError
from .rng import SplitMix64

TOY_METRIC_NAME = "toy_accuracy"
MODEL_FILE_NAME = "model.json"


@dataclass(frozen=True)
class ToyClassSpec:
    label: str
    mean: tuple[float, float]
    spread: float

    def __post_init__(self) -> None:
        if self.spread <= 0:
            raise ValueError(f"class {self.label!r} spread must be positive, got {self.spread}")
        if not self.label or self.label != self.label.strip().lower():
            raise ValueError(f"class label {self.label!r} is not canonical")


@dataclass(frozen=True)
class ToyDomainSpec:
    classes: tuple[ToyClassSpec, ...]
    priors: tuple[float, ...]
    sample_count: int
    seed: int
    mean_offset: tuple[float, float] = (0.0, 0.0)
    spread_scale: float = 1.0

    def __post_init__(self) -> None:
        if len(self.classes) < 1:
            raise ValueError("need at least one class")
        if len(self.priors) != len(self.classes):
            raise ValueError(
                f"{len(self.priors)} priors for {len(self.classes)} classes"
            )
        if any(p < 0 for p in self.priors) or abs(sum(self.priors) - 1.0) > 1e-9:
            raise ValueError(f"priors must be non-negative and sum to 1, got {self.priors}")
        if self.spread_scale <= 0:
            raise ValueError(f"spread_scale must be positive, got {self.spread_scale}")
        labels = [c.label for c in self.classes]
        if len(set(labels)) != len(labels):
            raise ValueError(f"class labels are not unique: {labels}")
        counts = allocate_counts(self.priors, self.sample_count)
        if any(c < 2 for c in counts):
            raise ValueError(
                f"sample_count {self.sample_count} allocates fewer than 2 samples "
                f"to some class: {dict(zip(labels, counts))}"
            )


def allocate_counts(priors: tuple[float, ...], total: int) -> tuple[int, ...]:
    """Largest-remainder allocation: exact counts, deterministic ties."""
    quotas = [p * total for p in priors]
    counts = [int(q) for q in quotas]
    shortfall = total - sum(counts)
    order = sorted(range(len(priors)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:shortfall]:
        counts[i] += 1
    return tuple(counts)


def generate_toy_dataset(spec: ToyDomainSpec) -> list[AnnotationRecord]:
    """Sample the domain into interchange records, deterministically."""
    rng = SplitMix64(spec.seed)
    counts = allocate_counts(spec.priors, spec.sample_count)
    records: list[AnnotationRecord] = []
    for cls, count in zip(spec.classes, counts):
        mx = cls.mean[0] + spec.mean_offset[0]
        my = cls.mean[1] + spec.mean_offset[1]
        sigma = cls.spread * spec.spread_scale
        for k in range(count):
            z1, z2 = rng.normal_pair()
            x = mx + sigma * z1
            y = my + sigma * z2
            records.append(AnnotationRecord(
                image_id=f"{cls.label}_{k:05d}",
                category=cls.label,
                bbox=(x, y, x + 1.0, y + 1.0),
                source_format=INTERCHANGE,
            ))
    return records


def write_toy_dataset(spec: ToyDomainSpec, out_dir: str | Path,
                      records_name: str = "records.jsonl") -> Path:
    out = Path(out_dir)
    path = out / records_name
    write_interchange(generate_toy_dataset(spec), path)
    return path


def spec_from_doc(doc: dict) -> ToyDomainSpec:
    """Build a domain spec from its JSON document form."""
    try:
        classes = tuple(
            ToyClassSpec(
                label=str(c["label"]),
                mean=(float(c["mean"][0]), float(c["mean"][1])),
                spread=float(c["spread"]),
            )
            for c in doc["classes"]
        )
        offset = doc.get("mean_offset", [0.0, 0.0])
        return ToyDomainSpec(
            classes=classes,
            priors=tuple(float(p) for p in doc["priors"]),
            sample_count=int(doc["sample_count"]),
            seed=int(doc["seed"]),
            mean_offset=(float(offset[0]), float(offset[1])),
            spread_scale=float(doc.get("spread_scale", 1.0)),
        )
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise SchemaError(f"bad toy domain spec: {exc}")


# --- the trivial learner ------------------------------------------------------

def features_and_labels(records: list[AnnotationRecord],
                        image_ids) -> tuple[list[tuple[float, float]], list[str]]:
    """Feature point and label per listed image (first record wins)."""
    by_image: dict[str, AnnotationRecord] = {}
    for rec in records:
        by_image.setdefault(rec.image_id, rec)
    feats: list[tuple[float, float]] = []
    labels: list[str] = []
    for image_id in image_ids:
        rec = by_image.get(image_id)
        if rec is None:
            raise SchemaError(f"split manifest lists image {image_id!r} absent from records")
        feats.append((rec.bbox[0], rec.bbox[1]))
        labels.append(rec.category)
    return feats, labels


@dataclass(frozen=True)
class ToyModel:
    """Nearest-centroid classifier; ties break toward the smaller label."""

    centroids: dict[str, tuple[float, float]]

    @classmethod
    def fit(cls, features, labels) -> "ToyModel":
        sums: dict[str, list[float]] = {}
        for (x, y), label in zip(features, labels):
            acc = sums.setdefault(label, [0.0, 0.0, 0.0])
            acc[0] += x
            acc[1] += y
            acc[2] += 1.0
        if not sums:
            raise ValueError("cannot fit a model on zero samples")
        return cls(centroids={
            label: (sx / n, sy / n) for label, (sx, sy, n) in sorted(sums.items())
        })

    def predict(self, feature: tuple[float, float]) -> str:
        x, y = feature
        best_label = ""
        best_d2 = float("inf")
        for label in sorted(self.centroids):
            cx, cy = self.centroids[label]
            d2 = (x - cx) ** 2 + (y - cy) ** 2
            if d2 < best_d2:
                best_d2 = d2
                best_label = label
        return best_label

    def accuracy(self, features, labels) -> float:
        if not features:
            raise ValueError("cannot score an empty test set")
        hits = sum(1 for f, lbl in zip(features, labels) if self.predict(f) == lbl)
        return hits / len(features)

    def save(self, path: str | Path) -> None:
        doc = {"centroids": {k: list(v) for k, v in self.centroids.items()}}
        Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ToyModel":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
            centroids = {
                str(k): (float(v[0]), float(v[1]))
                for k, v in doc["centroids"].items()
            }
        except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError, IndexError) as exc:
            raise SchemaError(f"bad toy model file {path}: {exc}")
        return cls(centroids=centroids)
