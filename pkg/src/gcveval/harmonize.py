"""Label-space harmonization and deterministic equal-size train/test splits.

The pipeline per dataset: parse annotations, intersect label spaces across
all datasets, drop non-shared annotations (and images left without any),
optionally drop images missing on disk, then carve seeded train/test splits
of identical training size. Each dataset ends up with two files in the prep
output directory::

    <out>/<dataset_id>/records.jsonl   # retained annotations, interchange format
    <out>/<dataset_id>/split.json      # the split manifest consumed by `run`

Splits use the repo's fully specified RNG (see :mod:`gcveval.rng`): image
ids are sorted lexicographically, Fisher-Yates shuffled on a per-dataset
substream of the experiment seed, and the first ``train_size`` ids become
the training set.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

from .annotations import FORMATS, AnnotationRecord, parse_annotations, write_interchange
from .errors import EmptyIntersection, InsufficientSamples, SchemaError
from .rng import shuffled, stream_for

log = logging.getLogger(__name__)

ROLE_SYNTHETIC = "synthetic_under_test"
ROLE_REFERENCE = "reference"

SPLIT_MANIFEST_NAME = "split.json"
RECORDS_NAME = "records.jsonl"

ImageGroups = dict[str, list[AnnotationRecord]]


@dataclass(frozen=True)
class LabelSpace:
    """Lexicographically sorted set of canonical labels."""

    labels: tuple[str, ...]

    @classmethod
    def of(cls, labels) -> "LabelSpace":
        return cls(tuple(sorted(set(labels))))

    def __contains__(self, label: str) -> bool:
        return label in self.labels

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class DatasetManifest:
    """Identity, format and file locations of one dataset in an experiment."""

    dataset_id: str
    role: str
    format: str
    image_dir: Path
    annotation_source: Path
    label_aliases: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.role not in (ROLE_SYNTHETIC, ROLE_REFERENCE):
            raise ValueError(f"unknown role {self.role!r} for dataset {self.dataset_id!r}")
        if self.format not in FORMATS:
            raise ValueError(f"unknown format {self.format!r} for dataset {self.dataset_id!r}")


@dataclass(frozen=True)
class HarmonizedSplit:
    """Deterministic train/test partition of one harmonized dataset."""

    dataset_id: str
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    seed: int
    shared_labels: LabelSpace

    def __post_init__(self) -> None:
        overlap = set(self.train_ids) & set(self.test_ids)
        if overlap:
            raise ValueError(f"train/test ids overlap for {self.dataset_id!r}: {sorted(overlap)[:5]}")


def intersect_label_spaces(spaces: list[LabelSpace]) -> LabelSpace:
    """Shared categories across all spaces, sorted; order-insensitive."""
    if len(spaces) < 2:
        raise ValueError(f"need at least two label spaces, got {len(spaces)}")
    shared = set(spaces[0].labels)
    for space in spaces[1:]:
        shared &= set(space.labels)
    if not shared:
        raise EmptyIntersection(
            "datasets share no labels after canonicalization; "
            "they cannot be compared under this framework"
        )
    return LabelSpace.of(shared)


def filter_to_shared(records: list[AnnotationRecord], shared: LabelSpace) -> ImageGroups:
    """Group records by image, keeping only shared categories.

    Non-shared annotations are discarded; images left with no shared-category
    annotation are dropped entirely. Idempotent.
    """
    if not len(shared):
        raise ValueError("shared label space is empty")
    groups: ImageGroups = {}
    for rec in records:
        if rec.category in shared:
            groups.setdefault(rec.image_id, []).append(rec)
    return groups


def _auto_train_size(pool_sizes: dict[str, int], test_fraction: float) -> int:
    """Largest T with T + ceil(test_fraction * T) <= min pool size."""
    smallest = min(pool_sizes.values())
    t = max(1, math.floor(smallest / (1.0 + test_fraction)))
    while t + math.ceil(test_fraction * t) > smallest and t > 1:
        t -= 1
    while (t + 1) + math.ceil(test_fraction * (t + 1)) <= smallest:
        t += 1
    return t


def make_splits(
    filtered: dict[str, ImageGroups],
    train_size: int | str,
    test_fraction: float,
    seed: int,
    shared: LabelSpace,
) -> dict[str, HarmonizedSplit]:
    """Carve equal-size training sets plus test carve-outs from each dataset.

    ``train_size`` may be an integer or ``"auto"``; auto resolves to the
    largest size whose train+test carve-out still fits the smallest dataset,
    so every test set stays non-empty for test_fraction > 0.
    """
    if not filtered:
        raise ValueError("no datasets to split")
    if not 0.0 <= test_fraction <= 1.0:
        raise ValueError(f"test_fraction must be in [0, 1], got {test_fraction}")
    for dataset_id, groups in filtered.items():
        if len(groups) < 2:
            raise InsufficientSamples(dataset_id, 2, len(groups))

    pools = {dataset_id: len(groups) for dataset_id, groups in filtered.items()}
    if train_size == "auto":
        size = _auto_train_size(pools, test_fraction)
    else:
        size = int(train_size)
        if size < 1:
            raise ValueError(f"train_size must be positive, got {size}")
        for dataset_id, pool in pools.items():
            if size > pool:
                raise InsufficientSamples(dataset_id, size, pool)

    test_count = math.ceil(test_fraction * size)
    splits: dict[str, HarmonizedSplit] = {}
    for dataset_id, groups in filtered.items():
        ids = shuffled(sorted(groups), stream_for(seed, dataset_id))
        n_test = min(test_count, pools[dataset_id] - size)
        splits[dataset_id] = HarmonizedSplit(
            dataset_id=dataset_id,
            train_ids=tuple(ids[:size]),
            test_ids=tuple(ids[size:size + n_test]),
            seed=seed,
            shared_labels=shared,
        )
    return splits


# --- split manifests (the prep -> run contract) -----------------------------

def split_manifest_doc(split: HarmonizedSplit, pool: int, test_fraction: float,
                       records_path: str = RECORDS_NAME) -> dict:
    return {
        "dataset_id": split.dataset_id,
        "seed": split.seed,
        "test_fraction": test_fraction,
        "shared_labels": list(split.shared_labels.labels),
        "train_ids": list(split.train_ids),
        "test_ids": list(split.test_ids),
        "counts": {"pool": pool, "train": len(split.train_ids), "test": len(split.test_ids)},
        "records_path": records_path,
    }


def write_split_manifest(doc: dict, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def read_split_manifest(path: str | Path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot read split manifest {path}: {exc}")
    for key in ("dataset_id", "seed", "shared_labels", "train_ids", "test_ids", "records_path"):
        if key not in doc:
            raise SchemaError(f"split manifest {path} lacks required key {key!r}")
    return doc


def load_split(path: str | Path) -> HarmonizedSplit:
    doc = read_split_manifest(path)
    return HarmonizedSplit(
        dataset_id=str(doc["dataset_id"]),
        train_ids=tuple(str(i) for i in doc["train_ids"]),
        test_ids=tuple(str(i) for i in doc["test_ids"]),
        seed=int(doc["seed"]),
        shared_labels=LabelSpace.of(str(s) for s in doc["shared_labels"]),
    )


# --- prep driver -------------------------------------------------------------

def _drop_missing_images(manifest: DatasetManifest, groups: ImageGroups) -> tuple[ImageGroups, list[str]]:
    """Drop image groups whose file is absent from the manifest's image_dir.

    Skipped (with a warning) when the directory itself does not exist, which
    is the norm for generated datasets that carry no image files.
    """
    warnings: list[str] = []
    image_dir = Path(manifest.image_dir)
    if not image_dir.is_dir():
        log.debug("image dir %s absent for %s; skipping on-disk check", image_dir, manifest.dataset_id)
        return groups, warnings
    on_disk = {p.stem for p in image_dir.iterdir() if p.is_file()}
    kept: ImageGroups = {}
    for image_id, records in groups.items():
        if image_id in on_disk:
            kept[image_id] = records
        else:
            warnings.append(f"{manifest.dataset_id}: image {image_id!r} missing on disk; dropped")
    for w in warnings:
        log.debug("%s", w)
    return kept, warnings


@dataclass
class PrepResult:
    splits: dict[str, HarmonizedSplit]
    shared: LabelSpace
    manifest_paths: dict[str, Path]
    warnings: list[str]


def prepare_experiment(
    manifests: list[DatasetManifest],
    out_dir: Path,
    train_size: int | str,
    test_fraction: float,
    seed: int,
) -> PrepResult:
    """Run the full prep pipeline and write per-dataset manifests under out_dir."""
    ids = [m.dataset_id for m in manifests]
    if len(set(ids)) != len(ids):
        raise ValueError(f"dataset ids are not unique: {ids}")
    synthetic = [m for m in manifests if m.role == ROLE_SYNTHETIC]
    if len(synthetic) != 1:
        raise ValueError(
            f"exactly one dataset must have role {ROLE_SYNTHETIC!r}, got {len(synthetic)}"
        )
    if len(manifests) < 2:
        raise ValueError("an experiment needs the synthetic dataset plus at least one reference")

    parsed: dict[str, list[AnnotationRecord]] = {}
    for m in manifests:
        parsed[m.dataset_id] = parse_annotations(m.format, m.annotation_source, m.label_aliases)

    shared = intersect_label_spaces([
        LabelSpace.of(r.category for r in records) for records in parsed.values()
    ])

    warnings: list[str] = []
    filtered: dict[str, ImageGroups] = {}
    for m in manifests:
        groups = filter_to_shared(parsed[m.dataset_id], shared)
        groups, dropped = _drop_missing_images(m, groups)
        warnings.extend(dropped)
        filtered[m.dataset_id] = groups

    splits = make_splits(filtered, train_size, test_fraction, seed, shared)

    manifest_paths: dict[str, Path] = {}
    for m in manifests:
        dataset_dir = Path(out_dir) / m.dataset_id
        groups = filtered[m.dataset_id]
        retained = [rec for image_id in sorted(groups) for rec in groups[image_id]]
        write_interchange(retained, dataset_dir / RECORDS_NAME)
        doc = split_manifest_doc(splits[m.dataset_id], pool=len(groups), test_fraction=test_fraction)
        path = dataset_dir / SPLIT_MANIFEST_NAME
        write_split_manifest(doc, path)
        manifest_paths[m.dataset_id] = path

    return PrepResult(splits=splits, shared=shared, manifest_paths=manifest_paths, warnings=warnings)
