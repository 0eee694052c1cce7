"""Experiment configuration: one TOML or JSON document drives prep and run.

All relative paths are resolved against the config file's directory. The
``runner`` and ``execution`` sections are only required by ``run``; ``prep``
works from ``datasets`` and ``splits`` alone.

Schema (TOML shown; the JSON shape is identical)::

    [experiment]
    id = "toy"                    # optional, defaults to the config file stem
    seed = 7                      # optional 64-bit unsigned, default 0

    [[datasets]]
    id = "sim_city"
    role = "synthetic_under_test" # exactly one; others are "reference"
    format = "kitti_txt"          # kitti_txt | coco_json | yolo_txt | interchange
    annotations = "sim/labels"    # file or directory, format-dependent
    images = "sim/images"         # image dir for the on-disk existence check
    [datasets.label_aliases]      # optional raw -> canonical label map
    van = "car"

    [splits]
    out_dir = "prep"              # split manifests land in <out_dir>/<id>/
    train_size = "auto"           # or an integer
    test_fraction = 0.2

    [runner]
    train = "{python} -m gcveval.toy_runner train --manifest {train_manifest} --workdir {workdir} --seed {seed}"
    eval = "{python} -m gcveval.toy_runner eval --model {model_artifact} --manifest {test_manifest} --workdir {workdir}"
    metric_name = "toy_accuracy"
    timeout_seconds = 600

    [execution]
    max_parallel_cells = 1
    parallel_training = false     # training runs sequentially unless flipped
    cache_dir = ".gcv-cache"
    matrix_out = "matrix.json"
"""

from __future__ import annotations

import json
import string
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .annotations import FORMATS
from .errors import ConfigError
from .harmonize import ROLE_REFERENCE, ROLE_SYNTHETIC, DatasetManifest

TRAIN_PLACEHOLDERS = frozenset({"train_manifest", "workdir", "seed"})
EVAL_PLACEHOLDERS = frozenset({"model_artifact", "test_manifest", "workdir"})
EXTRA_PLACEHOLDERS = frozenset({"python"})


@dataclass(frozen=True)
class RunnerSpec:
    """External train/eval command contract.

    Templates name their inputs with {placeholders}; each token of the
    (shlex-split) template is substituted independently, so paths containing
    spaces survive. {python} always expands to the current interpreter.
    """

    train_command_template: str
    eval_command_template: str
    timeout_seconds: float
    metric_name: str

    def __post_init__(self) -> None:
        if self.timeout_seconds <= 0:
            raise ValueError(f"timeout_seconds must be positive, got {self.timeout_seconds}")
        if not self.metric_name:
            raise ValueError("metric_name must be non-empty")
        _check_template("train", self.train_command_template, TRAIN_PLACEHOLDERS)
        _check_template("eval", self.eval_command_template, EVAL_PLACEHOLDERS)

    def fingerprint_payload(self) -> dict:
        return {
            "train": self.train_command_template,
            "eval": self.eval_command_template,
            "timeout_seconds": self.timeout_seconds,
            "metric_name": self.metric_name,
        }


def _check_template(which: str, template: str, required: frozenset[str]) -> None:
    try:
        fields = {f for _, f, _, _ in string.Formatter().parse(template) if f is not None}
    except ValueError as exc:
        raise ValueError(f"{which} command template is malformed: {exc}")
    missing = required - fields
    if missing:
        raise ValueError(f"{which} command template lacks placeholders: {sorted(missing)}")
    unknown = fields - required - EXTRA_PLACEHOLDERS
    if unknown:
        raise ValueError(f"{which} command template has unknown placeholders: {sorted(unknown)}")


@dataclass(frozen=True)
class SplitSettings:
    out_dir: Path
    train_size: int | str = "auto"
    test_fraction: float = 0.2


@dataclass(frozen=True)
class ExecutionSettings:
    max_parallel_cells: int = 1
    parallel_training: bool = False  # training is assumed resource-heavy
    cache_dir: Path = Path(".gcv-cache")
    matrix_out: Path = Path("matrix.json")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment_id: str
    seed: int
    datasets: tuple[DatasetManifest, ...]
    splits: SplitSettings
    runner: RunnerSpec | None
    execution: ExecutionSettings
    base_dir: Path = field(compare=False, default=Path("."))

    def split_manifest_path(self, dataset_id: str) -> Path:
        return self.splits.out_dir / dataset_id / "split.json"

    def ordered_dataset_ids(self) -> tuple[str, ...]:
        """Declaration order with the synthetic dataset forced to index 0."""
        synth = [m.dataset_id for m in self.datasets if m.role == ROLE_SYNTHETIC]
        refs = [m.dataset_id for m in self.datasets if m.role != ROLE_SYNTHETIC]
        return tuple(synth + refs)


def _expect(mapping: dict, key: str, types, path: str, default=None, required: bool = False):
    if key not in mapping:
        if required:
            raise ConfigError(f"{path}.{key}", "required field is missing")
        return default
    value = mapping[key]
    if not isinstance(value, types):
        tn = types.__name__ if isinstance(types, type) else "/".join(t.__name__ for t in types)
        raise ConfigError(f"{path}.{key}", f"expected {tn}, got {type(value).__name__}")
    return value


def _parse_dataset(entry: dict, idx: int, base: Path) -> DatasetManifest:
    path = f"datasets[{idx}]"
    if not isinstance(entry, dict):
        raise ConfigError(path, "expected a table/object")
    dataset_id = _expect(entry, "id", str, path, required=True)
    role = _expect(entry, "role", str, path, default=ROLE_REFERENCE)
    if role not in (ROLE_SYNTHETIC, ROLE_REFERENCE):
        raise ConfigError(f"{path}.role", f"must be {ROLE_SYNTHETIC!r} or {ROLE_REFERENCE!r}, got {role!r}")
    fmt = _expect(entry, "format", str, path, required=True)
    if fmt not in FORMATS:
        raise ConfigError(f"{path}.format", f"must be one of {FORMATS}, got {fmt!r}")
    annotations = _expect(entry, "annotations", str, path, required=True)
    images = _expect(entry, "images", str, path, default="")
    aliases = _expect(entry, "label_aliases", dict, path, default={})
    for k, v in aliases.items():
        if not isinstance(k, str) or not isinstance(v, str):
            raise ConfigError(f"{path}.label_aliases", "keys and values must be strings")
    return DatasetManifest(
        dataset_id=dataset_id,
        role=role,
        format=fmt,
        image_dir=(base / images) if images else base / f"_no_images_{dataset_id}",
        annotation_source=base / annotations,
        label_aliases=dict(aliases),
    )


def _parse_runner(section: dict, base_path: str) -> RunnerSpec:
    train = _expect(section, "train", str, base_path, required=True)
    eval_ = _expect(section, "eval", str, base_path, required=True)
    metric = _expect(section, "metric_name", str, base_path, required=True)
    timeout = _expect(section, "timeout_seconds", (int, float), base_path, default=600)
    try:
        return RunnerSpec(
            train_command_template=train,
            eval_command_template=eval_,
            timeout_seconds=float(timeout),
            metric_name=metric,
        )
    except ValueError as exc:
        raise ConfigError(base_path, str(exc))


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse and validate an experiment config document."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(str(path), "config file not found")
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(str(path), f"invalid JSON: {exc}")
    else:
        try:
            doc = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(str(path), f"invalid TOML: {exc}")
    if not isinstance(doc, dict):
        raise ConfigError(str(path), "top-level value must be a table/object")
    base = path.resolve().parent

    experiment = _expect(doc, "experiment", dict, "", default={})
    experiment_id = _expect(experiment, "id", str, "experiment", default=path.stem)
    seed = _expect(experiment, "seed", int, "experiment", default=0)
    if seed < 0 or seed >= 2**64:
        raise ConfigError("experiment.seed", f"must be a 64-bit unsigned integer, got {seed}")

    raw_datasets = _expect(doc, "datasets", list, "", required=True)
    if len(raw_datasets) < 2:
        raise ConfigError("datasets", f"need the synthetic dataset plus at least one reference, got {len(raw_datasets)}")
    datasets = tuple(_parse_dataset(d, i, base) for i, d in enumerate(raw_datasets))
    ids = [m.dataset_id for m in datasets]
    if len(set(ids)) != len(ids):
        raise ConfigError("datasets", f"dataset ids are not unique: {ids}")
    n_synth = sum(1 for m in datasets if m.role == ROLE_SYNTHETIC)
    if n_synth != 1:
        raise ConfigError("datasets", f"exactly one dataset must have role {ROLE_SYNTHETIC!r}, found {n_synth}")

    splits_sec = _expect(doc, "splits", dict, "", default={})
    train_size = splits_sec.get("train_size", "auto")
    if isinstance(train_size, bool) or not isinstance(train_size, (int, str)):
        raise ConfigError("splits.train_size", f"expected integer or 'auto', got {train_size!r}")
    if isinstance(train_size, str) and train_size != "auto":
        raise ConfigError("splits.train_size", f"expected integer or 'auto', got {train_size!r}")
    test_fraction = _expect(splits_sec, "test_fraction", (int, float), "splits", default=0.2)
    if not 0.0 <= float(test_fraction) <= 1.0:
        raise ConfigError("splits.test_fraction", f"must be in [0, 1], got {test_fraction}")
    splits = SplitSettings(
        out_dir=base / _expect(splits_sec, "out_dir", str, "splits", default="prep"),
        train_size=train_size,
        test_fraction=float(test_fraction),
    )

    runner_sec = _expect(doc, "runner", dict, "", default=None)
    runner = _parse_runner(runner_sec, "runner") if runner_sec is not None else None

    exec_sec = _expect(doc, "execution", dict, "", default={})
    max_parallel = _expect(exec_sec, "max_parallel_cells", int, "execution", default=1)
    if max_parallel < 1:
        raise ConfigError("execution.max_parallel_cells", f"must be >= 1, got {max_parallel}")
    execution = ExecutionSettings(
        max_parallel_cells=max_parallel,
        parallel_training=_expect(exec_sec, "parallel_training", bool, "execution", default=False),
        cache_dir=base / _expect(exec_sec, "cache_dir", str, "execution", default=".gcv-cache"),
        matrix_out=base / _expect(exec_sec, "matrix_out", str, "execution", default="matrix.json"),
    )

    return ExperimentConfig(
        experiment_id=experiment_id,
        seed=seed,
        datasets=datasets,
        splits=splits,
        runner=runner,
        execution=execution,
        base_dir=base,
    )
