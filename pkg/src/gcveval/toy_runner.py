"""Built-in runner implementing the external train/eval protocol at toy scale.

Usable as ``python -m gcveval.toy_runner`` or the ``gcveval-toy-runner``
console script. Three modes:

* ``generate --spec spec.json --out DIR`` writes a toy dataset's
  ``records.jsonl`` for prep to consume.
* ``train --manifest split.json --workdir DIR --seed N`` fits centroids on
  the manifest's training ids and writes ``model.json`` into the workdir.
* ``eval --model DIR --manifest split.json --workdir DIR`` scores the model
  on the manifest's test ids and prints the protocol's final stdout line::

      {"metric_name": "toy_accuracy", "value": 0.97}

Unreadable manifests or empty test sets exit non-zero, exercising the
orchestrator's failure handling.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .annotations import read_interchange
from .errors import GcvEvalError
from .harmonize import read_split_manifest
from .toyworld import (
    MODEL_FILE_NAME,
    TOY_METRIC_NAME,
    ToyModel,
    features_and_labels,
    spec_from_doc,
    write_toy_dataset,
)


def _load_manifest_records(manifest_path: Path):
    doc = read_split_manifest(manifest_path)
    records_path = manifest_path.parent / doc["records_path"]
    return doc, read_interchange(records_path)


def cmd_generate(args: argparse.Namespace) -> int:
    spec_doc = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    spec = spec_from_doc(spec_doc)
    path = write_toy_dataset(spec, args.out)
    print(f"wrote {spec.sample_count} samples to {path}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    doc, records = _load_manifest_records(Path(args.manifest))
    feats, labels = features_and_labels(records, doc["train_ids"])
    model = ToyModel.fit(feats, labels)
    workdir = Path(args.workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    model.save(workdir / MODEL_FILE_NAME)
    print(f"fit {len(model.centroids)} centroids on {len(feats)} samples "
          f"from {doc['dataset_id']} (seed {args.seed})", file=sys.stderr)
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    model = ToyModel.load(Path(args.model) / MODEL_FILE_NAME)
    doc, records = _load_manifest_records(Path(args.manifest))
    feats, labels = features_and_labels(records, doc["test_ids"])
    value = model.accuracy(feats, labels)
    print(f"scored {len(feats)} test samples from {doc['dataset_id']}", file=sys.stderr)
    print(json.dumps({"metric_name": TOY_METRIC_NAME, "value": value}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gcveval-toy-runner",
        description="Toy nearest-centroid runner speaking the gcveval runner protocol.",
    )
    sub = parser.add_subparsers(dest="mode", required=True)

    p_gen = sub.add_parser("generate", help="write a toy dataset from a domain spec")
    p_gen.add_argument("--spec", required=True, help="toy domain spec JSON")
    p_gen.add_argument("--out", required=True, help="output dataset directory")
    p_gen.set_defaults(func=cmd_generate)

    p_train = sub.add_parser("train", help="fit centroids on a split manifest's train ids")
    p_train.add_argument("--manifest", required=True)
    p_train.add_argument("--workdir", required=True)
    p_train.add_argument("--seed", required=True, type=int)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="score a model on a split manifest's test ids")
    p_eval.add_argument("--model", required=True)
    p_eval.add_argument("--manifest", required=True)
    p_eval.add_argument("--workdir", required=True)
    p_eval.set_defaults(func=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (GcvEvalError, OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"toy-runner error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
