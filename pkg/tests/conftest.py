from __future__ import annotations

import json
import shutil
import sys
import textwrap
from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parent.parent
FIXTURES = REPO_ROOT / "fixtures"
VKITTI_TABLE3 = FIXTURES / "vkitti_table3.json"
SAMPLE_CORPUS = FIXTURES / "sample_corpus"

# Table values from the published vehicle-detection experiment, used as
# golden inputs throughout the suite.
TABLE3_CELLS = (
    (0.936, 0.618, 0.365),
    (0.759, 0.985, 0.256),
    (0.885, 0.642, 0.712),
)
TABLE3_IDS = ("vkitti_syn", "kitti", "bdd100k")
TABLE4_ROUNDED = (
    (1.00, 0.66, 0.39),
    (0.77, 1.00, 0.26),
    (1.24, 0.90, 1.00),
)


@pytest.fixture
def corpus_copy(tmp_path: Path) -> Path:
    """Fresh copy of the bundled three-format corpus."""
    dest = tmp_path / "corpus"
    shutil.copytree(SAMPLE_CORPUS, dest)
    return dest


def write_toy_domain(path: Path, seed: int, sample_count: int = 240,
                     mean_offset=(0.0, 0.0), separation: float = 6.0) -> Path:
    """Write a two-class toy domain spec document."""
    doc = {
        "seed": seed,
        "sample_count": sample_count,
        "classes": [
            {"label": "ball", "mean": [0.0, 0.0], "spread": 1.0},
            {"label": "cube", "mean": [separation, 0.0], "spread": 1.0},
        ],
        "priors": [0.5, 0.5],
        "mean_offset": list(mean_offset),
        "spread_scale": 1.0,
    }
    path.write_text(json.dumps(doc, indent=2))
    return path


def toy_experiment_config(
    root: Path,
    dataset_dirs: dict[str, Path],
    synthetic_id: str,
    seed: int = 7,
    max_parallel: int = 2,
    train_template: str | None = None,
    eval_template: str | None = None,
    cache_dir: str = "cache",
) -> Path:
    """Write a toy experiment config; dataset dirs must hold records.jsonl."""
    train = train_template or (
        "{python} -m gcveval.toy_runner train --manifest {train_manifest} "
        "--workdir {workdir} --seed {seed}"
    )
    ev = eval_template or (
        "{python} -m gcveval.toy_runner eval --model {model_artifact} "
        "--manifest {test_manifest} --workdir {workdir}"
    )
    datasets = []
    for dataset_id, ddir in dataset_dirs.items():
        role = "synthetic_under_test" if dataset_id == synthetic_id else "reference"
        datasets.append({
            "id": dataset_id,
            "role": role,
            "format": "interchange",
            "annotations": str(ddir / "records.jsonl"),
        })
    doc = {
        "experiment": {"id": "toy", "seed": seed},
        "datasets": datasets,
        "splits": {"out_dir": "prep", "train_size": "auto", "test_fraction": 0.2},
        "runner": {
            "train": train,
            "eval": ev,
            "metric_name": "toy_accuracy",
            "timeout_seconds": 120,
        },
        "execution": {
            "max_parallel_cells": max_parallel,
            "cache_dir": cache_dir,
            "matrix_out": "matrix.json",
        },
    }
    path = root / "exp.json"
    path.write_text(json.dumps(doc, indent=2))
    return path


def generate_toy_data(root: Path, seeds: dict[str, int], sample_count: int = 240,
                      offsets: dict[str, tuple[float, float]] | None = None) -> dict[str, Path]:
    """Generate toy datasets via the library, one directory per dataset id."""
    from gcveval.toyworld import spec_from_doc, write_toy_dataset

    offsets = offsets or {}
    dirs: dict[str, Path] = {}
    for dataset_id, seed in seeds.items():
        spec_path = write_toy_domain(
            root / f"domain_{dataset_id}.json", seed=seed, sample_count=sample_count,
            mean_offset=offsets.get(dataset_id, (0.0, 0.0)),
        )
        spec = spec_from_doc(json.loads(spec_path.read_text()))
        out = root / "data" / dataset_id
        write_toy_dataset(spec, out)
        dirs[dataset_id] = out
    return dirs


def write_counting_wrapper(path: Path) -> Path:
    """A runner wrapper that counts eval invocations and can simulate a crash.

    Usage in templates: `{python} <wrapper> <counter-file> <mode> <args...>`.
    If `<counter-file>.trip` exists and holds an integer K, the K-th eval
    invocation exits 41 before doing any work.
    """
    path.write_text(textwrap.dedent("""\
        import pathlib
        import runpy
        import sys

        counter = pathlib.Path(sys.argv[1])
        mode = sys.argv[2]
        if mode == "eval":
            # O_APPEND keeps concurrent wrapper processes from clobbering
            with counter.open("a") as fh:
                fh.write("x\\n")
            n = len(counter.read_text().splitlines())
            trip = counter.with_suffix(".trip")
            if trip.exists() and n >= int(trip.read_text()):
                print("synthetic crash", file=sys.stderr)
                sys.exit(41)
        sys.argv = ["gcveval-toy-runner"] + sys.argv[2:]
        runpy.run_module("gcveval.toy_runner", run_name="__main__")
    """))
    return path


def wrapper_templates(wrapper: Path, counter: Path) -> tuple[str, str]:
    train = (
        f"{{python}} {wrapper} {counter} train --manifest {{train_manifest}} "
        "--workdir {workdir} --seed {seed}"
    )
    ev = (
        f"{{python}} {wrapper} {counter} eval --model {{model_artifact}} "
        "--manifest {test_manifest} --workdir {workdir}"
    )
    return train, ev


def eval_invocations(counter: Path) -> int:
    return len(counter.read_text().splitlines()) if counter.exists() else 0


def run_cli(*argv: str) -> tuple[int, str, str]:
    """Invoke the CLI in-process, capturing stdout/stderr."""
    import contextlib
    import io

    from gcveval.cli import main

    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main(list(argv))
    return code, out.getvalue(), err.getvalue()


def python_exe() -> str:
    return sys.executable
