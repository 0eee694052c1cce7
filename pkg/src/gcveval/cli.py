"""Command-line surface: prep, run, matrix, score, report.

Exit codes are a stable scripting contract: 0 success, 2 validation or
domain error, 3 runner failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .config import load_config
from .errors import RunnerError, SchemaError, ValidationError
from .harmonize import prepare_experiment
from .matrix import CrossPerformanceMatrix, from_csv, load as load_matrix, normalize, save as save_matrix
from .orchestrator import collect, execute, plan
from .report import (
    QualityReport,
    build_report,
    render_csv,
    render_json,
    render_markdown,
    report_from_doc,
)

log = logging.getLogger("gcveval")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNNER = 3

CACHE_ENV_VAR = "GCVEVAL_CACHE_DIR"


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (TOML or JSON)")
    common.add_argument("--seed", type=int, help="override the config's experiment seed")
    common.add_argument("--cache-dir", help=f"override the cache root (also {CACHE_ENV_VAR})")
    common.add_argument("--format", choices=("json", "markdown", "csv"),
                        default="markdown", help="report rendering format")
    common.add_argument("--terse", action="store_true", help="print only the headline scores")
    common.add_argument("--keep-going", action="store_true",
                        help="attempt every cell before failing on runner errors")
    common.add_argument("--resume", action="store_true",
                        help="resume from cached cells (cached cells are always "
                             "reused; the flag documents intent in scripts)")
    common.add_argument("--verbose", "-v", action="store_true")
    return common


def _require_config(args: argparse.Namespace):
    if not args.config:
        raise ValidationError("--config is required for this command")
    config = load_config(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    return config


def _cache_dir_override(args: argparse.Namespace) -> Path | None:
    if args.cache_dir:
        return Path(args.cache_dir)
    env = os.environ.get(CACHE_ENV_VAR)
    return Path(env) if env else None


def cmd_prep(args: argparse.Namespace) -> int:
    config = _require_config(args)
    result = prepare_experiment(
        list(config.datasets),
        out_dir=config.splits.out_dir,
        train_size=config.splits.train_size,
        test_fraction=config.splits.test_fraction,
        seed=config.seed,
    )
    print(f"shared labels: {', '.join(result.shared.labels)}")
    for dataset_id, split in result.splits.items():
        path = result.manifest_paths[dataset_id]
        print(f"{dataset_id}: train={len(split.train_ids)} test={len(split.test_ids)} -> {path}")
    for warning in result.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    config = _require_config(args)
    the_plan = plan(config, cache_dir=_cache_dir_override(args))
    n = len(the_plan.dataset_ids)
    print(f"experiment {the_plan.experiment_id}: {n} train jobs, {n * n} cells "
          f"(cache {the_plan.cache_dir / the_plan.runner_fingerprint()})")
    results = execute(the_plan, keep_going=args.keep_going)
    matrix = collect(results, the_plan)
    save_matrix(matrix, config.execution.matrix_out)
    print(f"matrix written to {config.execution.matrix_out}")
    return EXIT_OK


def cmd_matrix(args: argparse.Namespace) -> int:
    path = Path(args.infile)
    if path.suffix.lower() == ".csv":
        matrix = from_csv(path.read_text(encoding="utf-8"), metric_name=args.metric_name)
    else:
        matrix = load_matrix(path)
    if args.normalize:
        if not isinstance(matrix, CrossPerformanceMatrix):
            raise ValidationError(f"{path} already holds a GCV matrix; nothing to normalize")
        matrix = normalize(matrix)
    if args.out:
        save_matrix(matrix, args.out)
        print(f"wrote {args.out}")
    else:
        from .matrix import to_json
        sys.stdout.write(to_json(matrix))
    return EXIT_OK


def _render(report: QualityReport, fmt: str, terse: bool) -> str:
    if fmt == "json":
        return render_json(report)
    if fmt == "csv":
        return render_csv(report, terse=terse)
    return render_markdown(report, terse=terse)


def cmd_score(args: argparse.Namespace) -> int:
    path = Path(args.matrix)
    matrix = load_matrix(path)
    report = build_report(matrix, experiment_id=args.experiment_id or path.stem,
                          seed=args.seed)
    text = _render(report, args.format, args.terse)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    try:
        doc = json.loads(Path(args.report).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{args.report} is not valid JSON: {exc}")
    report = report_from_doc(doc)
    text = _render(report, args.format, args.terse)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(
        prog="gcveval",
        description="Synthetic dataset quality via generalized cross-validation.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_prep = sub.add_parser("prep", parents=[common],
                            help="harmonize datasets and write split manifests")
    p_prep.set_defaults(func=cmd_prep)

    p_run = sub.add_parser("run", parents=[common],
                           help="execute the (N+1)^2 grid and write the matrix")
    p_run.set_defaults(func=cmd_run)

    p_matrix = sub.add_parser("matrix", parents=[common],
                              help="import/export/normalize matrix files")
    p_matrix.add_argument("infile", help="matrix file (JSON or CSV)")
    p_matrix.add_argument("--normalize", action="store_true",
                          help="emit the GCV matrix instead of raw values")
    p_matrix.add_argument("--out", help="output path (suffix picks JSON or CSV)")
    p_matrix.add_argument("--metric-name", default="metric",
                          help="metric name to attach when importing CSV")
    p_matrix.set_defaults(func=cmd_matrix)

    p_score = sub.add_parser("score", parents=[common],
                             help="compute A_o and S_o from a matrix file")
    p_score.add_argument("matrix", help="matrix file (raw values or GCV ratios)")
    p_score.add_argument("--out", help="write the rendered report here")
    p_score.add_argument("--experiment-id", help="label for the report header")
    p_score.set_defaults(func=cmd_score)

    p_report = sub.add_parser("report", parents=[common],
                              help="re-render a saved JSON quality report")
    p_report.add_argument("report", help="report JSON produced by `score --format json`")
    p_report.add_argument("--out", help="write the rendered report here")
    p_report.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,  # rebind to the current stderr on every invocation
    )
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except RunnerError as exc:
        print(f"runner error: {exc}", file=sys.stderr)
        return EXIT_RUNNER


if __name__ == "__main__":
    sys.exit(main())
