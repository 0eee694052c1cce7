"""Drives the (N+1)^2 train/eval grid through external runner commands.

Each dataset's model is trained exactly once and reused across its row of
evaluations. Training jobs run sequentially (they are assumed
resource-heavy); evaluation cells run in a thread pool up to
``max_parallel_cells``, each an isolated subprocess.

Runner protocol
---------------
The train command receives ``{train_manifest}`` (a split manifest path),
``{workdir}`` (the artifact directory it must write its model into) and
``{seed}``. The eval command receives ``{model_artifact}`` (that artifact
directory), ``{test_manifest}`` and a scratch ``{workdir}``; it must print,
as the final line of stdout, a single-line JSON object::

    {"metric_name": "<name>", "value": <number>}

Everything else on stdout/stderr is captured verbatim into log files next
to the cell result. Exit code 0 means success; anything else is a
RunnerFailure.

Cache layout
------------
``cache_dir/<fingerprint>/<train_id>/<test_id>.json`` per completed cell and
``cache_dir/<fingerprint>/<train_id>/artifact/`` per trained model, where
the fingerprint hashes the runner spec and seed. Cell files additionally
record the train/test split-manifest hashes they were computed from, so
editing one dataset's split invalidates exactly its row and column. Every
result is persisted through an atomic rename as soon as it completes;
interrupting a run loses at most the in-flight cells, and a warmed cache
replays with zero runner invocations.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import shlex
import shutil
import subprocess
import sys
import tempfile
import threading
import time
from concurrent.futures import FIRST_EXCEPTION, ThreadPoolExecutor, wait
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .config import ExperimentConfig, RunnerSpec
from .errors import (
    ConfigError,
    MissingSplit,
    ProtocolError,
    RunnerError,
    RunnerFailure,
    RunnerTimeout,
)
from .harmonize import DatasetManifest, HarmonizedSplit, load_split
from .matrix import CrossPerformanceMatrix, MetricValue, build_matrix

log = logging.getLogger(__name__)

TRAIN_META_NAME = "train_meta.json"
ARTIFACT_DIR_NAME = "artifact"


@dataclass(frozen=True)
class CellResult:
    """One completed (train, test) measurement."""

    train_id: str
    test_id: str
    metric: MetricValue
    runner_fingerprint: str
    wall_time_seconds: float
    completed_at: str


@dataclass(frozen=True)
class ExperimentPlan:
    """Validated enumeration of N+1 training jobs and (N+1)^2 eval cells."""

    experiment_id: str
    dataset_ids: tuple[str, ...]  # synthetic first
    manifests: tuple[DatasetManifest, ...]
    splits: dict[str, HarmonizedSplit]
    split_paths: dict[str, Path]
    split_hashes: dict[str, str]
    runner: RunnerSpec
    seed: int
    max_parallel_cells: int
    cache_dir: Path
    parallel_training: bool = False

    @property
    def train_jobs(self) -> tuple[str, ...]:
        return self.dataset_ids

    @property
    def cells(self) -> tuple[tuple[str, str], ...]:
        return tuple(
            (train_id, test_id)
            for train_id in self.dataset_ids
            for test_id in self.dataset_ids
        )

    def runner_fingerprint(self) -> str:
        payload = dict(self.runner.fingerprint_payload())
        payload["seed"] = self.seed
        blob = json.dumps(payload, sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


def plan(config: ExperimentConfig, cache_dir: Path | None = None) -> ExperimentPlan:
    """Validate the config against on-disk split manifests and enumerate the grid."""
    if config.runner is None:
        raise ConfigError("runner", "section is required to execute an experiment")
    split_paths: dict[str, Path] = {}
    split_hashes: dict[str, str] = {}
    splits: dict[str, HarmonizedSplit] = {}
    for m in config.datasets:
        path = config.split_manifest_path(m.dataset_id)
        if not path.exists():
            raise MissingSplit(m.dataset_id, str(path))
        splits[m.dataset_id] = load_split(path)
        split_paths[m.dataset_id] = path
        split_hashes[m.dataset_id] = hashlib.sha256(path.read_bytes()).hexdigest()
    return ExperimentPlan(
        experiment_id=config.experiment_id,
        dataset_ids=config.ordered_dataset_ids(),
        manifests=config.datasets,
        splits=splits,
        split_paths=split_paths,
        split_hashes=split_hashes,
        runner=config.runner,
        seed=config.seed,
        max_parallel_cells=config.execution.max_parallel_cells,
        cache_dir=cache_dir if cache_dir is not None else config.execution.cache_dir,
        parallel_training=config.execution.parallel_training,
    )


def collect(results, plan: ExperimentPlan) -> CrossPerformanceMatrix:
    """Assemble the cross-performance matrix in the plan's dataset order."""
    return build_matrix(
        ((r.train_id, r.test_id, r.metric) for r in results),
        plan.dataset_ids,
        metric_name=plan.runner.metric_name,
    )


def _write_json_atomic(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(doc, indent=2) + "\n")
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _render_command(template: str, mapping: dict[str, str]) -> list[str]:
    # Split first, substitute per token: paths with spaces stay one argument.
    return [token.format_map(mapping) for token in shlex.split(template)]


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class GridExecutor:
    """Owns all mutable execution state: cache index, write lock, failure list."""

    def __init__(self, plan: ExperimentPlan, keep_going: bool = False):
        self.plan = plan
        self.keep_going = keep_going
        self.fingerprint = plan.runner_fingerprint()
        self.root = Path(plan.cache_dir) / self.fingerprint
        self._write_lock = threading.Lock()
        self._stop = threading.Event()
        self._mapping_base = {"python": sys.executable}

    # -- paths ---------------------------------------------------------------

    def row_dir(self, train_id: str) -> Path:
        return self.root / train_id

    def artifact_dir(self, train_id: str) -> Path:
        return self.row_dir(train_id) / ARTIFACT_DIR_NAME

    def cell_path(self, train_id: str, test_id: str) -> Path:
        return self.row_dir(train_id) / f"{test_id}.json"

    def _cell_fingerprint(self, train_id: str, test_id: str) -> str:
        blob = "\n".join([
            self.fingerprint,
            self.plan.split_hashes[train_id],
            self.plan.split_hashes[test_id],
        ]).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]

    # -- training ------------------------------------------------------------

    def _train_is_fresh(self, train_id: str) -> bool:
        meta_path = self.row_dir(train_id) / TRAIN_META_NAME
        if not meta_path.exists():
            return False
        try:
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError):
            return False
        return meta.get("train_manifest_sha256") == self.plan.split_hashes[train_id]

    def ensure_artifact(self, train_id: str) -> Path:
        """Train once per dataset; reuse the artifact while its inputs stand."""
        artifact = self.artifact_dir(train_id)
        if self._train_is_fresh(train_id):
            log.debug("reusing trained artifact for %s", train_id)
            return artifact
        row = self.row_dir(train_id)
        if artifact.exists():
            shutil.rmtree(artifact)
        artifact.mkdir(parents=True, exist_ok=True)
        mapping = dict(
            self._mapping_base,
            train_manifest=str(self.plan.split_paths[train_id]),
            workdir=str(artifact),
            seed=str(self.plan.seed),
        )
        cmd = _render_command(self.plan.runner.train_command_template, mapping)
        log.info("training on %s", train_id)
        started = time.monotonic()
        proc = self._run_subprocess(cmd, artifact, (train_id, "*"),
                                    row / "train.stdout.log", row / "train.stderr.log")
        if proc.returncode != 0:
            raise RunnerFailure((train_id, "*"), proc.returncode,
                                _tail(proc.stderr), detail="training job")
        meta = {
            "train_manifest_sha256": self.plan.split_hashes[train_id],
            "wall_time_seconds": time.monotonic() - started,
            "completed_at": _now(),
        }
        with self._write_lock:
            _write_json_atomic(row / TRAIN_META_NAME, meta)
        return artifact

    # -- evaluation ----------------------------------------------------------

    def load_cached_cell(self, train_id: str, test_id: str) -> CellResult | None:
        path = self.cell_path(train_id, test_id)
        if not path.exists():
            return None
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError):
            return None
        if doc.get("runner_fingerprint") != self._cell_fingerprint(train_id, test_id):
            return None
        try:
            return CellResult(
                train_id=doc["train_id"],
                test_id=doc["test_id"],
                metric=MetricValue(value=float(doc["value"]), metric_name=str(doc["metric_name"])),
                runner_fingerprint=doc["runner_fingerprint"],
                wall_time_seconds=float(doc["wall_time_seconds"]),
                completed_at=str(doc["completed_at"]),
            )
        except (KeyError, TypeError, ValueError):
            return None

    def eval_cell(self, train_id: str, test_id: str) -> CellResult:
        cell = (train_id, test_id)
        workdir = self.row_dir(train_id) / f"eval_{test_id}"
        workdir.mkdir(parents=True, exist_ok=True)
        mapping = dict(
            self._mapping_base,
            model_artifact=str(self.artifact_dir(train_id)),
            test_manifest=str(self.plan.split_paths[test_id]),
            workdir=str(workdir),
        )
        cmd = _render_command(self.plan.runner.eval_command_template, mapping)
        log.info("evaluating model(%s) on %s", train_id, test_id)
        started = time.monotonic()
        proc = self._run_subprocess(cmd, workdir, cell,
                                    workdir / "stdout.log", workdir / "stderr.log")
        if proc.returncode != 0:
            raise RunnerFailure(cell, proc.returncode, _tail(proc.stderr))
        metric = self._parse_protocol(cell, proc.stdout)
        result = CellResult(
            train_id=train_id,
            test_id=test_id,
            metric=metric,
            runner_fingerprint=self._cell_fingerprint(train_id, test_id),
            wall_time_seconds=time.monotonic() - started,
            completed_at=_now(),
        )
        doc = {
            "train_id": result.train_id,
            "test_id": result.test_id,
            "metric_name": result.metric.metric_name,
            "value": result.metric.value,
            "runner_fingerprint": result.runner_fingerprint,
            "wall_time_seconds": result.wall_time_seconds,
            "completed_at": result.completed_at,
        }
        with self._write_lock:
            _write_json_atomic(self.cell_path(train_id, test_id), doc)
        return result

    def _run_subprocess(self, cmd, cwd: Path, cell, stdout_log: Path, stderr_log: Path):
        try:
            proc = subprocess.run(
                cmd,
                cwd=cwd,
                capture_output=True,
                text=True,
                timeout=self.plan.runner.timeout_seconds,
            )
        except subprocess.TimeoutExpired:
            raise RunnerTimeout(cell, self.plan.runner.timeout_seconds)
        except OSError as exc:
            raise RunnerFailure(cell, -1, "", detail=f"could not launch {cmd[0]!r}: {exc}")
        stdout_log.parent.mkdir(parents=True, exist_ok=True)
        stdout_log.write_text(proc.stdout, encoding="utf-8")
        stderr_log.write_text(proc.stderr, encoding="utf-8")
        return proc

    def _parse_protocol(self, cell, stdout: str) -> MetricValue:
        lines = [ln for ln in stdout.splitlines() if ln.strip()]
        if not lines:
            raise ProtocolError(cell, "runner produced no stdout")
        final = lines[-1].strip()
        try:
            doc = json.loads(final)
        except json.JSONDecodeError:
            raise ProtocolError(cell, f"final stdout line is not JSON: {final!r}")
        if not isinstance(doc, dict) or "metric_name" not in doc or "value" not in doc:
            raise ProtocolError(cell, f"final line must be {{'metric_name', 'value'}}, got {final!r}")
        name = doc["metric_name"]
        value = doc["value"]
        if not isinstance(name, str):
            raise ProtocolError(cell, f"metric_name must be a string, got {name!r}")
        if name != self.plan.runner.metric_name:
            raise ProtocolError(
                cell,
                f"metric_name {name!r} does not match the runner spec's {self.plan.runner.metric_name!r}",
            )
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ProtocolError(cell, f"value must be a number, got {value!r}")
        value = float(value)
        if not math.isfinite(value) or value < 0:
            raise ProtocolError(cell, f"value must be finite and >= 0, got {value}")
        return MetricValue(value=value, metric_name=name)

    # -- top level -----------------------------------------------------------

    def run(self) -> list[CellResult]:
        results: dict[tuple[str, str], CellResult] = {}
        pending: list[tuple[str, str]] = []
        for cell in self.plan.cells:
            cached = self.load_cached_cell(*cell)
            if cached is not None:
                results[cell] = cached
            else:
                pending.append(cell)
        if results:
            log.info("reusing %d cached cells", len(results))

        failures: list[RunnerError] = []

        # Training phase: only rows that still have pending cells need a model.
        rows_needed = sorted({train_id for train_id, _ in pending},
                             key=self.plan.dataset_ids.index)
        failed_rows: set[str] = set()

        def train_one(train_id: str) -> None:
            try:
                self.ensure_artifact(train_id)
            except RunnerError as exc:
                if not self.keep_going:
                    raise
                log.error("training failed for %s: %s", train_id, exc)
                failures.append(exc)
                failed_rows.add(train_id)

        if self.plan.parallel_training and len(rows_needed) > 1:
            with ThreadPoolExecutor(max_workers=self.plan.max_parallel_cells) as pool:
                train_futures = [pool.submit(train_one, t) for t in rows_needed]
                for fut in train_futures:
                    fut.result()
        else:
            for train_id in rows_needed:
                train_one(train_id)

        runnable = [c for c in pending if c[0] not in failed_rows]

        def worker(cell: tuple[str, str]) -> CellResult:
            if self._stop.is_set():
                raise _Cancelled()
            return self.eval_cell(*cell)

        if runnable:
            with ThreadPoolExecutor(max_workers=self.plan.max_parallel_cells) as pool:
                future_cells = {pool.submit(worker, cell): cell for cell in runnable}
                done, not_done = wait(future_cells, return_when=FIRST_EXCEPTION)
                while True:
                    for fut in done:
                        cell = future_cells[fut]
                        exc = fut.exception()
                        if exc is None:
                            results[cell] = fut.result()
                        elif isinstance(exc, _Cancelled):
                            pass
                        elif isinstance(exc, RunnerError):
                            failures.append(exc)
                            self._record_failure(cell, exc)
                            if not self.keep_going:
                                self._stop.set()
                        else:
                            self._stop.set()
                            for f in not_done:
                                f.cancel()
                            raise exc
                    if not not_done:
                        break
                    done, not_done = wait(not_done, return_when=FIRST_EXCEPTION)

        if failures:
            summary = "; ".join(f"({e.cell[0]}, {e.cell[1]})" for e in failures[:10])
            log.error("%d cell(s) failed: %s", len(failures), summary)
            raise failures[0]
        return [results[cell] for cell in self.plan.cells]

    def _record_failure(self, cell: tuple[str, str], exc: RunnerError) -> None:
        doc = {
            "train_id": cell[0],
            "test_id": cell[1],
            "error": type(exc).__name__,
            "message": str(exc),
            "recorded_at": _now(),
        }
        with self._write_lock:
            _write_json_atomic(self.row_dir(cell[0]) / f"{cell[1]}.failed.json", doc)


class _Cancelled(Exception):
    pass


def _tail(text: str, limit: int = 2000) -> str:
    return text[-limit:] if text else ""


def execute(plan: ExperimentPlan, keep_going: bool = False) -> list[CellResult]:
    """Run the full grid, returning one CellResult per cell in row-major order.

    Completed cells are reused from the cache; on failure the default is to
    stop at the first broken cell, while ``keep_going`` attempts every cell,
    records the failures next to their row, and raises afterwards so an
    incomplete grid can never reach matrix construction.
    """
    return GridExecutor(plan, keep_going=keep_going).run()
