"""Quality report assembly and rendering.

The report document carries full-precision values; rounding (2 decimals for
matrices, matching how such tables are conventionally presented) happens
only in the markdown/csv renderers. The JSON form round-trips exactly:
``report_from_doc(json.loads(render_json(r))) == r``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from datetime import datetime, timezone

from .errors import SchemaError
from .matrix import CrossPerformanceMatrix, GcvMatrix, from_doc, normalize, to_doc
from .metrics import (
    QualityScores,
    S_O_UNAVAILABLE,
    SimulationWeights,
    TransferWeights,
    V_NORMALIZATION_NOTE,
    score,
)


@dataclass(frozen=True)
class QualityReport:
    """Everything needed to trace both headline scores back to raw cells."""

    experiment_id: str
    metric_name: str
    generated_at: str
    seed: int | None
    performance: CrossPerformanceMatrix | None
    gcv: GcvMatrix
    scores: QualityScores
    warnings: tuple[str, ...]


def build_report(
    matrix: CrossPerformanceMatrix | GcvMatrix,
    experiment_id: str,
    seed: int | None = None,
    extra_warnings: tuple[str, ...] = (),
) -> QualityReport:
    """Normalize (if given raw values), score, and collect warnings."""
    if isinstance(matrix, CrossPerformanceMatrix):
        performance: CrossPerformanceMatrix | None = matrix
        gcv = normalize(matrix)
    else:
        performance = None
        gcv = matrix
    scores = score(gcv)
    warnings = list(extra_warnings)
    ids = gcv.dataset_ids
    for i, row in enumerate(gcv.ratios):
        for j, value in enumerate(row):
            if i != j and value > 1.0:
                warnings.append(
                    f"transfer ratio above 1: train={ids[i]} test={ids[j]} "
                    f"ratio={value:.4f} (potential superior substitute)"
                )
    return QualityReport(
        experiment_id=experiment_id,
        metric_name=gcv.metric_name,
        generated_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        seed=seed,
        performance=performance,
        gcv=gcv,
        scores=scores,
        warnings=tuple(warnings),
    )


# --- JSON (exact round-trip) --------------------------------------------------

def report_to_doc(report: QualityReport) -> dict:
    s = report.scores
    doc: dict = {
        "experiment_id": report.experiment_id,
        "metric_name": report.metric_name,
        "generated_at": report.generated_at,
        "seed": report.seed,
        "performance_matrix": to_doc(report.performance) if report.performance else None,
        "gcv_matrix": to_doc(report.gcv),
        "scores": {
            "a_o": s.a_o,
            "s_o": s.s_o,
            "s_o_note": s.s_o_note,
            "forward_ratios": list(s.forward_ratios),
            "matrix_fingerprint": s.matrix_fingerprint,
            "metric_name": s.metric_name,
            "simulation_weights": {
                "reference_ids": list(s.simulation.reference_ids),
                "reverse_ratios": list(s.simulation.reverse_ratios),
                "weights": list(s.simulation.weights),
            },
            "transfer_weights": None if s.transfer is None else {
                "reference_ids": list(s.transfer.reference_ids),
                "dominance": [list(t) for t in s.transfer.dominance],
                "raw": list(s.transfer.raw),
                "normalized": list(s.transfer.normalized),
                "normalization": V_NORMALIZATION_NOTE,
            },
        },
        "warnings": list(report.warnings),
    }
    return doc


def render_json(report: QualityReport) -> str:
    return json.dumps(report_to_doc(report), indent=2) + "\n"


def report_from_doc(doc: dict) -> QualityReport:
    try:
        perf_doc = doc.get("performance_matrix")
        performance = from_doc(perf_doc) if perf_doc else None
        gcv = from_doc(doc["gcv_matrix"])
        if not isinstance(gcv, GcvMatrix) or isinstance(performance, GcvMatrix):
            raise SchemaError("report matrices have swapped kinds")
        s = doc["scores"]
        sim = s["simulation_weights"]
        simulation = SimulationWeights(
            reference_ids=tuple(sim["reference_ids"]),
            reverse_ratios=tuple(sim["reverse_ratios"]),
            weights=tuple(sim["weights"]),
        )
        tw = s.get("transfer_weights")
        transfer = None if tw is None else TransferWeights(
            reference_ids=tuple(tw["reference_ids"]),
            dominance=tuple((str(a), str(b), float(c)) for a, b, c in tw["dominance"]),
            raw=tuple(tw["raw"]),
            normalized=tuple(tw["normalized"]),
        )
        scores = QualityScores(
            a_o=float(s["a_o"]),
            s_o=None if s["s_o"] is None else float(s["s_o"]),
            s_o_note=s.get("s_o_note"),
            forward_ratios=tuple(s["forward_ratios"]),
            simulation=simulation,
            transfer=transfer,
            matrix_fingerprint=str(s["matrix_fingerprint"]),
            metric_name=str(s["metric_name"]),
        )
        return QualityReport(
            experiment_id=str(doc["experiment_id"]),
            metric_name=str(doc["metric_name"]),
            generated_at=str(doc["generated_at"]),
            seed=doc.get("seed"),
            performance=performance,
            gcv=gcv,
            scores=scores,
            warnings=tuple(doc.get("warnings", [])),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad report document: {exc}")


# --- markdown -------------------------------------------------------------------

def _md_matrix(title: str, dataset_ids, grid, decimals: int = 2) -> list[str]:
    lines = [f"### {title}", ""]
    lines.append("| train \\ test | " + " | ".join(dataset_ids) + " |")
    lines.append("|" + " --- |" * (len(dataset_ids) + 1))
    for dataset_id, row in zip(dataset_ids, grid):
        cells = " | ".join(f"{v:.{decimals}f}" for v in row)
        lines.append(f"| {dataset_id} | {cells} |")
    lines.append("")
    return lines


def render_markdown(report: QualityReport, terse: bool = False) -> str:
    s = report.scores
    s_o_text = f"{s.s_o:.2f}" if s.s_o is not None else (s.s_o_note or S_O_UNAVAILABLE)
    if terse:
        return f"A_o = {s.a_o:.2f}\nS_o = {s_o_text}\n"

    lines = [f"# Quality report: {report.experiment_id}", ""]
    lines.append(f"- metric: `{report.metric_name}`")
    if report.seed is not None:
        lines.append(f"- seed: {report.seed}")
    lines.append(f"- generated: {report.generated_at}")
    lines.append(f"- matrix fingerprint: `{s.matrix_fingerprint[:16]}`")
    lines.append("")
    lines.append("## Scores")
    lines.append("")
    lines.append(f"- **simulation quality A_o = {s.a_o:.2f}**")
    lines.append(f"- **transfer quality S_o = {s_o_text}**")
    lines.append("")
    if report.performance is not None:
        # Raw metric values keep a third decimal; ratios render at two.
        lines += _md_matrix("Cross-performance matrix", report.performance.dataset_ids,
                            report.performance.cells, decimals=3)
    lines += _md_matrix("Generalized cross-validation matrix", report.gcv.dataset_ids,
                        report.gcv.ratios)

    lines.append("### Simulation weights")
    lines.append("")
    lines.append("| reference | reverse ratio | weight |")
    lines.append("| --- | --- | --- |")
    for ref, r, w in zip(s.simulation.reference_ids, s.simulation.reverse_ratios,
                         s.simulation.weights):
        lines.append(f"| {ref} | {r:.4f} | {w:.4f} |")
    lines.append("")

    if s.transfer is not None:
        lines.append(f"### Transfer weights ({V_NORMALIZATION_NOTE})")
        lines.append("")
        lines.append("| reference | raw v | normalized |")
        lines.append("| --- | --- | --- |")
        for ref, raw, norm in zip(s.transfer.reference_ids, s.transfer.raw,
                                  s.transfer.normalized):
            lines.append(f"| {ref} | {raw:.4f} | {norm:.4f} |")
        lines.append("")
        lines.append("| dominance | value |")
        lines.append("| --- | --- |")
        for a, b, c in s.transfer.dominance:
            lines.append(f"| {a} -> {b} | {c:.4f} |")
        lines.append("")

    if report.warnings:
        lines.append("### Warnings")
        lines.append("")
        for w in report.warnings:
            lines.append(f"- {w}")
        lines.append("")
    return "\n".join(lines)


# --- csv ------------------------------------------------------------------------

def render_csv(report: QualityReport, terse: bool = False) -> str:
    """Flat section,key,value rows; matrix cells keyed as train/test pairs."""
    s = report.scores
    rows: list[tuple[str, str, str]] = []
    rows.append(("score", "a_o", repr(s.a_o)))
    rows.append(("score", "s_o", repr(s.s_o) if s.s_o is not None else (s.s_o_note or "")))
    if not terse:
        ids = report.gcv.dataset_ids
        if report.performance is not None:
            for i, row in enumerate(report.performance.cells):
                for j, v in enumerate(row):
                    rows.append(("performance", f"{ids[i]}/{ids[j]}", repr(v)))
        for i, row in enumerate(report.gcv.ratios):
            for j, v in enumerate(row):
                rows.append(("gcv", f"{ids[i]}/{ids[j]}", repr(v)))
        for ref, r, w in zip(s.simulation.reference_ids, s.simulation.reverse_ratios,
                             s.simulation.weights):
            rows.append(("reverse_ratio", ref, repr(r)))
            rows.append(("simulation_weight", ref, repr(w)))
        if s.transfer is not None:
            for a, b, c in s.transfer.dominance:
                rows.append(("dominance", f"{a}/{b}", repr(c)))
            for ref, v in zip(s.transfer.reference_ids, s.transfer.normalized):
                rows.append(("transfer_weight", ref, repr(v)))
        for i, w in enumerate(report.warnings):
            rows.append(("warning", str(i), w))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["section", "key", "value"])
    writer.writerows(rows)
    return buf.getvalue()
