"""Report assembly and rendering.

One Report gathers everything a review run produced for one workbook:
gate decisions, sheet metrics, the effort estimate, setup findings and
inspection findings, plus an echo of the judgment inputs used.  It
renders three ways: a versioned machine document (stable key order,
byte-identical across reruns), a human text summary, and an artifact
directory of delimited files with accompanying charts.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from decimal import Decimal
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from . import __version__
from .config import ConfigBundle
from .depgraph import build_graph, parse_workbook
from .inspection import Finding, inspect
from .model import Workbook, column_letters
from .scoping import (
    EffortEstimate,
    WorkbookMetrics,
    estimate_effort,
    formula_classes,
    workbook_metrics,
)
from .setup_risk import SetupFinding, assess_setup
from .stagegate import (
    AnswerSet,
    GateDecision,
    ImpactAssessment,
    Verdict,
    run_gates,
)

REPORT_VERSION = 1

_METRIC_FIELDS = (
    "formula_count",
    "number_count",
    "label_count",
    "boolean_count",
    "error_count",
    "inter_sheet_link_count",
    "external_ref_count",
    "unique_formula_count",
    "original_formula_count",
    "copy_count",
)


@dataclass(frozen=True)
class Report:
    """Everything one review run found for one workbook."""

    workbook_id: str
    path: Optional[str] = None
    decisions: Tuple[GateDecision, ...] = ()
    metrics: Optional[WorkbookMetrics] = None
    effort: Optional[EffortEstimate] = None
    setup: Tuple[SetupFinding, ...] = ()
    findings: Tuple[Finding, ...] = ()
    inputs: Optional[dict] = None

    @property
    def verdict(self) -> Optional[Verdict]:
        return self.decisions[-1].verdict if self.decisions else None

    @property
    def risk_score(self) -> Optional[Decimal]:
        for decision in reversed(self.decisions):
            if decision.scores.risk_score is not None:
                return decision.scores.risk_score
        return None


def analyze_workbook(
    wb: Workbook,
    bundle: ConfigBundle,
    *,
    path: Optional[str] = None,
    answers: Optional[AnswerSet] = None,
    impact: Optional[ImpactAssessment] = None,
    inputs: Optional[dict] = None,
) -> Report:
    """Run the full pipeline over a loaded workbook.

    Gate decisions appear only when both judgment inputs are supplied.
    The formula parse is shared across every stage.
    """
    parsed = parse_workbook(wb)
    graph = build_graph(wb, parsed)
    classes_by_sheet = {
        index: formula_classes(wb, index, parsed) for index in range(len(wb.sheets))
    }
    metrics = workbook_metrics(wb, graph, parsed, classes_by_sheet)
    effort = estimate_effort(metrics, bundle.effort)
    setup = tuple(assess_setup(wb, graph, bundle.setup, parsed))
    findings = tuple(
        inspect(wb, graph, bundle.rules, parsed=parsed, classes_by_sheet=classes_by_sheet)
    )
    decisions: Tuple[GateDecision, ...] = ()
    if answers is not None and impact is not None:
        profile = run_gates(
            bundle.questionnaire, answers, impact, effort.minutes, bundle.gates
        )
        decisions = profile.decisions
    return Report(
        workbook_id=wb.id,
        path=path,
        decisions=decisions,
        metrics=metrics,
        effort=effort,
        setup=setup,
        findings=findings,
        inputs=inputs,
    )


# --- machine form -----------------------------------------------------------

def _opt(value: Optional[Decimal]) -> Optional[str]:
    return None if value is None else str(value)


def _finding_doc(f: Finding) -> dict:
    return {
        "rule": f.rule_id,
        "severity": f.severity.value,
        "sheet": f.cell.sheet_index,
        "cell": f"{column_letters(f.cell.col)}{f.cell.row}",
        "message": f.message,
        "evidence": json.loads(f.evidence_json()),
    }


def report_to_doc(report: Report, sheet_names: Optional[Tuple[str, ...]] = None) -> dict:
    """The machine document form.  Sheet indexes become names when known."""
    if sheet_names is None and report.metrics is not None:
        sheet_names = tuple(name for name, _ in report.metrics.sheets)

    findings = []
    for f in report.findings:
        doc = _finding_doc(f)
        if sheet_names is not None:
            doc["sheet"] = sheet_names[doc["sheet"]]
        findings.append(doc)

    metrics_doc = None
    if report.metrics is not None:
        metrics_doc = {
            "sheets": [
                {"name": name, **{k: getattr(m, k) for k in _METRIC_FIELDS}}
                for name, m in report.metrics.sheets
            ],
            "totals": {k: report.metrics.total(k) for k in _METRIC_FIELDS},
            "sheet_count": report.metrics.sheet_count,
        }

    effort_doc = None
    if report.effort is not None:
        effort_doc = {
            "minutes": str(report.effort.minutes),
            "breakdown": {k: str(v) for k, v in report.effort.breakdown.items()},
            "coefficients": {
                k: str(getattr(report.effort.coefficients, k))
                for k in ("unique", "original", "copy", "external_ref", "sheet")
            },
        }

    return {
        "report_version": REPORT_VERSION,
        "tool": {"name": "sheetgate", "version": __version__},
        "workbook": {"id": report.workbook_id, "path": report.path},
        "gates": [
            {
                "stage": d.stage.value,
                "verdict": d.verdict.value,
                "rationale": d.rationale,
                "scores": {
                    "impact_band": d.scores.impact_band.value,
                    "likelihood": _opt(d.scores.likelihood),
                    "risk_score": _opt(d.scores.risk_score),
                    "effort_minutes": _opt(d.scores.effort_minutes),
                },
            }
            for d in report.decisions
        ],
        "metrics": metrics_doc,
        "effort": effort_doc,
        "setup_findings": [
            {
                "kind": s.kind,
                "severity": s.severity.value,
                "location": s.location,
                "detail": s.detail,
            }
            for s in report.setup
        ],
        "findings": findings,
        "inputs": report.inputs,
    }


def render_machine(report: Report) -> str:
    return json.dumps(report_to_doc(report), indent=2, sort_keys=True) + "\n"


def render_machine_doc(doc: dict) -> str:
    """Serialize an already-assembled machine document (portfolio, comparison)."""
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


@lru_cache(maxsize=1)
def machine_schema() -> dict:
    """The JSON Schema every machine document must satisfy."""
    text = resources.files("sheetgate").joinpath("data/report_schema.json").read_text("utf-8")
    return json.loads(text)


# --- text form ---------------------------------------------------------------

def _table(rows: List[Tuple[str, ...]], indent: str = "  ") -> List[str]:
    if not rows:
        return []
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    return [
        indent + "  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
        for row in rows
    ]


def render_text(report: Report) -> str:
    lines: List[str] = []
    lines.append(f"workbook: {report.workbook_id}")
    if report.path and report.path != report.workbook_id:
        lines.append(f"path:     {report.path}")

    if report.decisions:
        lines.append("")
        lines.append("gates")
        rows = [
            (d.stage.value, d.verdict.value, d.rationale) for d in report.decisions
        ]
        lines.extend(_table(rows))

    if report.metrics is not None:
        lines.append("")
        lines.append("sheet metrics")
        header = ("sheet", "formulas", "unique", "originals", "copies",
                  "numbers", "labels", "errors", "links out", "external")
        rows = [header]
        for name, m in report.metrics.sheets:
            rows.append((
                name,
                str(m.formula_count), str(m.unique_formula_count),
                str(m.original_formula_count), str(m.copy_count),
                str(m.number_count), str(m.label_count), str(m.error_count),
                str(m.inter_sheet_link_count), str(m.external_ref_count),
            ))
        if report.metrics.sheet_count > 1:
            rows.append((
                "TOTAL",
                *(str(report.metrics.total(k)) for k in (
                    "formula_count", "unique_formula_count",
                    "original_formula_count", "copy_count", "number_count",
                    "label_count", "error_count", "inter_sheet_link_count",
                    "external_ref_count",
                )),
            ))
        lines.extend(_table(rows))

    if report.effort is not None:
        parts = ", ".join(f"{k} {v}" for k, v in report.effort.breakdown.items())
        lines.append("")
        lines.append(f"effort estimate: {report.effort.minutes} minutes ({parts})")

    if report.metrics is not None or report.setup:
        lines.append("")
        lines.append(f"setup findings ({len(report.setup)})")
        lines.extend(_table([
            (f"[{s.severity.value}]", s.location, s.kind, s.detail)
            for s in report.setup
        ]))

    if report.metrics is not None or report.findings:
        names = None
        if report.metrics is not None:
            names = tuple(name for name, _ in report.metrics.sheets)
        lines.append("")
        lines.append(f"inspection findings ({len(report.findings)})")
        rows = []
        for f in report.findings:
            sheet = names[f.cell.sheet_index] if names else str(f.cell.sheet_index)
            at = f"{sheet}!{column_letters(f.cell.col)}{f.cell.row}"
            rows.append((f"[{f.severity.value}]", at, f.rule_id, f.message))
        lines.extend(_table(rows))

    return "\n".join(lines) + "\n"


# --- artifact directory -------------------------------------------------------

def _write_csv(path: Path, header: Tuple[str, ...], rows: List[Tuple]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_artifacts(report: Report, directory: str | Path) -> List[Path]:
    """Write delimited findings/metrics plus charts; returns the paths."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []

    names: Optional[Tuple[str, ...]] = None
    if report.metrics is not None:
        names = tuple(name for name, _ in report.metrics.sheets)

    findings_csv = out / "findings.csv"
    rows = []
    for f in report.findings:
        sheet = names[f.cell.sheet_index] if names else str(f.cell.sheet_index)
        rows.append((
            f.rule_id, f.severity.value, sheet,
            f"{column_letters(f.cell.col)}{f.cell.row}", f.message,
            f.evidence_json(),
        ))
    _write_csv(findings_csv, ("rule", "severity", "sheet", "cell", "message", "evidence"), rows)
    written.append(findings_csv)

    setup_csv = out / "setup_findings.csv"
    _write_csv(
        setup_csv,
        ("kind", "severity", "location", "detail"),
        [(s.kind, s.severity.value, s.location, s.detail) for s in report.setup],
    )
    written.append(setup_csv)

    metrics_csv = out / "sheet_metrics.csv"
    metric_rows = []
    if report.metrics is not None:
        for name, m in report.metrics.sheets:
            metric_rows.append((name, *(getattr(m, k) for k in _METRIC_FIELDS)))
    _write_csv(metrics_csv, ("sheet", *_METRIC_FIELDS), metric_rows)
    written.append(metrics_csv)

    written.extend(_write_charts(report, out, names))
    return written


def _write_charts(
    report: Report, out: Path, names: Optional[Tuple[str, ...]]
) -> List[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from .severity import Severity

    written: List[Path] = []

    severity_order = [s.value for s in Severity]
    counts = {value: 0 for value in severity_order}
    for f in report.findings:
        counts[f.severity.value] += 1
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.bar(severity_order, [counts[v] for v in severity_order], color="#4878a8")
    ax.set_title("Inspection findings by severity")
    ax.set_ylabel("findings")
    fig.tight_layout()
    severity_png = out / "findings_by_severity.png"
    fig.savefig(severity_png, metadata={"Software": "sheetgate"})
    plt.close(fig)
    written.append(severity_png)

    by_sheet: Dict[str, int] = {}
    for f in report.findings:
        sheet = names[f.cell.sheet_index] if names else str(f.cell.sheet_index)
        by_sheet[sheet] = by_sheet.get(sheet, 0) + 1
    top = sorted(by_sheet.items(), key=lambda kv: (-kv[1], kv[0]))[:12]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    if top:
        labels = [name for name, _ in reversed(top)]
        values = [count for _, count in reversed(top)]
        ax.barh(labels, values, color="#a85448")
    ax.set_title("Inspection findings by sheet")
    ax.set_xlabel("findings")
    fig.tight_layout()
    sheet_png = out / "findings_by_sheet.png"
    fig.savefig(sheet_png, metadata={"Software": "sheetgate"})
    plt.close(fig)
    written.append(sheet_png)

    return written
