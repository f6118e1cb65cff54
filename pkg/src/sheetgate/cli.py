"""Command-line surface tying the pipeline together.

Verdicts are data, never exit codes: 0 means the tool ran, 2 means the
invocation or one of its structured inputs was bad, 3 means a workbook
file could not be read.  Every ``--format machine`` document validates
against the shipped schema (``sheetgate/data/report_schema.json``).
"""

from __future__ import annotations

import csv
import dataclasses
import json
import multiprocessing
import sys
from decimal import Decimal
from pathlib import Path
from typing import Callable, List, NoReturn, Optional, Tuple

import click

from . import __version__, corpus
from .config import ConfigBundle, ConfigError, default_config, load_config
from .inspection import ALL_RULES
from .model import Workbook, WorkbookError
from .ooxml import read_workbook
from .report import (
    REPORT_VERSION,
    Report,
    _table,
    analyze_workbook,
    render_machine,
    render_machine_doc,
    render_text,
    report_to_doc,
    write_artifacts,
)
from .scoping import compare_sheets
from .stagegate import (
    AnswerSet,
    GateDecision,
    ImpactAssessment,
    Questionnaire,
    Verdict,
    gate_impact,
    gate_likelihood,
    parse_answer_set,
    parse_impact,
    questionnaire_from_doc,
    score_impact,
    score_likelihood,
)

WORKBOOK_SUFFIXES = (".sgwb", ".xlsx", ".xlsm")

EXIT_BAD_WORKBOOK = 3


# --- shared plumbing ----------------------------------------------------

def _fail_workbook(message: str) -> NoReturn:
    click.echo(f"error: {message}", err=True)
    sys.exit(EXIT_BAD_WORKBOOK)


def _load_workbook(path: Path) -> Workbook:
    try:
        return read_workbook(path)
    except OSError as exc:
        _fail_workbook(f"{path}: {exc.strerror or exc}")
    except WorkbookError as exc:
        _fail_workbook(f"{path}: {exc}")


def _read_json(path: Path, what: str) -> object:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise click.UsageError(f"cannot read {what} {path}: {exc.strerror or exc}")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise click.UsageError(f"{what} {path} is not valid JSON: {exc}")


def _bundle_from(config_path: Optional[str]) -> ConfigBundle:
    if config_path is None:
        return default_config()
    path = Path(config_path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise click.UsageError(f"cannot read config {path}: {exc.strerror or exc}")
    try:
        return load_config(text)
    except ConfigError as exc:
        raise click.UsageError(f"config {path}: {exc}")


def _sidecar(path: Path, what: str, parser: Callable):
    """Read a judgment-input document; returns (raw doc, parsed form)."""
    doc = _read_json(path, what)
    try:
        return doc, parser(doc)
    except ValueError as exc:
        raise click.UsageError(f"{what} {path}: {exc}")


def _tool_doc() -> dict:
    return {"name": "sheetgate", "version": __version__}


def _opt_str(value: Optional[Decimal]) -> Optional[str]:
    return None if value is None else str(value)


def _rules_filter(bundle: ConfigBundle, rules_csv: Optional[str]) -> ConfigBundle:
    if rules_csv is None:
        return bundle
    ids = tuple(t.strip().upper() for t in rules_csv.split(",") if t.strip())
    if not ids:
        raise click.UsageError("--rules needs at least one rule id")
    unknown = sorted(set(ids) - set(ALL_RULES))
    if unknown:
        raise click.UsageError(f"unknown rule id(s): {', '.join(unknown)}")
    rules = dataclasses.replace(bundle.rules, enabled=frozenset(ids))
    return dataclasses.replace(bundle, rules=rules)


def _finish_report(
    report: Report, fmt: str, out_dir: Optional[str], artifacts: bool
) -> None:
    machine = render_machine(report)
    text = render_text(report)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(machine, encoding="utf-8")
        (out / "report.txt").write_text(text, encoding="utf-8")
        if artifacts:
            write_artifacts(report, out)
    click.echo(machine if fmt == "machine" else text, nl=False)


_format_option = click.option(
    "--format", "fmt", type=click.Choice(["text", "machine"]),
    default="text", show_default=True,
    help="Human-readable tables or the versioned JSON document.",
)
_config_option = click.option(
    "--config", "config_path", metavar="FILE", default=None,
    help="Config bundle; without it the shipped defaults apply.",
)
_out_option = click.option(
    "--out", "out_dir", metavar="DIR", default=None,
    help="Also write the report (and its artifacts) into DIR.",
)


@click.group()
@click.version_option(version=__version__, prog_name="sheetgate")
def main() -> None:
    """Decide which spreadsheets deserve review, and where to look first."""


# --- assess -------------------------------------------------------------

def _assess_decisions(
    questionnaire: Questionnaire,
    answers: AnswerSet,
    impact: ImpactAssessment,
    bundle: ConfigBundle,
    answers_path: Path,
) -> Tuple[GateDecision, ...]:
    band = score_impact(impact, bundle.gates)
    first = gate_impact(band, bundle.gates)
    try:
        likelihood = score_likelihood(questionnaire, answers)
    except ValueError as exc:
        raise click.UsageError(f"answers {answers_path}: {exc}")
    second = gate_likelihood(band, likelihood, bundle.gates)
    return (first, second)


@main.command()
@click.option("--answers", "answers_path", metavar="FILE", required=True,
              help="Graded questionnaire answers (JSON).")
@click.option("--impact", "impact_path", metavar="FILE", required=True,
              help="Amount at risk and consequence bands (JSON).")
@click.option("--questionnaire", "questionnaire_path", metavar="FILE", default=None,
              help="Questionnaire override; default comes from the config.")
@_config_option
@_format_option
@_out_option
def assess(answers_path, impact_path, questionnaire_path, config_path, fmt, out_dir):
    """Run the impact and likelihood gates from judgment inputs alone.

    Both gates always appear in the output, so a Stop at the first one
    still shows where the second would have landed.  No workbook file is
    opened at any point.
    """
    bundle = _bundle_from(config_path)
    questionnaire = bundle.questionnaire
    if questionnaire_path is not None:
        doc = _read_json(Path(questionnaire_path), "questionnaire")
        try:
            questionnaire = questionnaire_from_doc(doc)
        except ValueError as exc:
            raise click.UsageError(f"questionnaire {questionnaire_path}: {exc}")
    answers_doc, answers = _sidecar(Path(answers_path), "answers", parse_answer_set)
    impact_doc, impact = _sidecar(Path(impact_path), "impact", parse_impact)
    decisions = _assess_decisions(
        questionnaire, answers, impact, bundle, Path(answers_path)
    )
    report = Report(
        workbook_id="(none)",
        decisions=decisions,
        inputs={"answers": answers_doc, "impact": impact_doc},
    )
    _finish_report(report, fmt, out_dir, artifacts=False)


# --- scope / inspect ----------------------------------------------------

@main.command()
@click.argument("workbook", metavar="WORKBOOK")
@_config_option
@_format_option
@_out_option
def scope(workbook, config_path, fmt, out_dir):
    """Size up one workbook: metrics per sheet, setup findings, effort."""
    bundle = _bundle_from(config_path)
    wb = _load_workbook(Path(workbook))
    report = analyze_workbook(wb, bundle, path=workbook)
    report = dataclasses.replace(report, findings=())
    _finish_report(report, fmt, out_dir, artifacts=True)


@main.command("inspect")
@click.argument("workbook", metavar="WORKBOOK")
@click.option("--rules", "rules_csv", metavar="IDS", default=None,
              help="Comma-separated rule ids to run; default is every enabled rule.")
@_config_option
@_format_option
@_out_option
def inspect_cmd(workbook, rules_csv, config_path, fmt, out_dir):
    """Flag risky cells in one workbook."""
    bundle = _rules_filter(_bundle_from(config_path), rules_csv)
    wb = _load_workbook(Path(workbook))
    report = analyze_workbook(wb, bundle, path=workbook)
    _finish_report(report, fmt, out_dir, artifacts=True)


# --- compare ------------------------------------------------------------

def _comparison_text(wb_id: str, sheet_a: str, sheet_b: str, divergences) -> str:
    lines = [
        f"workbook: {wb_id}",
        f"compare:  {sheet_a} vs {sheet_b} — {len(divergences)} divergence(s)",
    ]
    rows = [(d.address, d.kind.value, d.detail) for d in divergences]
    body = _table(rows)
    if body:
        lines.append("")
        lines.extend(body)
    return "\n".join(lines) + "\n"


@main.command()
@click.argument("workbook", metavar="WORKBOOK")
@click.argument("sheet_a", metavar="SHEET_A")
@click.argument("sheet_b", metavar="SHEET_B")
@_format_option
@_out_option
def compare(workbook, sheet_a, sheet_b, fmt, out_dir):
    """Show where SHEET_B stops being a faithful copy of SHEET_A."""
    wb = _load_workbook(Path(workbook))
    names = [s.name for s in wb.sheets]

    def index_of(label: str) -> int:
        if label in names:
            return names.index(label)
        raise click.UsageError(
            f"no sheet named {label!r}; workbook has: {', '.join(names)}"
        )

    divergences = compare_sheets(wb, index_of(sheet_a), index_of(sheet_b))
    doc = {
        "report_version": REPORT_VERSION,
        "tool": _tool_doc(),
        "workbook": {"id": wb.id, "path": str(workbook)},
        "compare": {
            "sheet_a": sheet_a,
            "sheet_b": sheet_b,
            "divergences": [
                {"cell": d.address, "kind": d.kind.value, "detail": d.detail}
                for d in divergences
            ],
        },
    }
    machine = render_machine_doc(doc)
    text = _comparison_text(wb.id, sheet_a, sheet_b, divergences)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(machine, encoding="utf-8")
        (out / "report.txt").write_text(text, encoding="utf-8")
    click.echo(machine if fmt == "machine" else text, nl=False)


# --- triage --------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class _TriageTask:
    """One workbook's plan: either pre-decided (stopped) or needs loading."""

    path: str
    answers: Optional[AnswerSet] = None
    impact: Optional[ImpactAssessment] = None
    echo: Optional[dict] = None
    pre_decisions: Tuple[GateDecision, ...] = ()


def _find_workbooks(root: Path) -> List[Path]:
    found = [
        p for p in root.rglob("*")
        if p.is_file() and p.suffix.lower() in WORKBOOK_SUFFIXES
    ]
    return sorted(found, key=str)


def _plan_task(path: Path, bundle: ConfigBundle) -> _TriageTask:
    """Read the workbook's sidecar judgments and gate before any load.

    A Stop at the impact or likelihood stage is final: the task carries
    the decisions taken so far and the workbook file stays unopened.
    """
    answers_file = path.with_name(path.stem + ".answers.json")
    impact_file = path.with_name(path.stem + ".impact.json")
    if not (answers_file.exists() and impact_file.exists()):
        return _TriageTask(path=str(path))
    answers_doc, answers = _sidecar(answers_file, "answers", parse_answer_set)
    impact_doc, impact = _sidecar(impact_file, "impact", parse_impact)
    echo = {"answers": answers_doc, "impact": impact_doc}
    band = score_impact(impact, bundle.gates)
    first = gate_impact(band, bundle.gates)
    if first.verdict is Verdict.STOP:
        return _TriageTask(str(path), answers, impact, echo, (first,))
    try:
        likelihood = score_likelihood(bundle.questionnaire, answers)
    except ValueError as exc:
        raise click.UsageError(f"answers {answers_file}: {exc}")
    second = gate_likelihood(band, likelihood, bundle.gates)
    if second.verdict is Verdict.STOP:
        return _TriageTask(str(path), answers, impact, echo, (first, second))
    return _TriageTask(str(path), answers, impact, echo)


def _triage_one(task: _TriageTask, bundle: ConfigBundle) -> Report:
    if task.pre_decisions:
        return Report(
            workbook_id=task.path,
            path=task.path,
            decisions=task.pre_decisions,
            inputs=task.echo,
        )
    try:
        wb = read_workbook(task.path)
    except OSError as exc:
        raise WorkbookError(f"{task.path}: {exc.strerror or exc}") from exc
    except WorkbookError as exc:
        raise WorkbookError(f"{task.path}: {exc}") from exc
    return analyze_workbook(
        wb, bundle,
        path=task.path, answers=task.answers, impact=task.impact, inputs=task.echo,
    )


def _triage_worker(args: Tuple[_TriageTask, ConfigBundle]) -> Report:
    return _triage_one(*args)


@dataclasses.dataclass(frozen=True)
class _RankEntry:
    path: str
    report: Report
    effective_amount: Optional[Decimal]


def _rank_key(entry: _RankEntry):
    risk = entry.report.risk_score
    amount = entry.effective_amount
    return (
        -(risk if risk is not None else Decimal(-1)),
        -(amount if amount is not None else Decimal(-1)),
        entry.path,
    )


def _portfolio_doc(entries: List[_RankEntry]) -> dict:
    ranking = []
    for rank, entry in enumerate(entries, start=1):
        report = entry.report
        last = report.decisions[-1] if report.decisions else None
        ranking.append({
            "rank": rank,
            "path": entry.path,
            "workbook_id": report.workbook_id,
            "risk_score": _opt_str(report.risk_score),
            "effective_amount": _opt_str(entry.effective_amount),
            "stage_reached": last.stage.value if last else None,
            "verdict": last.verdict.value if last else None,
            "report": report_to_doc(report),
        })
    return {"report_version": REPORT_VERSION, "tool": _tool_doc(), "ranking": ranking}


def _triage_text(directory: str, entries: List[_RankEntry]) -> str:
    lines = [f"triage: {len(entries)} workbook(s) under {directory}"]
    if entries:
        lines.append("")
        rows = [("rank", "workbook", "verdict", "stage", "risk", "amount", "findings")]
        for rank, entry in enumerate(entries, start=1):
            report = entry.report
            last = report.decisions[-1] if report.decisions else None
            rows.append((
                str(rank),
                entry.path,
                last.verdict.value if last else "-",
                last.stage.value if last else "-",
                str(report.risk_score) if report.risk_score is not None else "-",
                str(entry.effective_amount)
                if entry.effective_amount is not None else "-",
                str(len(report.findings)) if report.metrics is not None else "-",
            ))
        lines.extend(_table(rows))
    return "\n".join(lines) + "\n"


def _write_triage_artifacts(
    entries: List[_RankEntry], out_dir: str, machine: str, text: str
) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(machine, encoding="utf-8")
    (out / "report.txt").write_text(text, encoding="utf-8")

    with (out / "ranking.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow((
            "rank", "path", "workbook_id", "stage_reached", "verdict",
            "risk_score", "effective_amount", "findings",
        ))
        for rank, entry in enumerate(entries, start=1):
            report = entry.report
            last = report.decisions[-1] if report.decisions else None
            writer.writerow((
                rank,
                entry.path,
                report.workbook_id,
                last.stage.value if last else "",
                last.verdict.value if last else "",
                report.risk_score if report.risk_score is not None else "",
                entry.effective_amount if entry.effective_amount is not None else "",
                len(report.findings) if report.metrics is not None else "",
            ))

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    top = entries[:12]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    if top:
        labels = [Path(e.path).name for e in reversed(top)]
        values = [
            float(e.report.risk_score) if e.report.risk_score is not None else 0.0
            for e in reversed(top)
        ]
        ax.barh(labels, values, color="#4878a8")
    ax.set_title("Residual risk by workbook")
    ax.set_xlabel("risk score")
    fig.tight_layout()
    fig.savefig(out / "risk_scores.png", metadata={"Software": "sheetgate"})
    plt.close(fig)


@main.command()
@click.argument("directory", metavar="DIRECTORY")
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Worker processes for the analysis phase.")
@_config_option
@_format_option
@_out_option
def triage(directory, jobs, config_path, fmt, out_dir):
    """Rank every workbook under DIRECTORY by residual risk.

    A workbook with ``<stem>.answers.json`` and ``<stem>.impact.json``
    sidecars is gated first; one that stops at an early gate is ranked
    from its judgments alone and never loaded.  Output order depends
    only on the inputs, not on worker count.
    """
    if jobs < 1:
        raise click.UsageError("--jobs must be at least 1")
    bundle = _bundle_from(config_path)
    root = Path(directory)
    if not root.is_dir():
        raise click.UsageError(f"not a directory: {directory}")
    tasks = [_plan_task(path, bundle) for path in _find_workbooks(root)]
    try:
        if jobs > 1 and len(tasks) > 1:
            with multiprocessing.Pool(processes=jobs) as pool:
                reports = pool.map(_triage_worker, [(t, bundle) for t in tasks])
        else:
            reports = [_triage_one(task, bundle) for task in tasks]
    except WorkbookError as exc:
        _fail_workbook(str(exc))
    entries = [
        _RankEntry(
            path=task.path,
            report=report,
            effective_amount=(
                task.impact.effective_amount if task.impact is not None else None
            ),
        )
        for task, report in zip(tasks, reports)
    ]
    entries.sort(key=_rank_key)
    machine = render_machine_doc(_portfolio_doc(entries))
    text = _triage_text(directory, entries)
    if out_dir is not None:
        _write_triage_artifacts(entries, out_dir, machine, text)
    click.echo(machine if fmt == "machine" else text, nl=False)


# --- generate -------------------------------------------------------------

def _seed_spec_from(doc: object, where: str) -> corpus.SeedSpec:
    if not isinstance(doc, dict):
        raise click.UsageError(f"seed spec {where}: must be an object")
    allowed = {"rng_seed", "rows", "cols", "pattern", "defects"}
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise click.UsageError(f"seed spec {where}: unknown key(s): {', '.join(unknown)}")
    if "rng_seed" not in doc:
        raise click.UsageError(f"seed spec {where}: rng_seed is required")
    try:
        defects = tuple(
            corpus.DefectRequest(str(d["rule_id"]), int(d.get("count", 1)))
            for d in doc.get("defects", ())
        )
        return corpus.SeedSpec(
            rng_seed=int(doc["rng_seed"]),
            rows=int(doc.get("rows", 20)),
            cols=int(doc.get("cols", 4)),
            pattern=str(doc.get("pattern", "ledger")),
            defects=defects,
        )
    except corpus.CorpusError as exc:
        raise click.UsageError(f"seed spec {where}: {exc}")
    except (TypeError, KeyError, ValueError) as exc:
        raise click.UsageError(f"seed spec {where}: malformed: {exc}")


@main.command()
@click.argument("specfile", metavar="SPECFILE")
@click.option("--out", "out_dir", metavar="DIR", required=True,
              help="Directory for the workbook and its manifest.")
@_format_option
def generate(specfile, out_dir, fmt):
    """Grow a seeded workbook with known planted defects from SPECFILE."""
    doc = _read_json(Path(specfile), "seed spec")
    spec = _seed_spec_from(doc, specfile)
    try:
        result = corpus.generate(spec)
    except corpus.CorpusError as exc:
        raise click.UsageError(f"seed spec {specfile}: {exc}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    wb_path = out / f"{result.workbook.id}.sgwb"
    manifest_path = out / f"{result.workbook.id}.manifest.json"
    wb_path.write_text(result.canonical_text, encoding="utf-8")
    manifest_path.write_text(result.manifest_text(), encoding="utf-8")
    if fmt == "machine":
        out_doc = {
            "report_version": REPORT_VERSION,
            "tool": _tool_doc(),
            "generated": {
                "workbook_id": result.workbook.id,
                "workbook_file": str(wb_path),
                "manifest_file": str(manifest_path),
                "planted": len(result.truth),
                "output_ranges": list(result.output_ranges),
            },
        }
        click.echo(render_machine_doc(out_doc), nl=False)
    else:
        click.echo(f"wrote {wb_path}")
        click.echo(f"wrote {manifest_path}")
        click.echo(
            f"planted {len(result.truth)} defect(s) in {result.workbook.id}"
        )


if __name__ == "__main__":
    main()
