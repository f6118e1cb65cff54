"""Workbook setup review.

Flags calculation settings, hidden structure, missing protection, macro
use and similar workbook-level conditions that raise review effort or
hide problems, before any cell-level inspection runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Union

from .catalogs import BUILTIN_FUNCTIONS
from .depgraph import DepGraph, parse_workbook
from .formula.ast import Node, functions_of, refs_of, NameRef
from .formula.parser import FormulaError
from .model import CalcMode, CellAddress, Workbook, column_letters
from .severity import Severity

# Kinds whose severity is fixed by a rule rather than configuration.
MANUAL_RECALC = "MANUAL_RECALC"
NO_RECALC_BEFORE_SAVE = "NO_RECALC_BEFORE_SAVE"
ITERATION_ENABLED = "ITERATION_ENABLED"
MACROS_PRESENT = "MACROS_PRESENT"
HIDDEN_SHEET = "HIDDEN_SHEET"
HIDDEN_ROWS = "HIDDEN_ROWS"
HIDDEN_COLS = "HIDDEN_COLS"
NO_PROTECTION = "NO_PROTECTION"
ADVANCED_FEATURE = "ADVANCED_FEATURE"
NAMES_IN_USE = "NAMES_IN_USE"

SETUP_KINDS = (
    MANUAL_RECALC,
    NO_RECALC_BEFORE_SAVE,
    ITERATION_ENABLED,
    MACROS_PRESENT,
    HIDDEN_SHEET,
    HIDDEN_ROWS,
    HIDDEN_COLS,
    NO_PROTECTION,
    ADVANCED_FEATURE,
    NAMES_IN_USE,
)

#: Kinds whose severity may be re-weighted in configuration.  MANUAL_RECALC
#: and ITERATION_ENABLED are graded by workbook state and NAMES_IN_USE is
#: informational by definition, so none of the three is overridable.
CONFIGURABLE_SEVERITIES: Mapping[str, Severity] = {
    NO_RECALC_BEFORE_SAVE: Severity.HIGH,
    MACROS_PRESENT: Severity.MEDIUM,
    HIDDEN_SHEET: Severity.MEDIUM,
    HIDDEN_ROWS: Severity.MEDIUM,
    HIDDEN_COLS: Severity.MEDIUM,
    NO_PROTECTION: Severity.LOW,
    ADVANCED_FEATURE: Severity.MEDIUM,
}

WORKBOOK_SCOPE = "workbook"


def sheet_scope(name: str) -> str:
    return f"sheet:{name}"


@dataclass(frozen=True, slots=True)
class SetupFinding:
    kind: str
    severity: Severity
    location: str
    detail: str


@dataclass(frozen=True)
class SetupConfig:
    """Tunable pieces of the setup review."""

    severities: Mapping[str, Severity] = field(
        default_factory=lambda: dict(CONFIGURABLE_SEVERITIES)
    )
    builtin_functions: frozenset = BUILTIN_FUNCTIONS

    def __post_init__(self) -> None:
        for kind in self.severities:
            if kind not in CONFIGURABLE_SEVERITIES:
                raise ValueError(f"severity of {kind!r} is not configurable")

    def severity_of(self, kind: str) -> Severity:
        return self.severities.get(kind, CONFIGURABLE_SEVERITIES[kind])


DEFAULT_SETUP_CONFIG = SetupConfig()


def _preview(items: Sequence[str], cap: int = 8) -> str:
    shown = ", ".join(items[:cap])
    if len(items) > cap:
        shown += ", …"
    return shown


def _unknown_calls(
    wb: Workbook,
    parsed: Mapping[CellAddress, Union[Node, FormulaError]],
    builtins: frozenset,
) -> Dict[str, CellAddress]:
    """First use of each called name that is neither built in nor defined."""
    first: Dict[str, CellAddress] = {}
    defined = {n.upper() for n in wb.defined_names}
    for addr in sorted(parsed):
        node = parsed[addr]
        if isinstance(node, FormulaError):
            continue
        for name in functions_of(node):
            upper = name.upper()
            if upper in builtins or upper in defined:
                continue
            if upper not in first:
                first[upper] = addr
    return first


def _names_in_formulas(
    parsed: Mapping[CellAddress, Union[Node, FormulaError]],
) -> List[str]:
    used = set()
    for node in parsed.values():
        if isinstance(node, FormulaError):
            continue
        for ref in refs_of(node):
            if isinstance(ref, NameRef) and ref.workbook is None:
                used.add(ref.name)
    return sorted(used)


def assess_setup(
    wb: Workbook,
    graph: DepGraph,
    config: SetupConfig = DEFAULT_SETUP_CONFIG,
    parsed: Optional[Mapping[CellAddress, Union[Node, FormulaError]]] = None,
) -> List[SetupFinding]:
    """Review workbook-level setup and return findings in a stable order.

    Workbook-scoped findings come first (calculation settings, macros,
    advanced features, name use), then sheet-scoped findings in sheet
    order.  Severities follow ``config`` except for the graded kinds:
    manual recalculation is High only when recalculation before save is
    also off, and enabled iteration is High only when the dependency
    graph actually contains circular chains.
    """
    if parsed is None:
        parsed = parse_workbook(wb)
    findings: List[SetupFinding] = []
    settings = wb.settings

    if settings.calc_mode is CalcMode.MANUAL:
        if settings.recalc_before_save:
            sev, note = Severity.MEDIUM, "recalculation before save is on"
        else:
            sev, note = Severity.HIGH, "recalculation before save is off"
        findings.append(
            SetupFinding(
                MANUAL_RECALC,
                sev,
                WORKBOOK_SCOPE,
                f"calculation mode is manual; {note}",
            )
        )
        if not settings.recalc_before_save:
            findings.append(
                SetupFinding(
                    NO_RECALC_BEFORE_SAVE,
                    config.severity_of(NO_RECALC_BEFORE_SAVE),
                    WORKBOOK_SCOPE,
                    "stale results can be saved without any recalculation",
                )
            )

    if settings.iteration_enabled:
        cycles = graph.cycles()
        if cycles:
            sev = Severity.HIGH
            detail = (
                f"iterative calculation enabled and {len(cycles)} circular "
                f"chain(s) present (limit {settings.max_iterations})"
            )
        else:
            sev = Severity.LOW
            detail = "iterative calculation enabled but no circular chains found"
        findings.append(SetupFinding(ITERATION_ENABLED, sev, WORKBOOK_SCOPE, detail))

    if wb.features.has_vba:
        findings.append(
            SetupFinding(
                MACROS_PRESENT,
                config.severity_of(MACROS_PRESENT),
                WORKBOOK_SCOPE,
                "workbook carries an embedded macro project",
            )
        )
    unknown = _unknown_calls(wb, parsed, config.builtin_functions)
    for name in sorted(unknown):
        addr = unknown[name]
        sheet = wb.sheets[addr.sheet_index].name
        findings.append(
            SetupFinding(
                MACROS_PRESENT,
                config.severity_of(MACROS_PRESENT),
                sheet_scope(sheet),
                f"call to unknown function {name} (first at {sheet}!{addr.a1}); "
                "possible user-defined function",
            )
        )

    for flag, label in (
        (wb.features.has_pivot_tables, "pivot tables"),
        (wb.features.has_scenarios, "scenario manager"),
        (wb.features.has_data_consolidation, "data consolidation"),
    ):
        if flag:
            findings.append(
                SetupFinding(
                    ADVANCED_FEATURE,
                    config.severity_of(ADVANCED_FEATURE),
                    WORKBOOK_SCOPE,
                    f"workbook uses {label}",
                )
            )

    used_names = _names_in_formulas(parsed)
    if used_names:
        findings.append(
            SetupFinding(
                NAMES_IN_USE,
                Severity.INFO,
                WORKBOOK_SCOPE,
                f"{len(used_names)} defined name(s) referenced by formulas: "
                f"{_preview(used_names)}",
            )
        )

    for index, sheet in enumerate(wb.sheets):
        scope = sheet_scope(sheet.name)
        if sheet.hidden:
            findings.append(
                SetupFinding(
                    HIDDEN_SHEET,
                    config.severity_of(HIDDEN_SHEET),
                    scope,
                    "sheet is hidden",
                )
            )
        if sheet.hidden_rows:
            rows = sorted(sheet.hidden_rows)
            findings.append(
                SetupFinding(
                    HIDDEN_ROWS,
                    config.severity_of(HIDDEN_ROWS),
                    scope,
                    f"{len(rows)} hidden row(s): "
                    f"{_preview([str(r) for r in rows])}",
                )
            )
        if sheet.hidden_cols:
            cols = sorted(sheet.hidden_cols)
            findings.append(
                SetupFinding(
                    HIDDEN_COLS,
                    config.severity_of(HIDDEN_COLS),
                    scope,
                    f"{len(cols)} hidden column(s): "
                    f"{_preview([column_letters(c) for c in cols])}",
                )
            )
        if not sheet.protected:
            formula_count = sum(
                1 for addr in parsed if addr.sheet_index == index
            )
            if formula_count:
                findings.append(
                    SetupFinding(
                        NO_PROTECTION,
                        config.severity_of(NO_PROTECTION),
                        scope,
                        f"{formula_count} formula cell(s) without sheet protection",
                    )
                )

    return findings
