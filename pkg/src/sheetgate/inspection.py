"""Cell-level inspection rules.

Every rule takes the parsed workbook plus the dependency graph and emits
findings — one per offending condition, with structured evidence — so
that two runs over the same workbook produce byte-identical output.

Findings are deduplicated on (rule id, cell, evidence) and returned
sheet by sheet in row-major order, rule id as the tiebreaker.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Dict, Iterator, List, Mapping, Optional, Tuple

from .catalogs import AGGREGATION_FUNCTIONS, LOOKUP_FUNCTIONS
from .depgraph import DepGraph, ExternalNode, NameNode, RangeNode, parse_workbook
from .formula.ast import (
    CellRef,
    FuncCall,
    NameRef,
    Node,
    Paren,
    RangeRef,
    constants_of,
    lexes_as_number,
    refs_of,
    render,
)
from .formula.parser import FormulaError, FormulaSyntaxError, UnsupportedConstruct
from .model import (
    MAX_COL,
    MAX_ROW,
    Boolean,
    CellAddress,
    Error,
    Formula,
    Number,
    Text,
    Workbook,
    column_index,
    column_letters,
)
from .scoping import ClassPartition, Parsed, formula_classes
from .severity import Severity

# --- rule identifiers -------------------------------------------------

CONST_IN_FORMULA = "CONST_IN_FORMULA"
ABS_REF = "ABS_REF"
NAMED_RANGE_LOOKUP = "NAMED_RANGE_LOOKUP"
BLOCK_REF = "BLOCK_REF"
NO_PRECEDENT = "NO_PRECEDENT"
TEXT_NUMBER = "TEXT_NUMBER"
BLANK_REF = "BLANK_REF"
NO_DEPENDENTS = "NO_DEPENDENTS"
HIDDEN_REF = "HIDDEN_REF"
ERROR_CELL = "ERROR_CELL"
ERROR_REF = "ERROR_REF"
EXTERNAL_LINK = "EXTERNAL_LINK"
HIGH_RISK_FUNCTION = "HIGH_RISK_FUNCTION"
PATTERN_BREAK = "PATTERN_BREAK"
FORMULA_OVERWRITE = "FORMULA_OVERWRITE"
UNUSED_INPUT = "UNUSED_INPUT"
UNPARSED_FORMULA = "UNPARSED_FORMULA"

ALL_RULES: Tuple[str, ...] = (
    CONST_IN_FORMULA,
    ABS_REF,
    NAMED_RANGE_LOOKUP,
    BLOCK_REF,
    NO_PRECEDENT,
    TEXT_NUMBER,
    BLANK_REF,
    NO_DEPENDENTS,
    HIDDEN_REF,
    ERROR_CELL,
    ERROR_REF,
    EXTERNAL_LINK,
    HIGH_RISK_FUNCTION,
    PATTERN_BREAK,
    FORMULA_OVERWRITE,
    UNUSED_INPUT,
    UNPARSED_FORMULA,
)

DEFAULT_SEVERITIES: Mapping[str, Severity] = {
    CONST_IN_FORMULA: Severity.MEDIUM,
    ABS_REF: Severity.LOW,
    NAMED_RANGE_LOOKUP: Severity.INFO,
    BLOCK_REF: Severity.MEDIUM,
    NO_PRECEDENT: Severity.MEDIUM,
    TEXT_NUMBER: Severity.HIGH,
    BLANK_REF: Severity.MEDIUM,
    NO_DEPENDENTS: Severity.LOW,
    HIDDEN_REF: Severity.MEDIUM,
    ERROR_CELL: Severity.HIGH,
    ERROR_REF: Severity.HIGH,
    EXTERNAL_LINK: Severity.MEDIUM,
    HIGH_RISK_FUNCTION: Severity.MEDIUM,
    PATTERN_BREAK: Severity.HIGH,
    FORMULA_OVERWRITE: Severity.HIGH,
    UNUSED_INPUT: Severity.LOW,
    UNPARSED_FORMULA: Severity.HIGH,
}

DEFAULT_CONSTANT_ALLOWLIST = frozenset({Decimal(0), Decimal(1), Decimal(-1)})

DEFAULT_HIGH_RISK = frozenset(
    {"NPV", "IRR", "XNPV", "XIRR", "VLOOKUP", "HLOOKUP", "LOOKUP", "INDIRECT", "OFFSET"}
)

_EVIDENCE_LIST_CAP = 32

_ARG_SLOT_RE = re.compile(r"([A-Za-z0-9_.]+)\(arg[0-9]+\)$")


# --- configuration ----------------------------------------------------

_RANGE_SPEC_RE = re.compile(
    r"^(?:(?:'(?P<qsheet>[^']+)'|(?P<sheet>[A-Za-z_][A-Za-z0-9_. ]*))!)?"
    r"\$?(?P<c1>[A-Za-z]{1,3})\$?(?P<r1>[0-9]+)"
    r"(?::\$?(?P<c2>[A-Za-z]{1,3})\$?(?P<r2>[0-9]+))?$"
)


def parse_range_spec(spec: str) -> Tuple[Optional[str], int, int, int, int]:
    """Parse ``Sheet!A1:B9`` / ``A1`` into (sheet or None, r1, c1, r2, c2).

    A spec without a sheet applies to every sheet.  Corners are
    normalized so r1<=r2 and c1<=c2.
    """
    m = _RANGE_SPEC_RE.match(spec.strip())
    if not m:
        raise ValueError(f"bad range spec: {spec!r}")
    sheet = m.group("qsheet") or m.group("sheet")
    r1 = int(m.group("r1"))
    c1 = column_index(m.group("c1").upper())
    r2 = int(m.group("r2")) if m.group("r2") else r1
    c2 = column_index(m.group("c2").upper()) if m.group("c2") else c1
    if r2 < r1:
        r1, r2 = r2, r1
    if c2 < c1:
        c1, c2 = c2, c1
    if not (1 <= r1 and r2 <= MAX_ROW and c2 <= MAX_COL):
        raise ValueError(f"range spec outside the grid: {spec!r}")
    return sheet, r1, c1, r2, c2


class _OutputRanges:
    """Compiled output-range set: membership checks per cell."""

    __slots__ = ("_entries",)

    def __init__(self, specs: Tuple[str, ...]):
        self._entries = [parse_range_spec(s) for s in specs]

    def covers(self, wb: Workbook, addr: CellAddress) -> bool:
        if not self._entries:
            return False
        sheet_name = wb.sheets[addr.sheet_index].name.casefold()
        for sheet, r1, c1, r2, c2 in self._entries:
            if sheet is not None and sheet.casefold() != sheet_name:
                continue
            if r1 <= addr.row <= r2 and c1 <= addr.col <= c2:
                return True
        return False


@dataclass(frozen=True)
class RuleConfig:
    """Which rules run, how severe they are, and their knobs."""

    enabled: frozenset = frozenset(ALL_RULES)
    severities: Mapping[str, Severity] = field(
        default_factory=lambda: dict(DEFAULT_SEVERITIES)
    )
    constant_allowlist: frozenset = DEFAULT_CONSTANT_ALLOWLIST
    #: Functions whose direct literal arguments are positional, not data
    #: (e.g. ROUND's digit count), and so never count as constants.
    positional_functions: frozenset = frozenset()
    high_risk_functions: frozenset = DEFAULT_HIGH_RISK
    lookup_functions: frozenset = LOOKUP_FUNCTIONS
    aggregation_functions: frozenset = AGGREGATION_FUNCTIONS
    #: Ranges holding deliberate terminal results; cells inside are
    #: exempt from NO_DEPENDENTS and UNUSED_INPUT.
    output_ranges: Tuple[str, ...] = ()
    #: Total flanking cells a run needs before a sandwiched cell is a
    #: break (2 = one matching neighbor on each side).
    pattern_neighbors: int = 2

    def __post_init__(self) -> None:
        for rule in self.enabled:
            if rule not in DEFAULT_SEVERITIES:
                raise ValueError(f"unknown rule id {rule!r}")
        for rule in self.severities:
            if rule not in DEFAULT_SEVERITIES:
                raise ValueError(f"unknown rule id {rule!r} in severities")
        if self.pattern_neighbors < 2:
            raise ValueError("pattern_neighbors must be at least 2")
        for spec in self.output_ranges:
            parse_range_spec(spec)

    def severity_of(self, rule: str) -> Severity:
        return self.severities.get(rule, DEFAULT_SEVERITIES[rule])


DEFAULT_RULE_CONFIG = RuleConfig()


# --- findings ---------------------------------------------------------

@dataclass(frozen=True)
class Finding:
    rule_id: str
    severity: Severity
    cell: CellAddress
    message: str
    evidence: Mapping[str, object]

    def evidence_json(self) -> str:
        return json.dumps(self.evidence, sort_keys=True, default=str)

    def sort_key(self) -> Tuple:
        return (
            self.cell.sheet_index,
            self.cell.row,
            self.cell.col,
            self.rule_id,
            self.evidence_json(),
        )


def _cap(items: List[str]) -> List[str]:
    if len(items) <= _EVIDENCE_LIST_CAP:
        return items
    return items[: _EVIDENCE_LIST_CAP] + ["…"]


def _strip_parens(node: Node) -> Node:
    while type(node) is Paren:
        node = node.inner
    return node


def _calls_of(node: Node) -> Iterator[FuncCall]:
    stack = [node]
    while stack:
        n = stack.pop()
        t = type(n)
        if t is FuncCall:
            yield n
            stack.extend(reversed(n.args))
        elif hasattr(n, "lhs"):
            stack.append(n.rhs)
            stack.append(n.lhs)
        elif hasattr(n, "operand"):
            stack.append(n.operand)
        elif hasattr(n, "inner"):
            stack.append(n.inner)


class _Inspector:
    """One inspection run; collects findings then sorts them once."""

    def __init__(
        self,
        wb: Workbook,
        graph: DepGraph,
        config: RuleConfig,
        parsed: Parsed,
        classes_by_sheet: Dict[int, ClassPartition],
    ):
        self.wb = wb
        self.graph = graph
        self.config = config
        self.parsed = parsed
        self.classes_by_sheet = classes_by_sheet
        self.outputs = _OutputRanges(config.output_ranges)
        self.findings: List[Finding] = []
        self._seen = set()
        # Error cells (stored or cached) per sheet, for reference checks.
        self.error_cells: Dict[int, List[Tuple[CellAddress, str]]] = {}
        for index, sheet in enumerate(wb.sheets):
            errs = []
            for addr in sheet.sorted_addresses():
                value = sheet.cells[addr]
                if isinstance(value, Error):
                    errs.append((addr, value.kind.value))
                elif isinstance(value, Formula) and isinstance(value.cached, Error):
                    errs.append((addr, value.cached.kind.value))
            if errs:
                self.error_cells[index] = errs

    # -- plumbing --

    def on(self, rule: str) -> bool:
        return rule in self.config.enabled

    def emit(self, rule: str, cell: CellAddress, message: str,
             evidence: Mapping[str, object]) -> None:
        finding = Finding(rule, self.config.severity_of(rule), cell, message, evidence)
        key = (rule, cell, finding.evidence_json())
        if key in self._seen:
            return
        self._seen.add(key)
        self.findings.append(finding)

    def _positional(self, path: str) -> bool:
        """Whether a literal sits directly in an argument slot of a
        function whose literal arguments are positional, not data."""
        if not self.config.positional_functions:
            return False
        m = _ARG_SLOT_RE.match(path.rsplit("/", 1)[-1])
        return bool(m) and m.group(1) in self.config.positional_functions

    def describe(self, host: CellAddress, target) -> str:
        """A target address/range as text, sheet-qualified when it leaves home."""
        if isinstance(target, CellAddress):
            if target.sheet_index == host.sheet_index:
                return target.a1
            return f"{self.wb.sheets[target.sheet_index].name}!{target.a1}"
        # RangeNode
        text = (
            f"{column_letters(target.start_col)}{target.start_row}:"
            f"{column_letters(target.end_col)}{target.end_row}"
        )
        if target.sheet_index == host.sheet_index:
            return text
        return f"{self.wb.sheets[target.sheet_index].name}!{text}"

    # -- per-formula rules --

    def check_formula(self, addr: CellAddress, value: Formula) -> None:
        node = self.parsed[addr]
        if isinstance(node, FormulaError):
            if self.on(UNPARSED_FORMULA):
                if isinstance(node, UnsupportedConstruct):
                    kind, detail = "unsupported", node.construct
                elif isinstance(node, FormulaSyntaxError):
                    kind, detail = "syntax", node.expected
                else:
                    kind, detail = "syntax", str(node)
                self.emit(
                    UNPARSED_FORMULA,
                    addr,
                    f"formula could not be parsed ({detail})",
                    {"kind": kind, "offset": getattr(node, "offset", 0),
                     "detail": detail},
                )
            return

        refs = list(refs_of(node))

        if self.on(CONST_IN_FORMULA):
            for literal, path in constants_of(node):
                if literal in self.config.constant_allowlist:
                    continue
                if self._positional(path):
                    continue
                self.emit(
                    CONST_IN_FORMULA,
                    addr,
                    f"numeric literal {literal} embedded in formula",
                    {"literal": str(literal), "context": path},
                )

        if self.on(ABS_REF):
            anchored = []
            for ref in refs:
                if isinstance(ref, CellRef):
                    if ref.coord.row_abs or ref.coord.col_abs:
                        anchored.append(render(ref))
                elif isinstance(ref, RangeRef):
                    if (ref.start.coord.row_abs or ref.start.coord.col_abs
                            or ref.end.coord.row_abs or ref.end.coord.col_abs):
                        anchored.append(render(ref))
            if anchored:
                distinct = sorted(set(anchored))
                self.emit(
                    ABS_REF,
                    addr,
                    "absolute reference anchors: " + ", ".join(distinct),
                    {"references": distinct},
                )

        if self.on(NO_PRECEDENT) and not refs:
            self.emit(
                NO_PRECEDENT,
                addr,
                "formula reads no cells or names",
                {},
            )

        check_lookup = self.on(NAMED_RANGE_LOOKUP)
        check_block = self.on(BLOCK_REF)
        check_risky = self.on(HIGH_RISK_FUNCTION)
        if check_lookup or check_block or check_risky:
            risky_seen = set()
            for call in _calls_of(node):
                fn = call.name.upper()
                if check_risky and fn in self.config.high_risk_functions:
                    if fn not in risky_seen:
                        risky_seen.add(fn)
                        self.emit(
                            HIGH_RISK_FUNCTION,
                            addr,
                            f"calls {fn}, an error-prone function",
                            {"function": fn},
                        )
                if check_lookup and fn in self.config.lookup_functions:
                    for arg in call.args:
                        arg = _strip_parens(arg)
                        if isinstance(arg, NameRef) and arg.workbook is None:
                            self.emit(
                                NAMED_RANGE_LOOKUP,
                                addr,
                                f"{fn} reads defined name {arg.name}",
                                {"function": fn, "name": arg.name},
                            )
                if check_block and fn in self.config.aggregation_functions:
                    for arg in call.args:
                        arg = _strip_parens(arg)
                        if not isinstance(arg, RangeRef):
                            continue
                        rows = abs(arg.end.coord.row - arg.start.coord.row) + 1
                        cols = abs(arg.end.coord.col - arg.start.coord.col) + 1
                        if rows > 1 and cols > 1:
                            text = render(arg)
                            self.emit(
                                BLOCK_REF,
                                addr,
                                f"{fn} aggregates the two-dimensional block "
                                f"{text} ({rows} rows by {cols} columns)",
                                {"function": fn, "range": text,
                                 "rows": rows, "cols": cols},
                            )

        self.check_targets(addr)

        if self.on(BLANK_REF):
            blank = self.graph.blank_precedents(addr)
            if blank.blanks:
                shown = _cap([self.describe(addr, b) for b in blank.blanks])
                self.emit(
                    BLANK_REF,
                    addr,
                    f"formula reads {len(blank.blanks)} blank cell(s): "
                    + ", ".join(shown),
                    {"blanks": shown, "count": len(blank.blanks)},
                )

        if (self.on(NO_DEPENDENTS)
                and not self.graph.has_dependents(addr)
                and not self.outputs.covers(self.wb, addr)):
            self.emit(
                NO_DEPENDENTS,
                addr,
                "no formula reads this result and it is not a declared output",
                {},
            )

        if self.on(ERROR_CELL) and isinstance(value.cached, Error):
            code = value.cached.kind.value
            self.emit(
                ERROR_CELL,
                addr,
                f"formula result is the error {code}",
                {"error": code, "stored": "cached"},
            )

    def check_targets(self, addr: CellAddress) -> None:
        """Rules driven by what the formula's references point at."""
        check_ext = self.on(EXTERNAL_LINK)
        check_err = self.on(ERROR_REF)
        check_hidden = self.on(HIDDEN_REF)
        if not (check_ext or check_err or check_hidden):
            return
        for target in self.graph.precedents(addr):
            if isinstance(target, ExternalNode):
                if check_ext:
                    self.emit(
                        EXTERNAL_LINK,
                        addr,
                        f"pulls data from the external workbook {target.workbook}",
                        {"workbook": target.workbook},
                    )
                continue
            if isinstance(target, NameNode):
                if check_err and target.reason != "name defined via another name":
                    self.emit(
                        ERROR_REF,
                        addr,
                        f"reference {target.name} cannot resolve ({target.reason})",
                        {"target": target.name, "reason": target.reason},
                    )
                continue
            if isinstance(target, CellAddress):
                if check_err:
                    code = self._error_at(target)
                    if code is not None:
                        self.emit(
                            ERROR_REF,
                            addr,
                            f"reads {self.describe(addr, target)} "
                            f"which carries the error {code}",
                            {"target": self.describe(addr, target), "error": code},
                        )
                if check_hidden:
                    kind = self._hidden_kind_cell(target)
                    if kind is not None:
                        self.emit(
                            HIDDEN_REF,
                            addr,
                            f"reads {self.describe(addr, target)} "
                            f"inside a hidden {kind}",
                            {"target": self.describe(addr, target), "hidden": kind},
                        )
                continue
            # RangeNode
            if check_err:
                for err_addr, code in self.error_cells.get(target.sheet_index, ()):
                    if target.covers(err_addr):
                        self.emit(
                            ERROR_REF,
                            addr,
                            f"reads {self.describe(addr, err_addr)} "
                            f"which carries the error {code}",
                            {"target": self.describe(addr, err_addr), "error": code},
                        )
            if check_hidden:
                kind = self._hidden_kind_range(target)
                if kind is not None:
                    self.emit(
                        HIDDEN_REF,
                        addr,
                        f"reads {self.describe(addr, target)} "
                        f"inside a hidden {kind}",
                        {"target": self.describe(addr, target), "hidden": kind},
                    )

    def _error_at(self, addr: CellAddress) -> Optional[str]:
        value = self.wb.cell(addr)
        if isinstance(value, Error):
            return value.kind.value
        if isinstance(value, Formula) and isinstance(value.cached, Error):
            return value.cached.kind.value
        return None

    def _hidden_kind_cell(self, addr: CellAddress) -> Optional[str]:
        sheet = self.wb.sheets[addr.sheet_index]
        if sheet.hidden:
            return "sheet"
        if addr.row in sheet.hidden_rows:
            return "row"
        if addr.col in sheet.hidden_cols:
            return "column"
        return None

    def _hidden_kind_range(self, rng: RangeNode) -> Optional[str]:
        sheet = self.wb.sheets[rng.sheet_index]
        if sheet.hidden:
            return "sheet"
        if any(rng.start_row <= r <= rng.end_row for r in sheet.hidden_rows):
            return "row"
        if any(rng.start_col <= c <= rng.end_col for c in sheet.hidden_cols):
            return "column"
        return None

    # -- non-formula cells --

    def check_value_cell(self, addr: CellAddress, value) -> None:
        if self.on(TEXT_NUMBER) and isinstance(value, Text):
            if lexes_as_number(value.value):
                self.emit(
                    TEXT_NUMBER,
                    addr,
                    f"text value looks numeric: {value.value!r}",
                    {"text": value.value},
                )
        if self.on(ERROR_CELL) and isinstance(value, Error):
            code = value.kind.value
            self.emit(
                ERROR_CELL,
                addr,
                f"cell carries the error {code}",
                {"error": code, "stored": "value"},
            )
        if (self.on(UNUSED_INPUT)
                and isinstance(value, (Number, Text, Boolean))
                and not self.graph.has_dependents(addr)
                and not self.outputs.covers(self.wb, addr)):
            self.emit(
                UNUSED_INPUT,
                addr,
                "input value no formula reads",
                {},
            )

    # -- sandwich rules --

    def check_runs(self, sheet_index: int) -> None:
        if not (self.on(PATTERN_BREAK) or self.on(FORMULA_OVERWRITE)):
            return
        sheet = self.wb.sheets[sheet_index]
        partition = self.classes_by_sheet[sheet_index]
        key_at: Dict[CellAddress, str] = {}
        for key, members in partition.items():
            for member in members:
                key_at[member] = key.key
        per_side = max(1, self.config.pattern_neighbors // 2)

        def run_key(addr: CellAddress, dr: int, dc: int) -> Optional[str]:
            """Copy-class key shared by the `per_side` neighbors that way."""
            key = None
            for step in range(1, per_side + 1):
                row, col = addr.row + dr * step, addr.col + dc * step
                if row < 1 or col < 1:
                    return None
                k = key_at.get(CellAddress(sheet_index, row, col))
                if k is None or (key is not None and k != key):
                    return None
                key = k
            return key

        for addr in sheet.sorted_addresses():
            value = sheet.cells[addr]
            is_formula = isinstance(value, Formula)
            is_number = isinstance(value, Number)
            if not (is_formula or is_number):
                continue
            own = key_at.get(addr)
            for direction, (dr, dc) in (("horizontal", (0, 1)),
                                        ("vertical", (1, 0))):
                before = run_key(addr, -dr, -dc)
                if before is None:
                    continue
                after = run_key(addr, dr, dc)
                if after is None or after != before:
                    continue
                if is_number and self.on(FORMULA_OVERWRITE):
                    self.emit(
                        FORMULA_OVERWRITE,
                        addr,
                        f"literal {value.value} sits where the surrounding "
                        f"{direction} run of copies expects a formula",
                        {"direction": direction, "neighbor_class": before,
                         "value": str(value.value)},
                    )
                elif is_formula and own != before and self.on(PATTERN_BREAK):
                    self.emit(
                        PATTERN_BREAK,
                        addr,
                        f"formula differs from the matching copies on both "
                        f"sides of it ({direction} run)",
                        {"direction": direction, "neighbor_class": before,
                         "cell_class": own},
                    )

    # -- driver --

    def run(self) -> List[Finding]:
        for index, sheet in enumerate(self.wb.sheets):
            for addr in sheet.sorted_addresses():
                value = sheet.cells[addr]
                if isinstance(value, Formula):
                    self.check_formula(addr, value)
                else:
                    self.check_value_cell(addr, value)
            self.check_runs(index)
        self.findings.sort(key=Finding.sort_key)
        return self.findings


def inspect(
    wb: Workbook,
    graph: DepGraph,
    config: RuleConfig = DEFAULT_RULE_CONFIG,
    parsed: Optional[Parsed] = None,
    classes_by_sheet: Optional[Dict[int, ClassPartition]] = None,
) -> List[Finding]:
    """Run every enabled rule over the workbook.

    ``parsed`` and ``classes_by_sheet`` can be passed in when the caller
    already computed them (the triage pipeline does); otherwise they are
    derived here.
    """
    if parsed is None:
        parsed = parse_workbook(wb)
    if classes_by_sheet is None:
        classes_by_sheet = {
            index: formula_classes(wb, index, parsed)
            for index in range(len(wb.sheets))
        }
    return _Inspector(wb, graph, config, parsed, classes_by_sheet).run()
