"""Sizing a workbook before auditing it.

Partitions each sheet's formulas into copy classes (formulas that are
translations of one master), counts what else lives on the sheet, and
turns the counts into an inspection-effort estimate.  The economics:
a copied formula costs a fraction of reviewing its original, so a sheet
with 5,000 formulas in 12 classes is a far smaller job than 5,000
one-off formulas.

``compare_sheets`` supports the master-and-copies workflow: audit one
sheet thoroughly, then list exactly where an allegedly identical sheet
diverges from it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from typing import Dict, List, Optional, Tuple, Union

from .depgraph import DepGraph
from .formula.ast import Node, lexes_as_number
from .formula.normalize import NormalizedFormula, normalize
from .formula.parser import FormulaError
from .model import (
    Boolean,
    CellAddress,
    Error,
    Formula,
    Number,
    Text,
    Workbook,
)

Parsed = Dict[CellAddress, Union[Node, FormulaError]]

ClassPartition = Dict[NormalizedFormula, List[CellAddress]]


def _parsed_for(wb: Workbook, parsed: Optional[Parsed]) -> Parsed:
    if parsed is None:
        from .depgraph import parse_workbook
        parsed = parse_workbook(wb)
    return parsed


def class_key(addr: CellAddress, source: str,
              node: Union[Node, FormulaError]) -> NormalizedFormula:
    """Copy-class key for one formula cell.

    Parseable formulas get the host-relative key; a formula the parser
    rejected can match nothing, so it gets a singleton key carrying its
    address and raw source (the ``!unparsed:`` prefix cannot collide
    with any rendered key).
    """
    if isinstance(node, FormulaError):
        return NormalizedFormula(f"!unparsed:{addr.a1}:{source}")
    return normalize(node, addr)


def formula_classes(
    wb: Workbook,
    sheet_index: int,
    parsed: Optional[Parsed] = None,
) -> ClassPartition:
    """Partition one sheet's formula cells into copy classes.

    Keys are insertion-ordered by first appearance, member lists are
    row-major, so the first member of each class is its "original".
    """
    parsed = _parsed_for(wb, parsed)
    sheet = wb.sheets[sheet_index]
    partition: ClassPartition = {}
    for addr in sheet.sorted_addresses():
        value = sheet.cells[addr]
        if type(value) is not Formula:
            continue
        key = class_key(addr, value.source, parsed[addr])
        members = partition.get(key)
        if members is None:
            partition[key] = [addr]
        else:
            members.append(addr)
    return partition


@dataclass(frozen=True, slots=True)
class SheetMetrics:
    """Census of one sheet.

    ``number_count`` counts stored numeric inputs (never formula
    results, which live in formula cells).  ``label_count`` counts text
    cells that do not read as numbers; numbers disguised as text are an
    inspection matter, not labels.  ``error_count`` counts stored error
    cells only.  The copy-class identity always holds:
    ``formula_count == unique + original + copy``.
    """

    formula_count: int = 0
    number_count: int = 0
    label_count: int = 0
    boolean_count: int = 0
    error_count: int = 0
    inter_sheet_link_count: int = 0
    external_ref_count: int = 0
    unique_formula_count: int = 0
    original_formula_count: int = 0
    copy_count: int = 0

    def __post_init__(self) -> None:
        for name in self.__dataclass_fields__:
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.formula_count != (self.unique_formula_count
                                  + self.original_formula_count
                                  + self.copy_count):
            raise ValueError("formula_count must equal unique + original + copies")
        if self.copy_count < self.original_formula_count:
            raise ValueError("every original implies at least one copy")


def sheet_metrics(
    wb: Workbook,
    sheet_index: int,
    graph: DepGraph,
    classes: Optional[ClassPartition] = None,
    parsed: Optional[Parsed] = None,
) -> SheetMetrics:
    """Compute the census for one sheet (graph supplies link counts)."""
    if classes is None:
        classes = formula_classes(wb, sheet_index, parsed)
    sheet = wb.sheets[sheet_index]
    formula = number = label = boolean = error = 0
    for value in sheet.cells.values():
        t = type(value)
        if t is Formula:
            formula += 1
        elif t is Number:
            number += 1
        elif t is Text:
            if not lexes_as_number(value.value):
                label += 1
        elif t is Boolean:
            boolean += 1
        elif t is Error:
            error += 1
    unique = original = copies = 0
    for members in classes.values():
        size = len(members)
        if size == 1:
            unique += 1
        else:
            original += 1
            copies += size - 1
    links = graph.cross_links()
    inter = sum(1 for link in links.inter_sheet
                if link.cell.sheet_index == sheet_index)
    external = sum(1 for link in links.external
                   if link.cell.sheet_index == sheet_index)
    return SheetMetrics(
        formula_count=formula,
        number_count=number,
        label_count=label,
        boolean_count=boolean,
        error_count=error,
        inter_sheet_link_count=inter,
        external_ref_count=external,
        unique_formula_count=unique,
        original_formula_count=original,
        copy_count=copies,
    )


@dataclass(frozen=True, slots=True)
class WorkbookMetrics:
    """Per-sheet metrics in sheet order, plus workbook totals."""

    sheets: Tuple[Tuple[str, SheetMetrics], ...]

    @property
    def sheet_count(self) -> int:
        return len(self.sheets)

    def total(self, field_name: str) -> int:
        return sum(getattr(m, field_name) for _, m in self.sheets)


def workbook_metrics(
    wb: Workbook,
    graph: DepGraph,
    parsed: Optional[Parsed] = None,
    classes_by_sheet: Optional[Dict[int, ClassPartition]] = None,
) -> WorkbookMetrics:
    parsed = _parsed_for(wb, parsed)
    rows = []
    for index, sheet in enumerate(wb.sheets):
        classes = None if classes_by_sheet is None else classes_by_sheet.get(index)
        rows.append((sheet.name,
                     sheet_metrics(wb, index, graph, classes, parsed)))
    return WorkbookMetrics(tuple(rows))


@dataclass(frozen=True, slots=True)
class EffortCoefficients:
    """Minutes of review effort per counted thing.

    Defaults are declared working values, not measurements; audit teams
    re-weight them in configuration.
    """

    unique: Decimal = Decimal(3)
    original: Decimal = Decimal(4)
    copy: Decimal = Decimal("0.25")
    external_ref: Decimal = Decimal(5)
    sheet: Decimal = Decimal(10)

    def __post_init__(self) -> None:
        for name in self.__dataclass_fields__:
            if getattr(self, name) <= 0:
                raise ValueError(f"coefficient {name} must be positive")


DEFAULT_COEFFICIENTS = EffortCoefficients()


@dataclass(frozen=True, slots=True)
class EffortEstimate:
    minutes: Decimal
    breakdown: Dict[str, Decimal]
    coefficients: EffortCoefficients

    def __post_init__(self) -> None:
        if self.minutes != sum(self.breakdown.values()):
            raise ValueError("minutes must equal the breakdown sum")


def estimate_effort(
    metrics: WorkbookMetrics,
    coefficients: EffortCoefficients = DEFAULT_COEFFICIENTS,
) -> EffortEstimate:
    """Linear effort model over the workbook totals."""
    breakdown = {
        "unique": coefficients.unique * metrics.total("unique_formula_count"),
        "original": coefficients.original * metrics.total("original_formula_count"),
        "copies": coefficients.copy * metrics.total("copy_count"),
        "external_refs": coefficients.external_ref * metrics.total("external_ref_count"),
        "sheets": coefficients.sheet * metrics.sheet_count,
    }
    return EffortEstimate(
        minutes=sum(breakdown.values(), Decimal(0)),
        breakdown=breakdown,
        coefficients=coefficients,
    )


class DivergenceKind(Enum):
    CLASS_MISMATCH = "ClassMismatch"
    PRESENT_ONLY_IN_A = "PresentOnlyInA"
    PRESENT_ONLY_IN_B = "PresentOnlyInB"
    VALUE_TYPE_MISMATCH = "ValueTypeMismatch"


@dataclass(frozen=True, slots=True)
class Divergence:
    address: str  # sheet-local A1 text
    kind: DivergenceKind
    detail: str


def compare_sheets(
    wb: Workbook,
    sheet_a: int,
    sheet_b: int,
    parsed: Optional[Parsed] = None,
) -> List[Divergence]:
    """Where sheet_b stops being a faithful copy of sheet_a.

    Formula cells compare by copy class (so row-shifted references in
    the same grid position still match); other cells compare by value
    type — two different input numbers are not a divergence, an input
    where a formula should be is.
    """
    parsed = _parsed_for(wb, parsed)
    a, b = wb.sheets[sheet_a], wb.sheets[sheet_b]
    by_pos_a = {(addr.row, addr.col): addr for addr in a.cells}
    by_pos_b = {(addr.row, addr.col): addr for addr in b.cells}
    out: List[Divergence] = []
    for pos in sorted(set(by_pos_a) | set(by_pos_b)):
        addr_a = by_pos_a.get(pos)
        addr_b = by_pos_b.get(pos)
        local = CellAddress(sheet_a, pos[0], pos[1]).a1
        if addr_b is None:
            out.append(Divergence(local, DivergenceKind.PRESENT_ONLY_IN_A,
                                  "cell has no counterpart"))
            continue
        if addr_a is None:
            out.append(Divergence(local, DivergenceKind.PRESENT_ONLY_IN_B,
                                  "cell has no counterpart"))
            continue
        va, vb = a.cells[addr_a], b.cells[addr_b]
        ta, tb = type(va), type(vb)
        if ta is Formula and tb is Formula:
            na, nb = parsed[addr_a], parsed[addr_b]
            if isinstance(na, FormulaError) or isinstance(nb, FormulaError):
                # unparseable formulas can only match verbatim
                matches = (isinstance(na, FormulaError)
                           and isinstance(nb, FormulaError)
                           and va.source == vb.source)
            else:
                matches = normalize(na, addr_a) == normalize(nb, addr_b)
            if not matches:
                out.append(Divergence(
                    local, DivergenceKind.CLASS_MISMATCH,
                    f"{va.source!r} vs {vb.source!r}"))
        elif ta is not tb:
            out.append(Divergence(
                local, DivergenceKind.VALUE_TYPE_MISMATCH,
                f"{ta.__name__} vs {tb.__name__}"))
    return out
