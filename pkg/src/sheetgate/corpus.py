"""Synthetic workbook generation with planted, attributable defects.

A generated workbook has a clean calculation area (copy-consistent
formula grids over named inputs) and, below it, one small self-contained
band per requested defect.  Bands are separated by blank rows and each
band trips exactly one rule at exactly one cell, so the inspection
output over the planted kinds can be compared 1:1 against the manifest.

Generation is pure: the same seed spec yields byte-identical canonical
text and manifest.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Dict, List, Optional, Tuple

from .canonical import save_canonical
from .inspection import ALL_RULES
from .model import (
    MAX_ROW,
    CellAddress,
    CellValue,
    Error,
    ErrorKind,
    Formula,
    Number,
    Sheet,
    Text,
    Workbook,
)

MANIFEST_VERSION = 1

MAIN_SHEET = "Model"
STORE_SHEET = "Store"

PATTERNS = ("ledger", "rowwise")

#: Band columns, fixed: E defect formulas, F/G band inputs, H collectors.
_E, _F, _G, _H = 5, 6, 7, 8

_BAND_GAP = 2  # blank rows between bands (and after the clean area + 1)

#: Rows each band occupies, by rule.  Lets generate() reject a layout
#: that would run off the grid before building anything.
_BAND_ROWS = {
    "CONST_IN_FORMULA": 1,
    "ABS_REF": 1,
    "NAMED_RANGE_LOOKUP": 2,
    "BLOCK_REF": 2,
    "NO_PRECEDENT": 1,
    "TEXT_NUMBER": 1,
    "BLANK_REF": 2,
    "NO_DEPENDENTS": 1,
    "HIDDEN_REF": 1,
    "ERROR_CELL": 1,
    "ERROR_REF": 1,
    "EXTERNAL_LINK": 1,
    "HIGH_RISK_FUNCTION": 1,
    "PATTERN_BREAK": 3,
    "FORMULA_OVERWRITE": 3,
    "UNUSED_INPUT": 1,
    "UNPARSED_FORMULA": 1,
}


class CorpusError(ValueError):
    """A seed spec that cannot be generated."""


@dataclass(frozen=True, slots=True)
class DefectRequest:
    rule_id: str
    count: int = 1


@dataclass(frozen=True, slots=True)
class SeedSpec:
    rng_seed: int
    rows: int = 20
    cols: int = 4
    pattern: str = "ledger"
    defects: Tuple[DefectRequest, ...] = ()

    def __post_init__(self) -> None:
        if self.pattern not in PATTERNS:
            raise CorpusError(
                f"unknown pattern {self.pattern!r}; choose from {', '.join(PATTERNS)}"
            )
        minimum_cols = 3 if self.pattern == "ledger" else 4
        if self.cols < minimum_cols:
            raise CorpusError(
                f"pattern {self.pattern!r} needs at least {minimum_cols} columns"
            )
        if self.cols > 26:
            raise CorpusError("at most 26 columns supported")
        if self.rows < 4:
            raise CorpusError("at least 4 data rows required")
        for defect in self.defects:
            if defect.rule_id not in ALL_RULES:
                raise CorpusError(f"unknown rule id {defect.rule_id!r}")
            if defect.count < 1:
                raise CorpusError(f"{defect.rule_id}: count must be at least 1")


@dataclass(frozen=True, slots=True)
class TruthEntry:
    rule_id: str
    sheet: str
    cell: str
    detail: str


@dataclass(frozen=True)
class GenerationResult:
    workbook: Workbook
    canonical_text: str
    truth: Tuple[TruthEntry, ...]
    output_ranges: Tuple[str, ...]
    spec: SeedSpec

    def manifest_text(self) -> str:
        doc = {
            "version": MANIFEST_VERSION,
            "workbook_id": self.workbook.id,
            "spec": {
                "rng_seed": self.spec.rng_seed,
                "rows": self.spec.rows,
                "cols": self.spec.cols,
                "pattern": self.spec.pattern,
                "defects": [
                    {"rule_id": d.rule_id, "count": d.count}
                    for d in self.spec.defects
                ],
            },
            "output_ranges": list(self.output_ranges),
            "truth": [
                {
                    "rule_id": t.rule_id,
                    "sheet": t.sheet,
                    "cell": t.cell,
                    "detail": t.detail,
                }
                for t in self.truth
            ],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _col(n: int) -> str:
    # Single letters only; SeedSpec caps cols at 26.
    return chr(ord("A") + n - 1)


@dataclass
class _Band:
    """One planted defect: its cells plus what the collector must read."""

    rows_used: int
    cells: Dict[str, CellValue] = field(default_factory=dict)
    truth: Optional[Tuple[str, str, str]] = None  # rule, a1, detail
    collect: Optional[Tuple[int, int]] = None  # first/last E-row to SUM
    store_value: Optional[Decimal] = None
    name_def: Optional[Tuple[str, str]] = None
    external: Optional[str] = None


def _plant(rule: str, row: int, index: int, rng: random.Random,
           store_row: Optional[int]) -> _Band:
    """Build the band for one defect instance starting at ``row``."""
    def money() -> Decimal:
        return Decimal(rng.randrange(100, 10_000))

    e, f, g = f"{_col(_E)}{row}", f"{_col(_F)}{row}", f"{_col(_G)}{row}"
    band = _Band(rows_used=1)

    if rule == "CONST_IN_FORMULA":
        band.cells[f] = Number(money())
        band.cells[e] = Formula(f"={f}*3")
        band.truth = (rule, e, "embedded literal 3")
        band.collect = (row, row)
    elif rule == "ABS_REF":
        band.cells[f] = Number(money())
        band.cells[e] = Formula(f"=${_col(_F)}${row}")
        band.truth = (rule, e, f"absolute anchor ${_col(_F)}${row}")
        band.collect = (row, row)
    elif rule == "NAMED_RANGE_LOOKUP":
        name = f"BANDTBL{index}"
        band.cells[f] = Number(money())
        band.cells[f"{_col(_F)}{row + 1}"] = Number(money())
        band.cells[e] = Formula(f"=INDEX({name}, 1)")
        band.name_def = (name, f"{MAIN_SHEET}!${_col(_F)}${row}:${_col(_F)}${row + 1}")
        band.truth = (rule, e, f"INDEX over defined name {name}")
        band.collect = (row, row)
        band.rows_used = 2
    elif rule == "BLOCK_REF":
        for a1 in (f, g, f"{_col(_F)}{row + 1}", f"{_col(_G)}{row + 1}"):
            band.cells[a1] = Number(money())
        band.cells[e] = Formula(f"=SUM({f}:{_col(_G)}{row + 1})")
        band.truth = (rule, e, "SUM over a 2x2 block")
        band.collect = (row, row)
        band.rows_used = 2
    elif rule == "NO_PRECEDENT":
        band.cells[e] = Formula("=1+0+1")
        band.truth = (rule, e, "formula built from constants alone")
        band.collect = (row, row)
    elif rule == "TEXT_NUMBER":
        band.cells[f] = Text(str(rng.randrange(1000, 10_000)))
        band.cells[e] = Formula(f'={f}&"x"')
        band.truth = (rule, f, "numeric-looking text input")
        band.collect = None  # the E cell is text-valued; read it directly
        band.cells[f"{_col(_H)}{row}"] = Formula(f"={e}&\"\"")
    elif rule == "BLANK_REF":
        band.cells[f] = Number(money())
        band.cells[e] = Formula(f"={f}+{_col(_F)}{row + 1}")
        band.truth = (rule, e, f"reads blank {_col(_F)}{row + 1}")
        band.collect = (row, row)
        band.rows_used = 2  # keep the read blank row inside the band
    elif rule == "NO_DEPENDENTS":
        band.cells[f] = Number(money())
        band.cells[e] = Formula(f"={f}*1")
        band.truth = (rule, e, "result nothing reads")
        band.collect = None
    elif rule == "HIDDEN_REF":
        band.cells[e] = Formula(f"={STORE_SHEET}!A{store_row}")
        band.truth = (rule, e, f"reads hidden {STORE_SHEET}!A{store_row}")
        band.collect = (row, row)
        band.store_value = money()
    elif rule == "ERROR_CELL":
        band.cells[f] = Error(ErrorKind.DIV0)
        band.truth = (rule, f, "stored #DIV/0! result")
        band.collect = None
    elif rule == "ERROR_REF":
        band.cells[e] = Formula(f"=MISSING{index}")
        band.truth = (rule, e, f"reads undefined name MISSING{index}")
        band.collect = (row, row)
    elif rule == "EXTERNAL_LINK":
        band.cells[e] = Formula("=[Feed.xlsx]Data!A1")
        band.truth = (rule, e, "reads workbook Feed.xlsx")
        band.collect = (row, row)
        band.external = "Feed.xlsx"
    elif rule == "HIGH_RISK_FUNCTION":
        band.cells[f] = Number(money())
        band.cells[e] = Formula(f"=OFFSET({f},0,0)")
        band.truth = (rule, e, "calls OFFSET")
        band.collect = (row, row)
    elif rule == "PATTERN_BREAK":
        for step in range(3):
            band.cells[f"{_col(_F)}{row + step}"] = Number(money())
        band.cells[e] = Formula(f"={f}+0")
        band.cells[f"{_col(_E)}{row + 1}"] = Formula(f"={_col(_F)}{row + 1}-0")
        band.cells[f"{_col(_E)}{row + 2}"] = Formula(f"={_col(_F)}{row + 2}+0")
        band.truth = (rule, f"{_col(_E)}{row + 1}", "formula differs from the run around it")
        band.collect = (row, row + 2)
        band.rows_used = 3
    elif rule == "FORMULA_OVERWRITE":
        band.cells[f] = Number(money())
        band.cells[f"{_col(_F)}{row + 2}"] = Number(money())
        band.cells[e] = Formula(f"={f}+0")
        band.cells[f"{_col(_E)}{row + 1}"] = Number(Decimal(7777))
        band.cells[f"{_col(_E)}{row + 2}"] = Formula(f"={_col(_F)}{row + 2}+0")
        band.truth = (rule, f"{_col(_E)}{row + 1}", "literal where the run expects a formula")
        band.collect = (row, row + 2)
        band.rows_used = 3
    elif rule == "UNUSED_INPUT":
        band.cells[f] = Number(money())
        band.truth = (rule, f, "input nothing reads")
        band.collect = None
    elif rule == "UNPARSED_FORMULA":
        band.cells[e] = Formula("=1+")
        band.truth = (rule, e, "syntax error in source")
        band.collect = (row, row)
    else:  # pragma: no cover - SeedSpec validation rejects unknown ids
        raise CorpusError(f"no plan for rule {rule!r}")
    return band


def _clean_ledger(rng: random.Random, rows: int) -> Tuple[Dict[str, CellValue], str]:
    """Rate cell + per-row multiple + running total chain down column C."""
    cells: Dict[str, CellValue] = {}
    cells["B1"] = Number(Decimal(rng.randrange(5, 50)) / 100)
    last = rows + 1
    for r in range(2, last + 1):
        cells[f"A{r}"] = Number(Decimal(rng.randrange(100, 10_000)))
        cells[f"B{r}"] = Formula(f"=A{r}*RATE")
        cells[f"C{r}"] = Formula("=B2" if r == 2 else f"=C{r - 1}+B{r}")
    return cells, f"{MAIN_SHEET}!C{last}"


def _clean_rowwise(
    rng: random.Random, rows: int, cols: int
) -> Tuple[Dict[str, CellValue], str]:
    """Two input columns, chained derived columns, a rate column, a total."""
    cells: Dict[str, CellValue] = {}
    cells["A1"] = Number(Decimal(rng.randrange(5, 50)) / 100)
    last = rows + 1
    for r in range(2, last + 1):
        cells[f"A{r}"] = Number(Decimal(rng.randrange(100, 10_000)))
        cells[f"B{r}"] = Number(Decimal(rng.randrange(100, 10_000)))
        for j in range(3, cols):
            cells[f"{_col(j)}{r}"] = Formula(
                f"={_col(j - 1)}{r}+{_col(j - 2)}{r}"
            )
        cells[f"{_col(cols)}{r}"] = Formula(f"={_col(cols - 1)}{r}*RATE")
    total_row = last + 1
    cells[f"{_col(cols)}{total_row}"] = Formula(
        f"=SUM({_col(cols)}2:{_col(cols)}{last})"
    )
    return cells, f"{MAIN_SHEET}!{_col(cols)}{total_row}"


def generate(spec: SeedSpec) -> GenerationResult:
    """Generate the workbook and its ground truth for one seed spec."""
    rng = random.Random(spec.rng_seed)
    rate_anchor = "$B$1" if spec.pattern == "ledger" else "$A$1"
    clean_end = spec.rows + (1 if spec.pattern == "ledger" else 2)

    # Each band is led by a gap and the final trailing gap falls off the
    # end, so the occupied depth is exactly clean_end + sum(band + gap).
    band_rows = sum(
        (_BAND_ROWS[d.rule_id] + _BAND_GAP) * d.count for d in spec.defects
    )
    last_occupied = clean_end + band_rows
    if last_occupied > MAX_ROW:
        raise CorpusError(
            f"layout needs {last_occupied} rows but the grid ends at {MAX_ROW}"
        )

    if spec.pattern == "ledger":
        cells, output_spec = _clean_ledger(rng, spec.rows)
    else:
        cells, output_spec = _clean_rowwise(rng, spec.rows, spec.cols)

    defined_names = {"RATE": f"{MAIN_SHEET}!{rate_anchor}"}
    truth: List[TruthEntry] = []
    store_values: List[Decimal] = []
    collector_rows: List[int] = []
    externals: set[str] = set()

    row = clean_end + 1 + _BAND_GAP
    index = 0
    for request in spec.defects:
        for _ in range(request.count):
            index += 1
            store_row = len(store_values) + 1 if request.rule_id == "HIDDEN_REF" else None
            band = _plant(request.rule_id, row, index, rng, store_row)
            assert band.rows_used == _BAND_ROWS[request.rule_id]
            overlap = set(band.cells) & set(cells)
            assert not overlap, f"band overlaps existing cells: {overlap}"
            cells.update(band.cells)
            if band.name_def is not None:
                defined_names[band.name_def[0]] = band.name_def[1]
            if band.store_value is not None:
                store_values.append(band.store_value)
            if band.external is not None:
                externals.add(band.external)
            if band.collect is not None:
                first, final = band.collect
                cells[f"{_col(_H)}{row}"] = Formula(
                    f"=SUM({_col(_E)}{first}:{_col(_E)}{final})"
                )
                collector_rows.append(row)
            elif f"{_col(_H)}{row}" in band.cells:
                collector_rows.append(row)
            rule, a1, detail = band.truth
            truth.append(TruthEntry(rule, MAIN_SHEET, a1, detail))
            row += band.rows_used + _BAND_GAP

    output_ranges = [output_spec]
    if collector_rows:
        output_ranges.append(
            f"{MAIN_SHEET}!{_col(_H)}{min(collector_rows)}:"
            f"{_col(_H)}{max(collector_rows)}"
        )

    main = Sheet(
        name=MAIN_SHEET,
        cells=_as_grid(0, cells),
    )
    sheets = [main]
    if store_values:
        store_cells = {
            f"A{j}": Number(value) for j, value in enumerate(store_values, start=1)
        }
        sheets.append(Sheet(name=STORE_SHEET, cells=_as_grid(1, store_cells), hidden=True))

    wb = Workbook(
        id=f"{spec.pattern}-{spec.rows}x{spec.cols}-seed{spec.rng_seed}",
        sheets=tuple(sheets),
        defined_names=defined_names,
        external_targets=tuple(sorted(externals)),
    )
    truth.sort(key=lambda t: (t.sheet, *_rc(t.cell), t.rule_id))
    return GenerationResult(
        workbook=wb,
        canonical_text=save_canonical(wb),
        truth=tuple(truth),
        output_ranges=tuple(output_ranges),
        spec=spec,
    )


def _as_grid(sheet_index: int, cells: Dict[str, CellValue]):
    built = {
        CellAddress.from_a1(sheet_index, a1): value for a1, value in cells.items()
    }
    return dict(sorted(built.items(), key=lambda kv: (kv[0].row, kv[0].col)))


def _rc(a1: str) -> Tuple[int, int]:
    addr = CellAddress.from_a1(0, a1)
    return addr.row, addr.col
