"""Immutable in-memory model of a spreadsheet workbook.

Everything downstream (dependency graphs, copy-class scoping, inspection
rules) operates on these types, never on raw file bytes.  The model is
loader-agnostic: the OOXML reader and the canonical JSON reader both
produce the same structures, so every analysis result is comparable
across encodings.

Cells are sparse: a sheet stores only cells that exist in the source
file, and anything absent is semantically blank.  ``Workbook.cell``
reflects that by returning the ``BLANK`` singleton for unknown
addresses.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from typing import Iterator, Mapping, Optional, Tuple

MAX_ROW = 1_048_576
MAX_COL = 16_384

_A = ord("A")


class WorkbookError(ValueError):
    """A workbook file or structure that cannot be understood."""


def column_letters(col: int) -> str:
    """1-based column index -> spreadsheet letters (1 -> ``A``, 27 -> ``AA``)."""
    if col < 1:
        raise ValueError(f"column index must be >= 1, got {col}")
    out = []
    while col:
        col, rem = divmod(col - 1, 26)
        out.append(chr(_A + rem))
    return "".join(reversed(out))


def column_index(letters: str) -> int:
    """Spreadsheet letters -> 1-based column index (``A`` -> 1)."""
    col = 0
    for ch in letters:
        o = ord(ch)
        if ord("a") <= o <= ord("z"):
            o -= 32
        if not (_A <= o <= ord("Z")):
            raise ValueError(f"bad column letters {letters!r}")
        col = col * 26 + (o - _A) + 1
    if not letters:
        raise ValueError("empty column letters")
    return col


_A1_RE = re.compile(r"([A-Za-z]{1,3})([0-9]+)\Z")

# Letter prefixes that collide with the grid: any such token is an
# address, never a defined name.
_CELLREF_SHAPE_RE = re.compile(r"\$?[A-Za-z]{1,3}\$?[0-9]+\Z")
_NAME_RE = re.compile(r"[A-Za-z_\\][A-Za-z0-9_.\\]*\Z")


def is_valid_name(token: str) -> bool:
    """Whether ``token`` may serve as a defined name.

    A name is an identifier that could not be mistaken for a cell
    address and is not a boolean literal.
    """
    if not _NAME_RE.match(token):
        return False
    if _CELLREF_SHAPE_RE.match(token):
        return False
    return token.upper() not in ("TRUE", "FALSE")


@dataclass(frozen=True, slots=True, order=True)
class CellAddress:
    """Absolute position of a cell: sheet index plus 1-based row/column.

    Ordering is row-major within a sheet (sheet, row, column), which is
    the canonical traversal order everywhere in this package.
    """

    sheet_index: int
    row: int
    col: int

    def __post_init__(self) -> None:
        if self.sheet_index < 0:
            raise ValueError(f"sheet_index must be >= 0, got {self.sheet_index}")
        if not (1 <= self.row <= MAX_ROW):
            raise ValueError(f"row {self.row} outside 1..{MAX_ROW}")
        if not (1 <= self.col <= MAX_COL):
            raise ValueError(f"col {self.col} outside 1..{MAX_COL}")

    @property
    def a1(self) -> str:
        """Sheet-local A1 text, e.g. ``B7``."""
        return f"{column_letters(self.col)}{self.row}"

    @classmethod
    def from_a1(cls, sheet_index: int, text: str) -> "CellAddress":
        m = _A1_RE.match(text)
        if not m:
            raise ValueError(f"not an A1 cell address: {text!r}")
        return cls(sheet_index, int(m.group(2)), column_index(m.group(1)))


class ErrorKind(Enum):
    """The seven spreadsheet error literals."""

    REF = "#REF!"
    DIV0 = "#DIV/0!"
    VALUE = "#VALUE!"
    NAME = "#NAME?"
    NA = "#N/A"
    NUM = "#NUM!"
    NULL = "#NULL!"

    @classmethod
    def from_text(cls, text: str) -> "ErrorKind":
        for kind in cls:
            if kind.value == text:
                return kind
        raise ValueError(f"unknown error literal {text!r}")


class CellValue:
    """Marker base for the closed set of cell value variants."""

    __slots__ = ()


@dataclass(frozen=True, slots=True)
class Blank(CellValue):
    """An empty cell.  Use the module-level ``BLANK`` singleton."""


BLANK = Blank()


@dataclass(frozen=True, slots=True)
class Number(CellValue):
    value: Decimal

    def __post_init__(self) -> None:
        if not self.value.is_finite():
            raise ValueError(f"cell numbers must be finite, got {self.value}")


@dataclass(frozen=True, slots=True)
class Text(CellValue):
    value: str


@dataclass(frozen=True, slots=True)
class Boolean(CellValue):
    value: bool


@dataclass(frozen=True, slots=True)
class Error(CellValue):
    kind: ErrorKind


@dataclass(frozen=True, slots=True)
class Formula(CellValue):
    """A formula cell: the source text plus the file's cached result.

    ``source`` always begins with ``=``; loaders hand bare expression
    text to the constructor and it normalizes.  ``cached`` is whatever
    result the writing application last stored, or ``None`` when the
    file carried none.  It is never itself a formula.
    """

    source: str
    cached: Optional[CellValue] = None

    def __post_init__(self) -> None:
        if not self.source.startswith("="):
            object.__setattr__(self, "source", "=" + self.source)
        if isinstance(self.cached, (Formula, Blank)):
            raise ValueError("cached result cannot be a formula or blank")


@dataclass(frozen=True, slots=True)
class Sheet:
    """One worksheet: a sparse cell map plus visibility/protection state.

    ``cells`` maps addresses to non-blank values only; blankness is
    absence.  ``hidden_rows``/``hidden_cols`` are 1-based indices of
    individually hidden rows and columns (independent of ``hidden``,
    which hides the whole sheet).
    """

    name: str
    cells: Mapping[CellAddress, CellValue] = field(default_factory=dict)
    hidden: bool = False
    protected: bool = False
    hidden_rows: frozenset[int] = frozenset()
    hidden_cols: frozenset[int] = frozenset()

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("sheet name must be non-empty")
        for value in self.cells.values():
            if isinstance(value, Blank):
                raise ValueError("blank cells must be absent, not stored")

    def sorted_addresses(self) -> list[CellAddress]:
        """Addresses in row-major order."""
        return sorted(self.cells, key=_row_major)


def _row_major(addr: CellAddress) -> Tuple[int, int]:
    return (addr.row, addr.col)


class CalcMode(Enum):
    AUTOMATIC = "automatic"
    MANUAL = "manual"


@dataclass(frozen=True, slots=True)
class WorkbookSettings:
    """Recalculation behaviour recorded in the file."""

    calc_mode: CalcMode = CalcMode.AUTOMATIC
    recalc_before_save: bool = True
    iteration_enabled: bool = False
    max_iterations: int = 100

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True, slots=True)
class WorkbookFeatures:
    """Presence flags for embedded machinery the analyses care about."""

    has_vba: bool = False
    has_pivot_tables: bool = False
    has_scenarios: bool = False
    has_data_consolidation: bool = False


@dataclass(frozen=True, slots=True)
class Workbook:
    """A whole workbook.

    ``defined_names`` maps name -> definition text (a formula body such
    as ``Sheet1!$A$1:$B$2`` or a constant).  ``external_targets`` lists
    every distinct external workbook mentioned by links or formulas,
    sorted.  ``id`` is a caller-chosen identity, normally the file path.
    """

    id: str = ""
    sheets: Tuple[Sheet, ...] = ()
    defined_names: Mapping[str, str] = field(default_factory=dict)
    external_targets: Tuple[str, ...] = ()
    settings: WorkbookSettings = WorkbookSettings()
    features: WorkbookFeatures = WorkbookFeatures()

    def __post_init__(self) -> None:
        seen = set()
        for sheet in self.sheets:
            low = sheet.name.casefold()
            if low in seen:
                raise ValueError(f"duplicate sheet name {sheet.name!r}")
            seen.add(low)
        for name in self.defined_names:
            if not is_valid_name(name):
                raise ValueError(f"invalid defined name {name!r}")
        for index, sheet in enumerate(self.sheets):
            for addr in sheet.cells:
                if addr.sheet_index != index:
                    raise ValueError(
                        f"cell {addr} stored on sheet index {index}"
                    )

    def cell(self, addr: CellAddress) -> CellValue:
        """Value at ``addr``; BLANK when the cell is absent.

        Raises IndexError for a sheet index the workbook does not have.
        """
        if not (0 <= addr.sheet_index < len(self.sheets)):
            raise IndexError(f"no sheet with index {addr.sheet_index}")
        return self.sheets[addr.sheet_index].cells.get(addr, BLANK)

    def sheet_index(self, name: str) -> Optional[int]:
        """Index of the sheet called ``name`` (case-insensitive), or None."""
        low = name.casefold()
        for i, sheet in enumerate(self.sheets):
            if sheet.name.casefold() == low:
                return i
        return None

    def formula_cells(self) -> Iterator[Tuple[CellAddress, Formula]]:
        """All formula cells, sheets in order, row-major within a sheet."""
        for sheet in self.sheets:
            for addr in sheet.sorted_addresses():
                value = sheet.cells[addr]
                if isinstance(value, Formula):
                    yield addr, value


_BRACKET_RE = re.compile(r"\[([^\[\]]+)\]")
_STRING_RE = re.compile(r'"(?:""|[^"])*"')


def external_mentions(source: str) -> Iterator[str]:
    """External workbook names mentioned in a formula's source text.

    A lexical scan (string literals removed first); used by loaders to
    populate ``Workbook.external_targets`` without a full parse.
    """
    for m in _BRACKET_RE.finditer(_STRING_RE.sub('""', source)):
        yield m.group(1)
