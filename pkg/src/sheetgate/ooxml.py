"""Reading OOXML spreadsheet containers into the workbook model.

Only the slice of the format the analyses need is read: sheet data with
cached results, shared/inline strings, defined names, calculation
settings, hidden/protection state, the embedded-macro part, external
link targets, and part probes for pivot tables.  Styles, charts and the
rest are skipped.  Tag matching is by local name so strict- and
transitional-namespace files both load.
"""

from __future__ import annotations

import dataclasses
import io
import posixpath
import re
import zipfile
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple
from urllib.parse import unquote, urlsplit
from xml.etree import ElementTree

from .canonical import load_canonical
from .formula import FormulaError, parse_formula, render, shift
from .model import (
    MAX_COL,
    MAX_ROW,
    Boolean,
    CellAddress,
    CellValue,
    Error,
    ErrorKind,
    Formula,
    Number,
    Sheet,
    Text,
    Workbook,
    WorkbookError,
    WorkbookFeatures,
    WorkbookSettings,
    CalcMode,
    column_index,
    external_mentions,
    is_valid_name,
)

_WORKBOOK_PART = "xl/workbook.xml"

_A1_RE = re.compile(r"^\$?([A-Za-z]{1,3})\$?([0-9]+)$")
_STRING_RE = re.compile(r'"(?:""|[^"])*"')
_BOOK_INDEX_RE = re.compile(r"\[([0-9]+)\]")


def _local(tag: object) -> str:
    """Local name of a possibly namespace-qualified tag."""
    if not isinstance(tag, str):  # comments/processing instructions
        return ""
    return tag.rsplit("}", 1)[-1]


def _children(elem: ElementTree.Element, name: str) -> Iterator[ElementTree.Element]:
    for child in elem:
        if _local(child.tag) == name:
            yield child


def _first(elem: ElementTree.Element, name: str) -> Optional[ElementTree.Element]:
    for child in _children(elem, name):
        return child
    return None


def _rel_id(elem: ElementTree.Element) -> Optional[str]:
    """The relationship-id attribute, whatever namespace spells it."""
    for key, value in elem.attrib.items():
        if key.rsplit("}", 1)[-1] == "id":
            return value
    return None


def _parse_part(zf: zipfile.ZipFile, part: str) -> ElementTree.Element:
    try:
        data = zf.read(part)
    except KeyError:
        raise WorkbookError(f"missing part {part}") from None
    try:
        return ElementTree.fromstring(data)
    except ElementTree.ParseError as exc:
        raise WorkbookError(f"malformed XML in {part}: {exc}") from None


def _rels_for(zf: zipfile.ZipFile, part: str) -> Dict[str, Tuple[str, str, str]]:
    """Relationships of ``part``: id -> (type, resolved target, mode)."""
    folder, name = posixpath.split(part)
    rels_part = posixpath.join(folder, "_rels", name + ".rels")
    if rels_part not in zf.namelist():
        return {}
    out: Dict[str, Tuple[str, str, str]] = {}
    for rel in _parse_part(zf, rels_part):
        if _local(rel.tag) != "Relationship":
            continue
        rid = rel.get("Id", "")
        rtype = rel.get("Type", "")
        target = rel.get("Target", "")
        mode = rel.get("TargetMode", "Internal")
        if mode == "Internal":
            if target.startswith("/"):
                target = target[1:]
            else:
                target = posixpath.normpath(posixpath.join(folder, target))
        out[rid] = (rtype, target, mode)
    return out


def _book_name(target: str) -> str:
    """Display name of an externally linked workbook (its file name)."""
    path = urlsplit(target).path or target
    return unquote(posixpath.basename(path)) or target


def _shared_strings(zf: zipfile.ZipFile, part: Optional[str]) -> List[str]:
    if part is None or part not in zf.namelist():
        return []
    texts: List[str] = []
    for si in _children(_parse_part(zf, part), "si"):
        pieces: List[str] = []
        for child in si:
            name = _local(child.tag)
            if name == "t":
                pieces.append(child.text or "")
            elif name == "r":  # rich-text run; phonetic runs are skipped
                t = _first(child, "t")
                if t is not None:
                    pieces.append(t.text or "")
        texts.append("".join(pieces))
    return texts


def _error_value(raw: str, part: str) -> Error:
    try:
        return Error(ErrorKind(raw))
    except ValueError:
        raise WorkbookError(f"{part}: unknown error literal {raw!r}") from None


def _scalar(
    t: Optional[str], raw: Optional[str], sst: List[str], part: str, at: str
) -> CellValue:
    """The non-formula value carried by a cell of type ``t``."""
    if raw is None:
        raise WorkbookError(f"{part}: cell {at} has no stored value")
    if t in (None, "n"):
        try:
            return Number(Decimal(raw))
        except InvalidOperation:
            raise WorkbookError(f"{part}: cell {at} holds non-numeric {raw!r}") from None
    if t == "s":
        try:
            return Text(sst[int(raw)])
        except (ValueError, IndexError):
            raise WorkbookError(f"{part}: cell {at} has bad string index {raw!r}") from None
    if t == "str":
        return Text(raw)
    if t == "b":
        return Boolean(raw in ("1", "true"))
    if t == "e":
        return _error_value(raw, part)
    if t == "d":  # ISO dates are out of scope; keep the text
        return Text(raw)
    raise WorkbookError(f"{part}: cell {at} has unknown type {t!r}")


def _corner(ref: str, part: str) -> Tuple[int, int]:
    m = _A1_RE.match(ref)
    if not m:
        raise WorkbookError(f"{part}: bad dimension corner {ref!r}")
    return int(m.group(2)), column_index(m.group(1).upper())


def _check_dimension(elem: Optional[ElementTree.Element], part: str) -> None:
    if elem is None:
        return
    ref = elem.get("ref")
    if not ref:
        return
    corner = ref.split(":")[-1]
    row, col = _corner(corner, part)
    if row > MAX_ROW or col > MAX_COL:
        raise WorkbookError(
            f"{part}: declared dimension {ref} exceeds the {MAX_ROW}x{MAX_COL} grid"
        )


def _rewrite_book_indexes(source: str, books: Dict[int, str]) -> str:
    """Replace ``[n]`` book ordinals with ``[name]`` outside string literals."""
    if not books or "[" not in source:
        return source

    def _sub(m: re.Match) -> str:
        name = books.get(int(m.group(1)))
        return f"[{name}]" if name else m.group(0)

    out: List[str] = []
    last = 0
    for lit in _STRING_RE.finditer(source):
        out.append(_BOOK_INDEX_RE.sub(_sub, source[last:lit.start()]))
        out.append(lit.group(0))
        last = lit.end()
    out.append(_BOOK_INDEX_RE.sub(_sub, source[last:]))
    return "".join(out)


class _SharedFormulas:
    """Expansion of ``t="shared"`` formula groups within one sheet."""

    def __init__(self) -> None:
        self._masters: Dict[str, Tuple[CellAddress, str]] = {}

    def define(self, si: str, host: CellAddress, source: str) -> None:
        self._masters.setdefault(si, (host, source))

    def expand(self, si: str, host: CellAddress, part: str) -> str:
        if si not in self._masters:
            raise WorkbookError(
                f"{part}: shared formula group {si!r} used before it is defined"
            )
        origin, source = self._masters[si]
        try:
            tree = parse_formula(source)
            moved = shift(tree, host.row - origin.row, host.col - origin.col)
            return render(moved)
        except (FormulaError, ValueError):
            # Unparseable or off-grid master: keep its text; inspection
            # will surface the problem at this cell.
            return source


def _read_sheet(
    zf: zipfile.ZipFile,
    part: str,
    index: int,
    name: str,
    hidden: bool,
    sst: List[str],
    books: Dict[int, str],
) -> Tuple[Sheet, bool, bool]:
    """Load one worksheet part.

    Returns the sheet plus its scenario / data-consolidation flags.
    """
    root = _parse_part(zf, part)
    _check_dimension(_first(root, "dimension"), part)

    protected = False
    prot = _first(root, "sheetProtection")
    if prot is not None:
        protected = prot.get("sheet", "0") in ("1", "true")

    hidden_rows: set[int] = set()
    hidden_cols: set[int] = set()
    for cols in _children(root, "cols"):
        for col in _children(cols, "col"):
            if col.get("hidden", "0") in ("1", "true"):
                lo = int(col.get("min", "0"))
                hi = int(col.get("max", "0"))
                if 1 <= lo <= hi <= MAX_COL:
                    hidden_cols.update(range(lo, hi + 1))

    cells: Dict[CellAddress, CellValue] = {}
    shared = _SharedFormulas()
    data = _first(root, "sheetData")
    row_counter = 0
    for row in _children(data, "row") if data is not None else ():
        row_counter = int(row.get("r", row_counter + 1))
        if not (1 <= row_counter <= MAX_ROW):
            raise WorkbookError(f"{part}: row {row_counter} outside the grid")
        if row.get("hidden", "0") in ("1", "true"):
            hidden_rows.add(row_counter)
        col_counter = 0
        for c in _children(row, "c"):
            ref = c.get("r")
            if ref:
                m = _A1_RE.match(ref)
                if not m or int(m.group(2)) != row_counter:
                    raise WorkbookError(f"{part}: cell address {ref!r} out of place")
                col_counter = column_index(m.group(1).upper())
            else:
                col_counter += 1
            if not (1 <= col_counter <= MAX_COL):
                raise WorkbookError(f"{part}: column {col_counter} outside the grid")
            addr = CellAddress(index, row_counter, col_counter)
            at = ref or f"r{row_counter}c{col_counter}"

            t = c.get("t")
            v = _first(c, "v")
            f = _first(c, "f")
            raw = v.text if v is not None else None

            if t == "inlineStr":
                is_elem = _first(c, "is")
                pieces = [t_el.text or "" for t_el in is_elem.iter() if _local(t_el.tag) == "t"] if is_elem is not None else []
                cells[addr] = Text("".join(pieces))
                continue

            if f is not None:
                source = f.text or ""
                if f.get("t") == "shared":
                    si = f.get("si", "")
                    if source:
                        shared.define(si, addr, source)
                    else:
                        source = shared.expand(si, addr, part)
                if not source:
                    if raw is None:
                        continue  # nothing usable in this cell
                    cells[addr] = _scalar(t, raw, sst, part, at)
                    continue
                source = _rewrite_book_indexes(source, books)
                cached = _scalar(t, raw, sst, part, at) if raw is not None else None
                cells[addr] = Formula("=" + source, cached)
                continue

            if raw is None:
                continue  # style-only cell
            cells[addr] = _scalar(t, raw, sst, part, at)

    has_scenarios = _first(root, "scenarios") is not None
    has_consolidation = _first(root, "dataConsolidate") is not None
    sheet = Sheet(
        name=name,
        cells=cells,
        hidden=hidden,
        protected=protected,
        hidden_rows=frozenset(hidden_rows),
        hidden_cols=frozenset(hidden_cols),
    )
    return sheet, has_scenarios, has_consolidation


def _read_settings(root: ElementTree.Element) -> WorkbookSettings:
    calc = _first(root, "calcPr")
    if calc is None:
        return WorkbookSettings()
    mode = CalcMode.MANUAL if calc.get("calcMode") == "manual" else CalcMode.AUTOMATIC
    recalc = calc.get("calcOnSave", "1") in ("1", "true")
    iterate = calc.get("iterate", "0") in ("1", "true")
    count = int(calc.get("iterateCount", "100") or "100")
    return WorkbookSettings(
        calc_mode=mode,
        recalc_before_save=recalc,
        iteration_enabled=iterate,
        max_iterations=max(count, 1),
    )


def _external_books(
    zf: zipfile.ZipFile,
    root: ElementTree.Element,
    rels: Dict[str, Tuple[str, str, str]],
) -> Dict[int, str]:
    """Ordinal (1-based, in declaration order) -> linked workbook name."""
    refs = _first(root, "externalReferences")
    if refs is None:
        return {}
    books: Dict[int, str] = {}
    ordinal = 0
    for ref in _children(refs, "externalReference"):
        ordinal += 1
        rid = _rel_id(ref)
        if rid is None or rid not in rels:
            continue
        _, target, _ = rels[rid]
        if target not in zf.namelist():
            continue
        link_root = _parse_part(zf, target)
        book = _first(link_root, "externalBook")
        if book is None:
            continue
        link_rels = _rels_for(zf, target)
        book_rid = _rel_id(book)
        if book_rid is None or book_rid not in link_rels:
            continue
        _, book_target, _ = link_rels[book_rid]
        books[ordinal] = _book_name(book_target)
    return books


def load_workbook_file(data: bytes, *, id: str = "") -> Workbook:
    """Build a Workbook from the bytes of an OOXML spreadsheet file."""
    try:
        zf = zipfile.ZipFile(io.BytesIO(data))
    except zipfile.BadZipFile:
        raise WorkbookError("not a spreadsheet container (ZIP)") from None

    with zf:
        names = set(zf.namelist())
        root = _parse_part(zf, _WORKBOOK_PART)
        rels = _rels_for(zf, _WORKBOOK_PART)
        settings = _read_settings(root)
        books = _external_books(zf, root, rels)

        sst_part = None
        for rtype, target, mode in rels.values():
            if rtype.endswith("/sharedStrings") and mode == "Internal":
                sst_part = target
        if sst_part is None and "xl/sharedStrings.xml" in names:
            sst_part = "xl/sharedStrings.xml"
        sst = _shared_strings(zf, sst_part)

        sheets_elem = _first(root, "sheets")
        if sheets_elem is None:
            raise WorkbookError(f"{_WORKBOOK_PART}: no sheets element")
        sheets: List[Sheet] = []
        any_scenarios = False
        any_consolidation = False
        for index, entry in enumerate(_children(sheets_elem, "sheet")):
            name = entry.get("name", f"Sheet{index + 1}")
            hidden = entry.get("state", "visible") in ("hidden", "veryHidden")
            rid = _rel_id(entry)
            if rid is None or rid not in rels:
                raise WorkbookError(
                    f"{_WORKBOOK_PART}: sheet {name!r} has no worksheet part"
                )
            part = rels[rid][1]
            sheet, scen, consol = _read_sheet(zf, part, index, name, hidden, sst, books)
            sheets.append(sheet)
            any_scenarios = any_scenarios or scen
            any_consolidation = any_consolidation or consol

        defined: Dict[str, str] = {}
        names_elem = _first(root, "definedNames")
        if names_elem is not None:
            for dn in _children(names_elem, "definedName"):
                token = dn.get("name", "")
                value = dn.text or ""
                if token.startswith("_xlnm.") or not is_valid_name(token):
                    continue  # builtin print areas and the like
                defined[token] = _rewrite_book_indexes(value, books)

        features = WorkbookFeatures(
            has_vba="xl/vbaProject.bin" in names,
            has_pivot_tables=any(
                n.startswith(("xl/pivotTables/", "xl/pivotCache/")) for n in names
            ),
            has_scenarios=any_scenarios,
            has_data_consolidation=any_consolidation,
        )

        targets = set(books.values())
        for sheet in sheets:
            for value in sheet.cells.values():
                if isinstance(value, Formula):
                    targets.update(external_mentions(value.source))

        try:
            return Workbook(
                id=id,
                sheets=tuple(sheets),
                defined_names=defined,
                external_targets=tuple(sorted(targets)),
                settings=settings,
                features=features,
            )
        except ValueError as exc:
            raise WorkbookError(f"{_WORKBOOK_PART}: {exc}") from None


def read_workbook(path: str | Path) -> Workbook:
    """Load a workbook file of either supported encoding, by extension.

    ``.sgwb`` files are canonical text; anything else is treated as an
    OOXML container.  The file path becomes the workbook id unless a
    canonical document names itself.
    """
    p = Path(path)
    if p.suffix.lower() == ".sgwb":
        try:
            text = p.read_text(encoding="utf-8")
        except UnicodeDecodeError as exc:
            raise WorkbookError(f"{p}: not UTF-8 text ({exc})") from None
        wb = load_canonical(text)
        if not wb.id:
            wb = dataclasses.replace(wb, id=str(p))
        return wb
    return load_workbook_file(p.read_bytes(), id=str(p))
