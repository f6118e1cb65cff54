"""Formula dependency graph.

Edges run from each formula cell to the things it reads: single cells,
rectangular ranges, defined names (resolved one level deep to whatever
their definitions reference), and external workbooks.  The reverse
direction answers "who reads this cell" — with the twist that a huge
range is never expanded into millions of per-cell edges.  Ranges up to
``expand_cap`` cells become real reverse edges; larger ones are kept
whole and answered by rectangle membership, so a whole-sheet total
neither bloats memory nor hides a dependent.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple, Union

from .formula.ast import CellRef, NameRef, Node, RangeRef, refs_of
from .formula.parser import FormulaError, parse_formula
from .model import (
    BLANK,
    MAX_COL,
    MAX_ROW,
    Blank,
    CellAddress,
    Formula,
    Workbook,
    column_letters,
)

DEFAULT_EXPAND_CAP = 4096


def parse_workbook(wb: Workbook) -> Dict[CellAddress, Union[Node, FormulaError]]:
    """Parse every formula cell once; failures are stored, not raised."""
    parsed: Dict[CellAddress, Union[Node, FormulaError]] = {}
    for addr, cell in wb.formula_cells():
        try:
            parsed[addr] = parse_formula(cell.source)
        except FormulaError as exc:
            parsed[addr] = exc
    return parsed


@dataclass(frozen=True, slots=True)
class RangeNode:
    """A rectangular range target, corners normalized."""

    sheet_index: int
    start_row: int
    start_col: int
    end_row: int
    end_col: int

    @property
    def area(self) -> int:
        return (self.end_row - self.start_row + 1) * (self.end_col - self.start_col + 1)

    def covers(self, addr: CellAddress) -> bool:
        return (addr.sheet_index == self.sheet_index
                and self.start_row <= addr.row <= self.end_row
                and self.start_col <= addr.col <= self.end_col)

    def cells(self) -> Iterable[CellAddress]:
        """Member addresses, row-major.  Only sane for small areas."""
        for row in range(self.start_row, self.end_row + 1):
            for col in range(self.start_col, self.end_col + 1):
                yield CellAddress(self.sheet_index, row, col)

    @property
    def a1(self) -> str:
        return (f"{column_letters(self.start_col)}{self.start_row}:"
                f"{column_letters(self.end_col)}{self.end_row}")


@dataclass(frozen=True, slots=True)
class ExternalNode:
    """A reference that leaves the workbook."""

    workbook: str
    sheet: Optional[str]
    text: str


@dataclass(frozen=True, slots=True)
class NameNode:
    """A name (or name-like reference) that did not resolve to cells."""

    name: str
    reason: str


Target = Union[CellAddress, RangeNode, ExternalNode, NameNode]


@dataclass(frozen=True, slots=True)
class BlankPrecedents:
    """Blank cells a formula reads, plus ranges too large to sweep."""

    blanks: Tuple[CellAddress, ...]
    oversized: Tuple[RangeNode, ...]


@dataclass(frozen=True, slots=True)
class InterSheetLink:
    cell: CellAddress
    target_sheet: str


@dataclass(frozen=True, slots=True)
class ExternalLink:
    cell: CellAddress
    target_workbook: str


@dataclass(frozen=True, slots=True)
class CrossLinks:
    inter_sheet: Tuple[InterSheetLink, ...]
    external: Tuple[ExternalLink, ...]


def _coord_text(coord) -> str:
    return (("$" if coord.col_abs else "") + column_letters(coord.col)
            + ("$" if coord.row_abs else "") + str(coord.row))


class DepGraph:
    """Precedent/dependent edges over one workbook.

    Build with ``build_graph``; instances are read-only after that.
    """

    __slots__ = ("workbook", "expand_cap", "_precedents", "_dependents",
                 "_big_ranges", "_sheet_names")

    def __init__(self, workbook: Workbook, expand_cap: int):
        self.workbook = workbook
        self.expand_cap = expand_cap
        self._precedents: Dict[CellAddress, Tuple[Target, ...]] = {}
        self._dependents: Dict[CellAddress, List[CellAddress]] = {}
        self._big_ranges: Dict[int, List[Tuple[RangeNode, CellAddress]]] = {}
        self._sheet_names = {s.name.casefold(): i for i, s in enumerate(workbook.sheets)}

    # ---- queries ----

    def precedents(self, addr: CellAddress) -> Tuple[Target, ...]:
        """Everything the formula at ``addr`` reads (empty for non-formulas)."""
        return self._precedents.get(addr, ())

    def formula_cells(self) -> Tuple[CellAddress, ...]:
        """Formula cells that parsed, sheets in order, row-major."""
        return tuple(self._precedents)

    def dependents(self, addr: CellAddress) -> Tuple[CellAddress, ...]:
        """Formula cells that read ``addr``, directly or through a range."""
        direct = self._dependents.get(addr)
        out = list(direct) if direct else []
        for rnode, reader in self._big_ranges.get(addr.sheet_index, ()):
            if rnode.covers(addr):
                out.append(reader)
        if not out:
            return ()
        out = sorted(set(out))
        return tuple(out)

    def has_dependents(self, addr: CellAddress) -> bool:
        if self._dependents.get(addr):
            return True
        return any(rnode.covers(addr)
                   for rnode, _ in self._big_ranges.get(addr.sheet_index, ()))

    def blank_precedents(self, addr: CellAddress) -> BlankPrecedents:
        """Which of a formula's precedents are blank right now.

        Ranges above the expansion cap are reported unswept rather than
        scanned cell by cell.
        """
        wb = self.workbook
        blanks: List[CellAddress] = []
        oversized: List[RangeNode] = []
        seen = set()
        for target in self._precedents.get(addr, ()):
            t = type(target)
            if t is CellAddress:
                if target not in seen and isinstance(wb.cell(target), Blank):
                    blanks.append(target)
                    seen.add(target)
            elif t is RangeNode:
                if target.area > self.expand_cap:
                    oversized.append(target)
                else:
                    cells = wb.sheets[target.sheet_index].cells
                    for member in target.cells():
                        if member not in seen and member not in cells:
                            blanks.append(member)
                            seen.add(member)
        return BlankPrecedents(tuple(blanks), tuple(oversized))

    def cross_links(self) -> CrossLinks:
        """References that leave their sheet or the workbook entirely."""
        inter: List[InterSheetLink] = []
        external: List[ExternalLink] = []
        names = self.workbook.sheets
        for addr, targets in self._precedents.items():
            seen_sheets = set()
            seen_books = set()
            host_sheet = addr.sheet_index
            for target in targets:
                t = type(target)
                if t is CellAddress or t is RangeNode:
                    s = target.sheet_index
                    if s != host_sheet and s not in seen_sheets:
                        seen_sheets.add(s)
                        inter.append(InterSheetLink(addr, names[s].name))
                elif t is ExternalNode:
                    if target.workbook not in seen_books:
                        seen_books.add(target.workbook)
                        external.append(ExternalLink(addr, target.workbook))
        return CrossLinks(tuple(inter), tuple(external))

    def cycles(self) -> List[List[CellAddress]]:
        """Circular-reference groups, each row-major, smallest first.

        Tarjan over formula cells only; range targets contribute the
        formula cells they cover, so a cycle through a large range is
        still found without expanding it.
        """
        nodes = self._precedents
        formula_by_sheet: Dict[int, List[CellAddress]] = {}
        for addr in nodes:
            formula_by_sheet.setdefault(addr.sheet_index, []).append(addr)

        def successors(addr: CellAddress) -> List[CellAddress]:
            out = set()
            for target in nodes[addr]:
                t = type(target)
                if t is CellAddress:
                    if target in nodes:
                        out.add(target)
                elif t is RangeNode:
                    peers = formula_by_sheet.get(target.sheet_index, ())
                    if target.area <= len(peers):
                        sheet_nodes = nodes
                        for member in target.cells():
                            if member in sheet_nodes:
                                out.add(member)
                    else:
                        for peer in peers:
                            if target.covers(peer):
                                out.add(peer)
            return sorted(out)

        # Iterative Tarjan SCC.
        index: Dict[CellAddress, int] = {}
        low: Dict[CellAddress, int] = {}
        on_stack: set = set()
        stack: List[CellAddress] = []
        counter = 0
        sccs: List[List[CellAddress]] = []
        succ_cache: Dict[CellAddress, List[CellAddress]] = {}

        for root in nodes:
            if root in index:
                continue
            work = [(root, 0)]
            while work:
                node, child_i = work.pop()
                if child_i == 0:
                    index[node] = low[node] = counter
                    counter += 1
                    stack.append(node)
                    on_stack.add(node)
                    succ_cache[node] = successors(node)
                children = succ_cache[node]
                advanced = False
                for i in range(child_i, len(children)):
                    child = children[i]
                    if child not in index:
                        work.append((node, i + 1))
                        work.append((child, 0))
                        advanced = True
                        break
                    if child in on_stack and index[child] < low[node]:
                        low[node] = index[child]
                if advanced:
                    continue
                if low[node] == index[node]:
                    group = []
                    while True:
                        member = stack.pop()
                        on_stack.discard(member)
                        group.append(member)
                        if member == node:
                            break
                    if len(group) > 1 or node in succ_cache[node]:
                        sccs.append(sorted(group))
                if work:
                    parent = work[-1][0]
                    if low[node] < low[parent]:
                        low[parent] = low[node]
        sccs.sort(key=lambda group: group[0])
        return sccs


def _resolve_name_targets(
    wb: Workbook,
    graph: DepGraph,
    name: str,
    definition: str,
    host_sheet: int,
) -> Tuple[Target, ...]:
    """Targets contributed by one defined-name definition (depth 1)."""
    try:
        tree = parse_formula(definition)
    except FormulaError:
        return (NameNode(name, "definition does not parse"),)
    out: List[Target] = []
    for ref in refs_of(tree):
        t = type(ref)
        if t is NameRef:
            out.append(NameNode(ref.name, "name defined via another name"))
        else:
            resolved = _resolve_ref(wb, graph, ref, host_sheet)
            if resolved is not None:
                out.append(resolved)
    return tuple(out)


def _resolve_ref(wb: Workbook, graph: DepGraph, ref, host_sheet: int) -> Optional[Target]:
    """CellRef/RangeRef -> CellAddress/RangeNode/ExternalNode/NameNode."""
    if type(ref) is CellRef:
        if ref.workbook is not None:
            text = f"[{ref.workbook}]{ref.sheet}!{_coord_text(ref.coord)}"
            return ExternalNode(ref.workbook, ref.sheet, text)
        if ref.sheet is None:
            sheet = host_sheet
        else:
            sheet = graph._sheet_names.get(ref.sheet.casefold())
            if sheet is None:
                return NameNode(f"{ref.sheet}!{_coord_text(ref.coord)}",
                                "reference to unknown sheet")
        coord = ref.coord
        if not (1 <= coord.row <= MAX_ROW and 1 <= coord.col <= MAX_COL):
            return NameNode(_coord_text(coord), "reference outside the grid")
        return CellAddress(sheet, coord.row, coord.col)
    # RangeRef
    start, end = ref.start, ref.end
    if start.workbook is not None:
        text = (f"[{start.workbook}]{start.sheet}!"
                f"{_coord_text(start.coord)}:{_coord_text(end.coord)}")
        return ExternalNode(start.workbook, start.sheet, text)
    if start.sheet is None:
        sheet = host_sheet
    else:
        sheet = graph._sheet_names.get(start.sheet.casefold())
        if sheet is None:
            return NameNode(
                f"{start.sheet}!{_coord_text(start.coord)}:{_coord_text(end.coord)}",
                "reference to unknown sheet")
    r1, r2 = sorted((start.coord.row, end.coord.row))
    c1, c2 = sorted((start.coord.col, end.coord.col))
    if not (1 <= r1 and r2 <= MAX_ROW and 1 <= c1 and c2 <= MAX_COL):
        return NameNode(f"{_coord_text(start.coord)}:{_coord_text(end.coord)}",
                        "reference outside the grid")
    return RangeNode(sheet, r1, c1, r2, c2)


def build_graph(
    wb: Workbook,
    parsed: Optional[Dict[CellAddress, Union[Node, FormulaError]]] = None,
    expand_cap: int = DEFAULT_EXPAND_CAP,
) -> DepGraph:
    """Construct the dependency graph for a workbook.

    ``parsed`` may carry the output of ``parse_workbook`` to avoid
    re-parsing; formulas that failed to parse get no graph entry.
    """
    if parsed is None:
        parsed = parse_workbook(wb)
    graph = DepGraph(wb, expand_cap)
    precedents = graph._precedents
    dependents = graph._dependents
    big_ranges = graph._big_ranges
    names_lower = {name.casefold(): defn for name, defn in wb.defined_names.items()}
    name_cache: Dict[Tuple[str, int], Tuple[Target, ...]] = {}

    for sheet_index, sheet in enumerate(wb.sheets):
        for addr in sheet.sorted_addresses():
            node = parsed.get(addr)
            if node is None or isinstance(node, FormulaError):
                continue
            targets: List[Target] = []
            seen: set = set()
            for ref in refs_of(node):
                if type(ref) is NameRef:
                    if ref.workbook is not None:
                        resolved_iter: Tuple[Target, ...] = (ExternalNode(
                            ref.workbook, None, f"[{ref.workbook}]{ref.name}"),)
                    else:
                        key = (ref.name.casefold(), sheet_index)
                        cached = name_cache.get(key)
                        if cached is None:
                            defn = names_lower.get(key[0])
                            if defn is None:
                                cached = (NameNode(ref.name, "name is not defined"),)
                            else:
                                cached = _resolve_name_targets(
                                    wb, graph, ref.name, defn, sheet_index)
                            name_cache[key] = cached
                        resolved_iter = cached
                else:
                    one = _resolve_ref(wb, graph, ref, sheet_index)
                    resolved_iter = (one,) if one is not None else ()
                for target in resolved_iter:
                    if target in seen:
                        continue
                    seen.add(target)
                    targets.append(target)
                    t = type(target)
                    if t is CellAddress:
                        dependents.setdefault(target, []).append(addr)
                    elif t is RangeNode:
                        if target.area <= expand_cap:
                            for member in target.cells():
                                dependents.setdefault(member, []).append(addr)
                        else:
                            big_ranges.setdefault(target.sheet_index, []).append(
                                (target, addr))
            precedents[addr] = tuple(targets)
    return graph
