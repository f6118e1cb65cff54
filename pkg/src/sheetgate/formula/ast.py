"""Formula syntax trees and their renderers.

Two renderings share one walker: the A1 rendering (``render``), which
reproduces parseable formula text, and the host-relative rendering used
for copy-class keys (see ``normalize``), which replaces each relative
reference axis with its offset from a host cell.

The renderer inserts parentheses wherever operator precedence requires
them, so ``parse(render(ast))`` equals ``ast`` up to explicit ``Paren``
nodes for any tree, including trees built programmatically rather than
parsed.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from typing import Callable, Iterator, Optional, Tuple, Union

from ..model import MAX_COL, MAX_ROW, CellAddress, ErrorKind, column_letters


class Node:
    """Marker base class for formula AST nodes."""

    __slots__ = ()


@dataclass(frozen=True, slots=True)
class RefCoord:
    """One corner of a reference: 1-based row/col plus absoluteness flags.

    ``row_abs``/``col_abs`` record the ``$`` anchors: an absolute axis
    names the same row/column wherever the formula lives, a relative
    axis moves with the formula when copied.
    """

    row: int
    col: int
    row_abs: bool = False
    col_abs: bool = False


@dataclass(frozen=True, slots=True)
class NumberLit(Node):
    """Numeric literal; keeps the text exactly as written."""

    text: str
    value: Decimal


def number_lit(text: str) -> NumberLit:
    return NumberLit(text, Decimal(text))


@dataclass(frozen=True, slots=True)
class TextLit(Node):
    value: str


@dataclass(frozen=True, slots=True)
class BoolLit(Node):
    value: bool


@dataclass(frozen=True, slots=True)
class ErrorLit(Node):
    kind: ErrorKind


@dataclass(frozen=True, slots=True)
class CellRef(Node):
    """A single-cell reference, optionally sheet- or workbook-qualified.

    ``sheet`` is None for a host-sheet reference; ``workbook`` is the
    bracketed external workbook name, None for in-workbook references.
    """

    coord: RefCoord
    sheet: Optional[str] = None
    workbook: Optional[str] = None


@dataclass(frozen=True, slots=True)
class RangeRef(Node):
    """A rectangular range.  Both endpoints carry the same qualifier."""

    start: CellRef
    end: CellRef


@dataclass(frozen=True, slots=True)
class NameRef(Node):
    """A defined-name reference, optionally workbook-qualified."""

    name: str
    workbook: Optional[str] = None


@dataclass(frozen=True, slots=True)
class FuncCall(Node):
    name: str
    args: Tuple[Node, ...] = ()


@dataclass(frozen=True, slots=True)
class Binary(Node):
    op: str
    lhs: Node
    rhs: Node


@dataclass(frozen=True, slots=True)
class Unary(Node):
    op: str  # "+" or "-"
    operand: Node


@dataclass(frozen=True, slots=True)
class Percent(Node):
    operand: Node


@dataclass(frozen=True, slots=True)
class Paren(Node):
    inner: Node


# Precedence, loosest to tightest: comparison < concat < additive <
# multiplicative < power < unary sign < percent < atom.
BINARY_PREC = {
    "=": 1, "<>": 1, "<": 1, "<=": 1, ">": 1, ">=": 1,
    "&": 2,
    "+": 3, "-": 3,
    "*": 4, "/": 4,
    "^": 5,
}
_UNARY_PREC = 6
_PERCENT_PREC = 7
_ATOM_PREC = 8


def _prec(node: Node) -> int:
    t = type(node)
    if t is Binary:
        return BINARY_PREC[node.op]
    if t is Unary:
        return _UNARY_PREC
    if t is Percent:
        return _PERCENT_PREC
    return _ATOM_PREC


_PLAIN_SHEET_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_.]*\Z")
_CELLISH_RE = re.compile(r"[A-Za-z]{1,3}[0-9]+\Z")
_PLAIN_BOOK_RE = re.compile(r"[A-Za-z0-9_.\-]+\Z")


def _qualifier(sheet: Optional[str], workbook: Optional[str]) -> str:
    """Sheet/workbook prefix text including the trailing ``!``."""
    if sheet is None and workbook is None:
        return ""
    if sheet is None:
        raise ValueError("external cell reference requires a sheet name")
    plain = (
        _PLAIN_SHEET_RE.match(sheet)
        and not _CELLISH_RE.match(sheet)
        and (workbook is None or _PLAIN_BOOK_RE.match(workbook))
    )
    inner = sheet if workbook is None else f"[{workbook}]{sheet}"
    if plain:
        return inner + "!"
    return "'" + inner.replace("'", "''") + "'!"


def _coord_a1(c: RefCoord) -> str:
    return (("$" if c.col_abs else "") + column_letters(c.col)
            + ("$" if c.row_abs else "") + str(c.row))


def _coord_rel(c: RefCoord, host: CellAddress) -> str:
    if c.row_abs:
        row = f"R{c.row}"
    else:
        d = c.row - host.row
        row = "R" if d == 0 else f"R[{d}]"
    if c.col_abs:
        col = f"C{c.col}"
    else:
        d = c.col - host.col
        col = "C" if d == 0 else f"C[{d}]"
    return row + col


def _write(node: Node, out: list[str], host: Optional[CellAddress]) -> None:
    t = type(node)
    if t is CellRef:
        out.append(_qualifier(node.sheet, node.workbook))
        out.append(_coord_a1(node.coord) if host is None
                   else _coord_rel(node.coord, host))
    elif t is Binary:
        op = node.op
        prec = BINARY_PREC[op]
        lhs, rhs = node.lhs, node.rhs
        if _prec(lhs) < prec:
            out.append("(")
            _write(lhs, out, host)
            out.append(")")
        else:
            _write(lhs, out, host)
        out.append(op)
        if _prec(rhs) <= prec:
            out.append("(")
            _write(rhs, out, host)
            out.append(")")
        else:
            _write(rhs, out, host)
    elif t is NumberLit:
        out.append(node.text)
    elif t is FuncCall:
        out.append(node.name)
        out.append("(")
        for i, arg in enumerate(node.args):
            if i:
                out.append(",")
            _write(arg, out, host)
        out.append(")")
    elif t is RangeRef:
        out.append(_qualifier(node.start.sheet, node.start.workbook))
        if host is None:
            out.append(_coord_a1(node.start.coord))
            out.append(":")
            out.append(_coord_a1(node.end.coord))
        else:
            out.append(_coord_rel(node.start.coord, host))
            out.append(":")
            out.append(_coord_rel(node.end.coord, host))
    elif t is NameRef:
        if node.workbook is not None:
            out.append(f"[{node.workbook}]")
        out.append(node.name)
    elif t is Paren:
        out.append("(")
        _write(node.inner, out, host)
        out.append(")")
    elif t is Unary:
        # Host-relative keys drop the no-op unary plus so `=+A1` and
        # `=A1` land in the same copy class.  The operand keeps its
        # grouping if it binds looser than the sign did.
        if host is not None and node.op == "+":
            if _prec(node.operand) < _UNARY_PREC:
                out.append("(")
                _write(node.operand, out, host)
                out.append(")")
            else:
                _write(node.operand, out, host)
            return
        out.append(node.op)
        if _prec(node.operand) < _UNARY_PREC:
            out.append("(")
            _write(node.operand, out, host)
            out.append(")")
        else:
            _write(node.operand, out, host)
    elif t is Percent:
        if _prec(node.operand) < _PERCENT_PREC:
            out.append("(")
            _write(node.operand, out, host)
            out.append(")")
        else:
            _write(node.operand, out, host)
        out.append("%")
    elif t is TextLit:
        out.append('"' + node.value.replace('"', '""') + '"')
    elif t is BoolLit:
        out.append("TRUE" if node.value else "FALSE")
    elif t is ErrorLit:
        out.append(node.kind.value)
    else:
        raise TypeError(f"cannot render {type(node).__name__}")


def render(node: Node) -> str:
    """Formula text (without the leading ``=``) for an AST."""
    out: list[str] = []
    _write(node, out, None)
    return "".join(out)


def render_relative(node: Node, host: CellAddress) -> str:
    """Host-relative rendering; the basis of copy-class keys."""
    out: list[str] = []
    _write(node, out, host)
    return "".join(out)


def strip_parens(node: Node) -> Node:
    """Structural copy with every explicit Paren node removed."""
    t = type(node)
    if t is Paren:
        return strip_parens(node.inner)
    if t is Binary:
        return Binary(node.op, strip_parens(node.lhs), strip_parens(node.rhs))
    if t is Unary:
        return Unary(node.op, strip_parens(node.operand))
    if t is Percent:
        return Percent(strip_parens(node.operand))
    if t is FuncCall:
        return FuncCall(node.name, tuple(strip_parens(a) for a in node.args))
    return node


def _shift_coord(c: RefCoord, drow: int, dcol: int) -> RefCoord:
    row = c.row if c.row_abs else c.row + drow
    col = c.col if c.col_abs else c.col + dcol
    if not (1 <= row <= MAX_ROW and 1 <= col <= MAX_COL):
        raise ValueError(f"shift moves reference off the grid (to row {row}, col {col})")
    if row == c.row and col == c.col:
        return c
    return RefCoord(row, col, c.row_abs, c.col_abs)


def shift(node: Node, drow: int, dcol: int) -> Node:
    """The AST as it would read after copying by (drow, dcol).

    Relative reference axes move with the copy; absolute axes stay.
    Raises ValueError when a reference would leave the grid.
    """
    t = type(node)
    if t is CellRef:
        return CellRef(_shift_coord(node.coord, drow, dcol), node.sheet, node.workbook)
    if t is RangeRef:
        return RangeRef(shift(node.start, drow, dcol), shift(node.end, drow, dcol))
    if t is Binary:
        return Binary(node.op, shift(node.lhs, drow, dcol), shift(node.rhs, drow, dcol))
    if t is Unary:
        return Unary(node.op, shift(node.operand, drow, dcol))
    if t is Percent:
        return Percent(shift(node.operand, drow, dcol))
    if t is Paren:
        return Paren(shift(node.inner, drow, dcol))
    if t is FuncCall:
        return FuncCall(node.name, tuple(shift(a, drow, dcol) for a in node.args))
    return node


def refs_of(node: Node) -> Iterator[Union[CellRef, RangeRef, NameRef]]:
    """All references in the tree, left to right.

    Range endpoints are not reported separately; the RangeRef itself is.
    """
    t = type(node)
    if t in (CellRef, RangeRef, NameRef):
        yield node
    elif t is Binary:
        yield from refs_of(node.lhs)
        yield from refs_of(node.rhs)
    elif t in (Unary, Percent):
        yield from refs_of(node.operand)
    elif t is Paren:
        yield from refs_of(node.inner)
    elif t is FuncCall:
        for arg in node.args:
            yield from refs_of(arg)


def functions_of(node: Node) -> set[str]:
    """Uppercased names of every function called anywhere in the tree."""
    out: set[str] = set()
    _collect_functions(node, out)
    return out


def _collect_functions(node: Node, out: set[str]) -> None:
    t = type(node)
    if t is FuncCall:
        out.add(node.name.upper())
        for arg in node.args:
            _collect_functions(arg, out)
    elif t is Binary:
        _collect_functions(node.lhs, out)
        _collect_functions(node.rhs, out)
    elif t in (Unary, Percent):
        _collect_functions(node.operand, out)
    elif t is Paren:
        _collect_functions(node.inner, out)


def constants_of(
    node: Node,
    skip_sole_arg_of: frozenset[str] = frozenset(),
) -> list[tuple[Decimal, str]]:
    """Numeric literals embedded in the tree, with context paths.

    A unary sign directly wrapping a literal folds into the value, so
    ``-1`` is reported as minus one rather than a bare ``1``.  A literal
    that is the sole argument of a function named in ``skip_sole_arg_of``
    is skipped (for call idioms where a small integer is positional, not
    data).  Paths are slash-joined argument/operand slots from the root,
    so two equal literals in one formula stay distinguishable.
    """
    found: list[tuple[Decimal, str]] = []
    _collect_constants(node, "", skip_sole_arg_of, found)
    return found


def _literal_of(node: Node) -> Optional[Decimal]:
    """The numeric value of a literal possibly under unary signs."""
    sign = 1
    while type(node) is Unary:
        if node.op == "-":
            sign = -sign
        node = node.operand
    if type(node) is NumberLit:
        return node.value if sign > 0 else -node.value
    return None


def _collect_constants(node: Node, path: str, skip: frozenset[str],
                       found: list[tuple[Decimal, str]]) -> None:
    t = type(node)
    if t is NumberLit:
        found.append((node.value, path or "."))
    elif t is Unary:
        folded = _literal_of(node)
        if folded is not None:
            found.append((folded, path or "."))
        else:
            _collect_constants(node.operand, f"{path}/u{node.op}", skip, found)
    elif t is Binary:
        _collect_constants(node.lhs, f"{path}/{node.op}(lhs)", skip, found)
        _collect_constants(node.rhs, f"{path}/{node.op}(rhs)", skip, found)
    elif t is Percent:
        _collect_constants(node.operand, f"{path}/%", skip, found)
    elif t is Paren:
        _collect_constants(node.inner, f"{path}/()", skip, found)
    elif t is FuncCall:
        if (len(node.args) == 1 and node.name.upper() in skip
                and _literal_of(node.args[0]) is not None):
            return
        for i, arg in enumerate(node.args, start=1):
            _collect_constants(arg, f"{path}/{node.name.upper()}(arg{i})",
                               skip, found)


_NUMBER_TEXT_RE = re.compile(
    r"\s*[+-]?(?:[0-9][0-9,]*(?:\.[0-9]*)?|\.[0-9]+)(?:[Ee][+-]?[0-9]+)?%?\s*\Z"
)


def lexes_as_number(text: str) -> bool:
    """Whether a text value reads as a number (a suspect disguise).

    Accepts optional sign, thousands separators, decimal point,
    exponent, and a trailing percent — the shapes a typist or an import
    produces when a number lands in a text cell.
    """
    if not text or not _NUMBER_TEXT_RE.match(text):
        return False
    bare = text.strip().rstrip("%").replace(",", "")
    try:
        Decimal(bare)
    except InvalidOperation:
        return False
    return True
