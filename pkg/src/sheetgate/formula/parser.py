"""Recursive-descent formula parser.

Covers the grammar the analyses need: numbers, strings, booleans, error
literals, cell and range references (with ``$`` anchors, sheet and
external-workbook qualifiers), defined names, function calls, the
binary/unary operators, and postfix percent.

Anything outside that — array literals, 3-D sheet spans, reference
union/intersection — raises ``UnsupportedConstruct`` rather than
guessing.  Plain syntax errors raise ``FormulaSyntaxError`` with the
character offset and what was expected, so a failure can be pointed at.
"""

from __future__ import annotations

import re
from typing import Optional

from ..model import ErrorKind, column_index
from .ast import (
    BINARY_PREC,
    Binary,
    BoolLit,
    CellRef,
    ErrorLit,
    FuncCall,
    NameRef,
    Node,
    NumberLit,
    Paren,
    Percent,
    RangeRef,
    RefCoord,
    TextLit,
    Unary,
    number_lit,
)


class FormulaError(ValueError):
    """Base class for formula parse failures."""


class FormulaSyntaxError(FormulaError):
    """Source text that does not match the grammar.

    ``offset`` indexes into the original source (including any leading
    ``=``); ``expected`` says what would have been acceptable there.
    """

    def __init__(self, message: str, offset: int, expected: Optional[str] = None):
        self.offset = offset
        self.expected = expected
        tail = f" (expected {expected})" if expected else ""
        super().__init__(f"{message} at offset {offset}{tail}")


class UnsupportedConstruct(FormulaError):
    """Grammar understood but deliberately out of scope."""

    def __init__(self, construct: str, offset: int):
        self.construct = construct
        self.offset = offset
        super().__init__(f"unsupported construct at offset {offset}: {construct}")


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)(?:[Ee][+-]?[0-9]+)?)
  | (?P<string>"(?:""|[^"])*")
  | (?P<error>\#REF!|\#DIV/0!|\#VALUE!|\#NAME\?|\#N/A|\#NUM!|\#NULL!)
  | (?P<quoted>'(?:''|[^'])*')
  | (?P<bracket>\[[^\[\]]*\])
  | (?P<cellref>\$?[A-Za-z]{1,3}\$?[0-9]+(?![A-Za-z0-9_.$\\]))
  | (?P<ident>[A-Za-z_\\][A-Za-z0-9_.\\]*)
  | (?P<op><=|>=|<>|[=<>&+\-*/^%(),:!{};])
    """,
    re.VERBOSE,
)

_CELLREF_PARTS = re.compile(r"(\$?)([A-Za-z]{1,3})(\$?)([0-9]+)\Z")

# Token kinds that can begin an operand; finding one where an operator
# belongs means two operands sit side by side.
_OPERAND_STARTS = frozenset(
    ["number", "string", "error", "quoted", "bracket", "cellref", "ident"]
)

EOF = "eof"


def _tokenize(source: str, start: int) -> list[tuple[str, str, int]]:
    tokens = []
    pos = start
    append = tokens.append
    for m in _TOKEN_RE.finditer(source, start):
        if m.start() != pos:
            raise FormulaSyntaxError(
                f"unexpected character {source[pos]!r}", pos)
        kind = m.lastgroup
        pos = m.end()
        if kind != "ws":
            append((kind, m.group(), m.start()))
    if pos != len(source):
        raise FormulaSyntaxError(f"unexpected character {source[pos]!r}", pos)
    append((EOF, "", len(source)))
    return tokens


def _coord(text: str) -> RefCoord:
    m = _CELLREF_PARTS.match(text)
    if m is None:  # the lexer guarantees shape; guard anyway
        raise FormulaSyntaxError(f"malformed cell reference {text!r}", 0)
    return RefCoord(
        row=int(m.group(4)),
        col=column_index(m.group(2)),
        row_abs=bool(m.group(3)),
        col_abs=bool(m.group(1)),
    )


class _Parser:
    __slots__ = ("tokens", "pos")

    def __init__(self, tokens: list[tuple[str, str, int]]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.pos]

    def take(self) -> tuple[str, str, int]:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op: str, expected: str) -> None:
        kind, text, offset = self.tokens[self.pos]
        if kind != "op" or text != op:
            raise FormulaSyntaxError(
                f"unexpected {self._describe()}", offset, expected)
        self.pos += 1

    def _describe(self) -> str:
        kind, text, _ = self.tokens[self.pos]
        return "end of formula" if kind == EOF else f"{kind} {text!r}"

    # ---- expressions ----

    def expression(self, min_prec: int = 1) -> Node:
        node = self.unary()
        tokens = self.tokens
        while True:
            kind, text, _ = tokens[self.pos]
            if kind != "op":
                return node
            prec = BINARY_PREC.get(text)
            if prec is None or prec < min_prec:
                return node
            self.pos += 1
            node = Binary(text, node, self.expression(prec + 1))

    def unary(self) -> Node:
        kind, text, offset = self.tokens[self.pos]
        if kind == "op" and (text == "-" or text == "+"):
            self.pos += 1
            return Unary(text, self.unary())
        node = self.atom()
        while True:
            kind, text, _ = self.tokens[self.pos]
            if kind == "op" and text == "%":
                self.pos += 1
                node = Percent(node)
            else:
                return node

    def atom(self) -> Node:
        kind, text, offset = self.take()
        if kind == "cellref":
            return self.reference_tail(_coord(text), None, None, offset)
        if kind == "number":
            return number_lit(text)
        if kind == "ident":
            return self.ident_atom(text, offset)
        if kind == "string":
            return TextLit(text[1:-1].replace('""', '"'))
        if kind == "error":
            return ErrorLit(ErrorKind.from_text(text))
        if kind == "quoted":
            return self.quoted_qualifier(text, offset)
        if kind == "bracket":
            return self.bracket_qualifier(text, offset)
        if kind == "op":
            if text == "(":
                inner = self.expression()
                k, t, o = self.peek()
                if k == "op" and t == ",":
                    raise UnsupportedConstruct("reference union", o)
                self.expect_op(")", "')'")
                return Paren(inner)
            if text == "{":
                raise UnsupportedConstruct("array literal", offset)
        self.pos -= 1
        raise FormulaSyntaxError(
            f"unexpected {self._describe()}", offset, "a value or reference")

    # ---- identifiers: names, booleans, functions, sheet qualifiers ----

    def ident_atom(self, text: str, offset: int) -> Node:
        kind, nxt, _ = self.peek()
        if kind == "op":
            if nxt == "(":
                self.pos += 1
                return FuncCall(text, self.call_args())
            if nxt == "!":
                self.pos += 1
                return self.qualified_reference(None, text, offset)
            if nxt == ":" and self.is_sheet_span():
                raise UnsupportedConstruct("3-D sheet span", offset)
        upper = text.upper()
        if upper == "TRUE":
            return BoolLit(True)
        if upper == "FALSE":
            return BoolLit(False)
        return NameRef(text)

    def is_sheet_span(self) -> bool:
        # at ':' — does `ident : ident !` follow?
        if self.pos + 2 >= len(self.tokens):
            return False
        t1 = self.tokens[self.pos + 1]
        t2 = self.tokens[self.pos + 2]
        return t1[0] in ("ident", "quoted") and t2[0] == "op" and t2[1] == "!"

    def call_args(self) -> tuple[Node, ...]:
        kind, text, _ = self.peek()
        if kind == "op" and text == ")":
            self.pos += 1
            return ()
        args = [self.expression()]
        while True:
            kind, text, offset = self.take()
            if kind == "op" and text == ")":
                return tuple(args)
            if kind == "op" and text == ",":
                args.append(self.expression())
            else:
                self.pos -= 1
                raise FormulaSyntaxError(
                    f"unexpected {self._describe()}", offset, "',' or ')'")

    # ---- qualified references ----

    def quoted_qualifier(self, text: str, offset: int) -> Node:
        content = text[1:-1].replace("''", "'")
        if not content:
            raise FormulaSyntaxError("empty sheet name", offset)
        workbook = None
        sheet = content
        if content.startswith("[") and "]" in content:
            close = content.index("]")
            workbook = content[1:close]
            sheet = content[close + 1:]
            if not workbook or not sheet:
                raise FormulaSyntaxError("malformed workbook qualifier", offset)
        if ":" in sheet:
            raise UnsupportedConstruct("3-D sheet span", offset)
        self.expect_op("!", "'!' after sheet name")
        return self.qualified_reference(workbook, sheet, offset)

    def bracket_qualifier(self, text: str, offset: int) -> Node:
        workbook = text[1:-1]
        if not workbook:
            raise FormulaSyntaxError("empty workbook qualifier", offset)
        kind, name, name_offset = self.take()
        if kind != "ident":
            self.pos -= 1
            raise FormulaSyntaxError(
                f"unexpected {self._describe()}", name_offset,
                "sheet or defined name after workbook qualifier")
        kind, nxt, _ = self.peek()
        if kind == "op" and nxt == "!":
            self.pos += 1
            return self.qualified_reference(workbook, name, offset)
        if kind == "op" and nxt == ":" and self.is_sheet_span():
            raise UnsupportedConstruct("3-D sheet span", offset)
        return NameRef(name, workbook=workbook)

    def qualified_reference(self, workbook: Optional[str], sheet: str,
                            offset: int) -> Node:
        kind, text, ref_offset = self.take()
        if kind != "cellref":
            self.pos -= 1
            raise FormulaSyntaxError(
                f"unexpected {self._describe()}", ref_offset,
                "cell reference after sheet qualifier")
        return self.reference_tail(_coord(text), sheet, workbook, offset)

    def reference_tail(self, coord: RefCoord, sheet: Optional[str],
                       workbook: Optional[str], offset: int) -> Node:
        """A parsed cell coordinate, possibly the start of a range."""
        start = CellRef(coord, sheet, workbook)
        kind, text, _ = self.peek()
        if not (kind == "op" and text == ":"):
            return start
        self.pos += 1
        kind, text, end_offset = self.take()
        if kind == "cellref":
            return RangeRef(start, CellRef(_coord(text), sheet, workbook))
        # A qualifier on the far endpoint: fine when it names the same
        # sheet again, out of scope when it does not.
        end_wb, end_sheet = workbook, sheet
        if kind == "quoted":
            content = text[1:-1].replace("''", "'")
            end_wb, end_sheet = None, content
            if content.startswith("[") and "]" in content:
                close = content.index("]")
                end_wb, end_sheet = content[1:close], content[close + 1:]
            self.expect_op("!", "'!' after sheet name")
        elif kind == "ident":
            k2, t2, _ = self.peek()
            if k2 == "op" and t2 == "!":
                self.pos += 1
                end_wb, end_sheet = None, text
            else:
                self.pos -= 1
                raise FormulaSyntaxError(
                    f"unexpected {self._describe()}", end_offset,
                    "cell reference after ':'")
        else:
            self.pos -= 1
            raise FormulaSyntaxError(
                f"unexpected {self._describe()}", end_offset,
                "cell reference after ':'")
        same_sheet = (end_sheet or "").casefold() == (sheet or "").casefold()
        same_book = (end_wb or "").casefold() == (workbook or "").casefold()
        if not (same_sheet and same_book):
            raise UnsupportedConstruct("range spanning sheets", end_offset)
        kind, text, c_offset = self.take()
        if kind != "cellref":
            self.pos -= 1
            raise FormulaSyntaxError(
                f"unexpected {self._describe()}", c_offset,
                "cell reference after sheet qualifier")
        return RangeRef(start, CellRef(_coord(text), sheet, workbook))


def parse_formula(source: str) -> Node:
    """Parse formula text (with or without the leading ``=``) to an AST."""
    start = 1 if source.startswith("=") else 0
    tokens = _tokenize(source, start)
    if tokens[0][0] == EOF:
        raise FormulaSyntaxError("empty formula", start)
    parser = _Parser(tokens)
    node = parser.expression()
    kind, text, offset = parser.peek()
    if kind != EOF:
        if kind in _OPERAND_STARTS or (kind == "op" and text == "("):
            raise UnsupportedConstruct("implicit intersection", offset)
        raise FormulaSyntaxError(
            f"unexpected {parser._describe()}", offset, "end of formula")
    return node
