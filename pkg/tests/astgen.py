"""Seeded random formula-AST generator for round-trip properties.

Deliberately independent of the parser: trees are built from the node
constructors directly, then rendered and re-parsed, so a bug cannot
hide on both sides of the trip.  Coordinates stay well inside the grid
so translation by bounded offsets is always legal.
"""

from __future__ import annotations

import random

from sheetgate.formula.ast import (
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
from sheetgate.model import ErrorKind

COORD_LO, COORD_HI = 2000, 4000
MAX_OFFSET = 1999  # shifting by ±this keeps every coordinate in-grid

_SHEETS = [None, None, None, "Data", "Model2", "P & L", "odd'name"]
_BOOKS = [None, None, None, None, "Ext.xlsx", "Year End 2024.xlsx"]
_NAMES = ["Rate", "tax_rate", "_tmp", "Growth.Q1", "costBASE"]
_FUNCS = ["SUM", "IF", "VLOOKUP", "MIN", "npv", "CEILING.MATH"]
_OPS = list("=&+-*/^") + ["<>", "<", "<=", ">", ">="]
_NUMBERS = ["0", "1", "2", "17.5", "0.001", "3.", ".5", "1E+3", "2e-2", "42"]
_TEXTS = ["", "x", 'say "hi"', "tot al", "life's"]


def _coord(rng: random.Random) -> RefCoord:
    return RefCoord(
        row=rng.randint(COORD_LO, COORD_HI),
        col=rng.randint(COORD_LO, COORD_HI) % 200 + 1 + COORD_LO,
        row_abs=rng.random() < 0.3,
        col_abs=rng.random() < 0.3,
    )


def _qualifier(rng: random.Random) -> tuple:
    book = rng.choice(_BOOKS)
    sheet = rng.choice(_SHEETS)
    if book is not None and sheet is None:
        sheet = "Data"  # external refs always name a sheet
    return sheet, book


def _leaf(rng: random.Random) -> Node:
    roll = rng.random()
    if roll < 0.35:
        sheet, book = _qualifier(rng)
        return CellRef(_coord(rng), sheet, book)
    if roll < 0.5:
        sheet, book = _qualifier(rng)
        a, b = _coord(rng), _coord(rng)
        return RangeRef(CellRef(a, sheet, book), CellRef(b, sheet, book))
    if roll < 0.65:
        return number_lit(rng.choice(_NUMBERS))
    if roll < 0.75:
        return TextLit(rng.choice(_TEXTS))
    if roll < 0.85:
        book = rng.choice(_BOOKS)
        return NameRef(rng.choice(_NAMES), workbook=book)
    if roll < 0.93:
        return BoolLit(rng.random() < 0.5)
    return ErrorLit(rng.choice(list(ErrorKind)))


def random_ast(rng: random.Random, depth: int = 0) -> Node:
    if depth >= 4 or rng.random() < 0.35:
        return _leaf(rng)
    roll = rng.random()
    if roll < 0.45:
        return Binary(rng.choice(_OPS), random_ast(rng, depth + 1),
                      random_ast(rng, depth + 1))
    if roll < 0.6:
        return FuncCall(rng.choice(_FUNCS),
                        tuple(random_ast(rng, depth + 1)
                              for _ in range(rng.randint(0, 3))))
    if roll < 0.75:
        return Unary(rng.choice("+-"), random_ast(rng, depth + 1))
    if roll < 0.85:
        return Percent(random_ast(rng, depth + 1))
    return Paren(random_ast(rng, depth + 1))


def random_offset(rng: random.Random) -> tuple[int, int]:
    return rng.randint(-MAX_OFFSET, MAX_OFFSET), rng.randint(-150, 150)
