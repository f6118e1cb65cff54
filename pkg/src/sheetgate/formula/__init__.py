"""Formula parsing, rendering, and copy-class normalization."""

from .ast import (
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
    constants_of,
    functions_of,
    lexes_as_number,
    refs_of,
    render,
    shift,
    strip_parens,
)
from .parser import (
    FormulaError,
    FormulaSyntaxError,
    UnsupportedConstruct,
    parse_formula,
)
from .normalize import NormalizedFormula, normalize

__all__ = [
    "Binary", "BoolLit", "CellRef", "ErrorLit", "FuncCall", "NameRef",
    "Node", "NumberLit", "Paren", "Percent", "RangeRef", "RefCoord",
    "TextLit", "Unary",
    "constants_of", "functions_of", "lexes_as_number", "refs_of", "render",
    "shift", "strip_parens",
    "FormulaError", "FormulaSyntaxError", "UnsupportedConstruct",
    "parse_formula",
    "NormalizedFormula", "normalize",
]
