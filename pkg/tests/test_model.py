from decimal import Decimal

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sheetgate.model import (
    BLANK,
    Blank,
    Boolean,
    CalcMode,
    CellAddress,
    Error,
    ErrorKind,
    Formula,
    Number,
    Sheet,
    Text,
    Workbook,
    WorkbookSettings,
    column_index,
    column_letters,
    external_mentions,
    is_valid_name,
)


@pytest.mark.parametrize(
    "col,letters",
    [(1, "A"), (2, "B"), (26, "Z"), (27, "AA"), (52, "AZ"), (53, "BA"),
     (702, "ZZ"), (703, "AAA"), (16384, "XFD")],
)
def test_column_letters_known_values(col, letters):
    assert column_letters(col) == letters
    assert column_index(letters) == col


@given(st.integers(min_value=1, max_value=16384))
def test_column_roundtrip(col):
    assert column_index(column_letters(col)) == col


def test_column_index_case_insensitive():
    assert column_index("aa") == column_index("AA") == 27


@pytest.mark.parametrize("bad", ["", "A1", "1A", "$A"])
def test_column_index_rejects_junk(bad):
    with pytest.raises(ValueError):
        column_index(bad)


def test_a1_roundtrip():
    addr = CellAddress(0, 7, 28)
    assert addr.a1 == "AB7"
    assert CellAddress.from_a1(0, "AB7") == addr


@pytest.mark.parametrize("bad", ["", "7", "AB", "A0x", "ABCD1", "$A$1"])
def test_from_a1_rejects(bad):
    with pytest.raises(ValueError):
        CellAddress.from_a1(0, bad)


def test_address_bounds():
    CellAddress(0, 1_048_576, 16_384)  # corners are fine
    with pytest.raises(ValueError):
        CellAddress(0, 0, 1)
    with pytest.raises(ValueError):
        CellAddress(0, 1, 16_385)
    with pytest.raises(ValueError):
        CellAddress(0, 1_048_577, 1)


def test_address_ordering_is_row_major():
    cells = [CellAddress(0, 2, 1), CellAddress(0, 1, 9), CellAddress(1, 1, 1)]
    assert sorted(cells) == [CellAddress(0, 1, 9), CellAddress(0, 2, 1),
                             CellAddress(1, 1, 1)]


def test_error_kind_from_text():
    assert ErrorKind.from_text("#DIV/0!") is ErrorKind.DIV0
    with pytest.raises(ValueError):
        ErrorKind.from_text("#BOGUS!")


def test_number_must_be_finite():
    Number(Decimal("1e6000"))
    with pytest.raises(ValueError):
        Number(Decimal("NaN"))
    with pytest.raises(ValueError):
        Number(Decimal("Infinity"))


def test_formula_source_normalized_to_leading_equals():
    assert Formula("A1+1").source == "=A1+1"
    assert Formula("=A1+1").source == "=A1+1"


def test_formula_cached_cannot_be_formula_or_blank():
    Formula("=A1", cached=Number(Decimal(3)))
    with pytest.raises(ValueError):
        Formula("=A1", cached=Formula("=B1"))
    with pytest.raises(ValueError):
        Formula("=A1", cached=Blank())


def test_sheet_rejects_stored_blanks():
    addr = CellAddress(0, 1, 1)
    with pytest.raises(ValueError):
        Sheet(name="S", cells={addr: BLANK})


def test_workbook_cell_lookup_and_blank_equivalence():
    a1 = CellAddress(0, 1, 1)
    wb = Workbook(sheets=(Sheet(name="S", cells={a1: Text("x")}),))
    assert wb.cell(a1) == Text("x")
    assert wb.cell(CellAddress(0, 9, 9)) is BLANK
    with pytest.raises(IndexError):
        wb.cell(CellAddress(3, 1, 1))


def test_workbook_rejects_duplicate_sheet_names_case_insensitive():
    with pytest.raises(ValueError):
        Workbook(sheets=(Sheet(name="Model"), Sheet(name="MODEL")))


def test_workbook_rejects_misfiled_cells():
    addr = CellAddress(1, 1, 1)  # claims sheet 1, stored on sheet 0
    with pytest.raises(ValueError):
        Workbook(sheets=(Sheet(name="S", cells={addr: Text("x")}),))


def test_workbook_rejects_invalid_defined_names():
    for bad in ("A1", "XFD1048576", "1tax", "TRUE", "has space"):
        with pytest.raises(ValueError):
            Workbook(sheets=(Sheet(name="S"),), defined_names={bad: "1"})
    Workbook(sheets=(Sheet(name="S"),),
             defined_names={"TaxRate": "0.2", "_x.y": "Sheet1!$A$1"})


def test_sheet_index_is_case_insensitive():
    wb = Workbook(sheets=(Sheet(name="Inputs"), Sheet(name="Calc")))
    assert wb.sheet_index("calc") == 1
    assert wb.sheet_index("Missing") is None


def test_settings_validation():
    WorkbookSettings(calc_mode=CalcMode.MANUAL, max_iterations=1)
    with pytest.raises(ValueError):
        WorkbookSettings(max_iterations=0)


def test_formula_cells_iterates_row_major():
    s0 = Sheet(name="A", cells={
        CellAddress(0, 2, 1): Formula("=X1"),
        CellAddress(0, 1, 2): Formula("=Y1"),
        CellAddress(0, 1, 1): Number(Decimal(1)),
    })
    s1 = Sheet(name="B", cells={CellAddress(1, 1, 1): Formula("=Z1")})
    wb = Workbook(sheets=(s0, s1))
    addrs = [a.a1 for a, _ in wb.formula_cells()]
    assert addrs == ["B1", "A2", "A1"]


def test_is_valid_name():
    assert is_valid_name("Rate")
    assert is_valid_name("_tmp2")
    assert is_valid_name("tax.rate")
    assert not is_valid_name("B2")
    assert not is_valid_name("$A$1")
    assert not is_valid_name("false")
    assert not is_valid_name("")


def test_external_mentions_skips_string_literals():
    src = '=[Book One.xlsx]Data!A1 + "[not real]" & [Other.xlsx]S!B2'
    assert list(external_mentions(src)) == ["Book One.xlsx", "Other.xlsx"]


def test_cell_values_hash_and_compare_structurally():
    assert Number(Decimal("5")) == Number(Decimal("5"))
    assert hash(Error(ErrorKind.NA)) == hash(Error(ErrorKind.NA))
    assert Boolean(True) != Boolean(False)
    assert len({Text("a"), Text("a"), Text("b")}) == 2
