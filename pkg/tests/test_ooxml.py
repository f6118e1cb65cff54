"""OOXML container loading: value types, settings, flags, error cases."""

import zipfile
from decimal import Decimal
from io import BytesIO

import pytest

from sheetgate.canonical import save_canonical
from sheetgate.model import (
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
    WorkbookError,
)
from sheetgate.ooxml import load_workbook_file, read_workbook

from xlsxbuild import SheetSpec, F, SharedUse, Inline, Err, build_xlsx

XML_MAIN = "http://schemas.openxmlformats.org/spreadsheetml/2006/main"


def load(sheets, **kwargs):
    return load_workbook_file(build_xlsx(sheets, **kwargs), id="fixture.xlsx")


def cell(wb, a1, sheet=0):
    return wb.cell(CellAddress.from_a1(sheet, a1))


# --- cell values ----------------------------------------------------------

def test_minimal_one_cell_file():
    wb = load({"Sheet1": {"A1": 5}})
    assert len(wb.sheets) == 1
    assert cell(wb, "A1") == Number(Decimal(5))


def test_decimal_text_is_preserved_exactly():
    wb = load({"S": {"A1": 0.1, "B1": 2.5}})
    assert cell(wb, "A1") == Number(Decimal("0.1"))
    assert cell(wb, "B1") == Number(Decimal("2.5"))


def test_shared_and_inline_strings():
    wb = load({"S": {"A1": "alpha", "B1": "alpha", "C1": Inline("beta")}})
    assert cell(wb, "A1") == Text("alpha")
    assert cell(wb, "B1") == Text("alpha")
    assert cell(wb, "C1") == Text("beta")


def test_booleans_and_errors():
    wb = load({"S": {"A1": True, "B1": False, "C1": Err("#DIV/0!")}})
    assert cell(wb, "A1") == Boolean(True)
    assert cell(wb, "B1") == Boolean(False)
    assert cell(wb, "C1") == Error(ErrorKind.DIV0)


def test_formula_with_cached_number_and_string():
    wb = load({"S": {"A1": F("1+1", cached=2), "B1": F('"a"&"b"', cached="ab")}})
    assert cell(wb, "A1") == Formula("=1+1", Number(Decimal(2)))
    assert cell(wb, "B1") == Formula('="a"&"b"', Text("ab"))


def test_formula_without_cached_value():
    wb = load({"S": {"A1": F("B1*2")}})
    assert cell(wb, "A1") == Formula("=B1*2", None)


def test_formula_with_cached_error():
    wb = load({"S": {"A1": F("1/0", cached=Err("#DIV/0!"))}})
    assert cell(wb, "A1") == Formula("=1/0", Error(ErrorKind.DIV0))


def test_absent_cells_read_blank():
    from sheetgate.model import BLANK

    wb = load({"S": {"B2": 1}})
    assert cell(wb, "A1") is BLANK


def test_rich_text_runs_concatenate_and_skip_phonetics():
    sst = (
        '<?xml version="1.0" encoding="UTF-8" standalone="yes"?>'
        f'<sst xmlns="{XML_MAIN}" count="1" uniqueCount="1">'
        "<si><r><t>net</t></r><r><t> profit</t></r>"
        "<rPh sb=\"0\" eb=\"2\"><t>ignored</t></rPh></si></sst>"
    )
    data = build_xlsx(
        {"S": {"A1": "placeholder"}},
        extra_parts={"xl/sharedStrings.xml": sst.encode()},
    )
    wb = load_workbook_file(data)
    assert cell(wb, "A1") == Text("net profit")


def test_unknown_cell_type_is_reported_with_location():
    bad = (
        '<?xml version="1.0"?>'
        f'<worksheet xmlns="{XML_MAIN}"><sheetData>'
        '<row r="1"><c r="A1" t="q"><v>5</v></c></row>'
        "</sheetData></worksheet>"
    )
    data = build_xlsx({"S": {"A1": 1}}, extra_parts={"xl/worksheets/sheet1.xml": bad.encode()})
    with pytest.raises(WorkbookError, match=r"sheet1\.xml.*A1.*'q'"):
        load_workbook_file(data)


def test_bad_shared_string_index_is_reported():
    bad = (
        '<?xml version="1.0"?>'
        f'<worksheet xmlns="{XML_MAIN}"><sheetData>'
        '<row r="1"><c r="A1" t="s"><v>99</v></c></row>'
        "</sheetData></worksheet>"
    )
    data = build_xlsx({"S": {}}, extra_parts={"xl/worksheets/sheet1.xml": bad.encode()})
    with pytest.raises(WorkbookError, match="string index"):
        load_workbook_file(data)


def test_cells_without_addresses_take_implied_positions():
    implied = (
        '<?xml version="1.0"?>'
        f'<worksheet xmlns="{XML_MAIN}"><sheetData>'
        "<row><c><v>1</v></c><c><v>2</v></c></row>"
        "<row><c><v>3</v></c></row>"
        "</sheetData></worksheet>"
    )
    data = build_xlsx({"S": {}}, extra_parts={"xl/worksheets/sheet1.xml": implied.encode()})
    wb = load_workbook_file(data)
    assert cell(wb, "A1") == Number(Decimal(1))
    assert cell(wb, "B1") == Number(Decimal(2))
    assert cell(wb, "A2") == Number(Decimal(3))


# --- shared formula groups ------------------------------------------------

def test_shared_formulas_expand_relative_axes():
    wb = load({"S": {
        "A1": 1, "A2": 2, "A3": 3,
        "B1": F("A1*$A$1", shared_si="0", shared_ref="B1:B3"),
        "B2": SharedUse("0"),
        "B3": SharedUse("0"),
    }})
    assert cell(wb, "B2") == Formula("=A2*$A$1", None)
    assert cell(wb, "B3") == Formula("=A3*$A$1", None)


def test_shared_master_that_does_not_parse_is_copied_verbatim():
    wb = load({"S": {
        "B1": F("{1,2}", shared_si="0", shared_ref="B1:B2"),
        "B2": SharedUse("0"),
    }})
    assert cell(wb, "B2") == Formula("={1,2}", None)


def test_shared_use_before_definition_is_an_error():
    wb_bytes = build_xlsx({"S": {"B1": SharedUse("9")}})
    with pytest.raises(WorkbookError, match="shared formula group '9'"):
        load_workbook_file(wb_bytes)


# --- sheet state ----------------------------------------------------------

def test_hidden_rows_columns_protection_and_sheet_state():
    wb = load({
        "Main": SheetSpec(cells={"A1": 1}, hidden_rows=[2, 4], hidden_cols=[(3, 5)]),
        "Back": SheetSpec(cells={}, hidden=True, protected=True),
    })
    assert wb.sheets[0].hidden_rows == frozenset({2, 4})
    assert wb.sheets[0].hidden_cols == frozenset({3, 4, 5})
    assert not wb.sheets[0].hidden
    assert wb.sheets[1].hidden and wb.sheets[1].protected


def test_very_hidden_state_counts_as_hidden():
    data = build_xlsx({"S": {"A1": 1}})
    # splice the attribute into the workbook part
    src = zipfile.ZipFile(BytesIO(data))
    out = BytesIO()
    with zipfile.ZipFile(out, "w") as zf:
        for item in src.namelist():
            payload = src.read(item)
            if item == "xl/workbook.xml":
                payload = payload.replace(b'sheetId="1"', b'sheetId="1" state="veryHidden"')
            zf.writestr(item, payload)
    wb = load_workbook_file(out.getvalue())
    assert wb.sheets[0].hidden


# --- workbook-level settings and features ---------------------------------

def test_default_settings_without_calc_pr():
    wb = load({"S": {"A1": 1}})
    assert wb.settings.calc_mode is CalcMode.AUTOMATIC
    assert wb.settings.recalc_before_save
    assert not wb.settings.iteration_enabled


def test_manual_calculation_attribute_is_honoured():
    data = build_xlsx({"S": {"A1": 1}}, calc_mode="manual", calc_on_save=False)
    # the attribute really is in the stored XML ...
    part = zipfile.ZipFile(BytesIO(data)).read("xl/workbook.xml")
    assert b'calcMode="manual"' in part and b'calcOnSave="0"' in part
    # ... and the loader agrees with it
    wb = load_workbook_file(data)
    assert wb.settings.calc_mode is CalcMode.MANUAL
    assert not wb.settings.recalc_before_save


def test_iteration_settings():
    wb = load({"S": {}}, iterate=True, iterate_count=50)
    assert wb.settings.iteration_enabled
    assert wb.settings.max_iterations == 50
    wb = load({"S": {}}, iterate=True)
    assert wb.settings.max_iterations == 100


def test_macro_project_part_sets_the_flag():
    data = build_xlsx({"S": {"A1": 1}}, vba=True)
    assert "xl/vbaProject.bin" in zipfile.ZipFile(BytesIO(data)).namelist()
    assert load_workbook_file(data).features.has_vba
    assert not load({"S": {"A1": 1}}).features.has_vba


def test_advanced_feature_probes():
    wb = load({
        "S": SheetSpec(cells={}, scenarios=True),
        "T": SheetSpec(cells={}, data_consolidate=True),
    }, pivot=True)
    assert wb.features.has_pivot_tables
    assert wb.features.has_scenarios
    assert wb.features.has_data_consolidation

    plain = load({"S": {"A1": 1}})
    assert plain.features == type(plain.features)()


# --- defined names and external links --------------------------------------

def test_defined_names_survive_and_builtins_are_skipped():
    wb = load(
        {"S": {"A1": 1}},
        defined_names={"RATE": "S!$A$1", "_xlnm.Print_Area": "S!$A$1:$B$2"},
    )
    assert dict(wb.defined_names) == {"RATE": "S!$A$1"}


def test_external_book_ordinals_are_rewritten_to_names():
    wb = load(
        {"S": {"A1": F("[1]Data!A1*2"), "B1": F('"[1] literal"&A1')}},
        external_books=["Feed.xlsx"],
    )
    assert cell(wb, "A1") == Formula("=[Feed.xlsx]Data!A1*2", None)
    # bracketed text inside string literals is left alone
    assert cell(wb, "B1") == Formula('="[1] literal"&A1', None)
    assert wb.external_targets == ("Feed.xlsx",)


def test_defined_name_bodies_get_the_same_rewrite():
    wb = load(
        {"S": {"A1": 1}},
        defined_names={"FEED": "[1]Data!$A$1"},
        external_books=["Feed.xlsx"],
    )
    assert wb.defined_names["FEED"] == "[Feed.xlsx]Data!$A$1"


def test_unmatched_ordinals_and_plain_mentions_still_count_as_targets():
    wb = load({"S": {"A1": F("[Other.xlsx]S!A1"), "B1": F("[3]S!A1")}})
    assert wb.external_targets == ("3", "Other.xlsx")


def test_linked_book_is_a_target_even_when_never_referenced():
    wb = load({"S": {"A1": 1}}, external_books=["Rates.xlsx"])
    assert wb.external_targets == ("Rates.xlsx",)


def test_external_path_urls_reduce_to_file_names():
    wb = load({"S": {"A1": F("[1]Data!A1")}},
              external_books=["file:///C:/feeds/FX%20Rates.xlsx"])
    assert wb.external_targets == ("FX Rates.xlsx",)


# --- container-level errors ------------------------------------------------

def test_not_a_zip():
    with pytest.raises(WorkbookError, match="ZIP"):
        load_workbook_file(b"this is not a container")


def test_missing_workbook_part_names_the_part():
    data = build_xlsx({"S": {"A1": 1}}, drop_parts=["xl/workbook.xml"])
    with pytest.raises(WorkbookError, match="xl/workbook.xml"):
        load_workbook_file(data)


def test_malformed_sheet_xml_names_the_part():
    data = build_xlsx(
        {"S": {"A1": 1}},
        extra_parts={"xl/worksheets/sheet1.xml": b"<worksheet><unclosed"},
    )
    with pytest.raises(WorkbookError, match=r"sheet1\.xml"):
        load_workbook_file(data)


def test_missing_worksheet_part_for_a_sheet_entry():
    data = build_xlsx({"S": {"A1": 1}}, drop_parts=["xl/worksheets/sheet1.xml"])
    with pytest.raises(WorkbookError, match=r"missing part.*sheet1\.xml"):
        load_workbook_file(data)


def test_duplicate_sheet_names_are_rejected():
    data = build_xlsx({"S": {"A1": 1}, "s": {"A1": 2}})
    with pytest.raises(WorkbookError, match="duplicate sheet name"):
        load_workbook_file(data)


def test_dimension_beyond_the_grid_is_rejected():
    data = build_xlsx({"S": SheetSpec(cells={"A1": 1}, dimension="A1:A2000000")})
    with pytest.raises(WorkbookError, match="exceeds"):
        load_workbook_file(data)


def test_dimension_at_the_grid_limit_is_fine():
    wb = load({"S": SheetSpec(cells={"A1": 1}, dimension="A1:XFD1048576")})
    assert cell(wb, "A1") == Number(Decimal(1))


def test_row_outside_the_grid_is_rejected():
    bad = (
        '<?xml version="1.0"?>'
        f'<worksheet xmlns="{XML_MAIN}"><sheetData>'
        '<row r="1048577"><c r="A1048577"><v>1</v></c></row>'
        "</sheetData></worksheet>"
    )
    data = build_xlsx({"S": {}}, extra_parts={"xl/worksheets/sheet1.xml": bad.encode()})
    with pytest.raises(WorkbookError, match="outside the grid"):
        load_workbook_file(data)


# --- the two encodings meet ------------------------------------------------

def test_ooxml_load_matches_a_hand_built_model():
    wb = load({
        "Calc": SheetSpec(
            cells={"A1": 100, "B1": F("A1*0.2", cached=20), "C1": "label"},
            hidden_rows=[9],
        ),
    }, defined_names={"RATE": "Calc!$A$1"}, calc_mode="manual")
    expected = Workbook(
        id="fixture.xlsx",
        sheets=(
            Sheet(
                name="Calc",
                cells={
                    CellAddress(0, 1, 1): Number(Decimal(100)),
                    CellAddress(0, 1, 2): Formula("=A1*0.2", Number(Decimal(20))),
                    CellAddress(0, 1, 3): Text("label"),
                },
                hidden_rows=frozenset({9}),
            ),
        ),
        defined_names={"RATE": "Calc!$A$1"},
        settings=type(wb.settings)(calc_mode=CalcMode.MANUAL),
    )
    assert wb == expected


def test_read_workbook_dispatches_on_extension(tmp_path):
    xlsx = tmp_path / "book.xlsx"
    xlsx.write_bytes(build_xlsx({"S": {"A1": 7}}))
    wb = read_workbook(xlsx)
    assert wb.id == str(xlsx)
    assert cell(wb, "A1") == Number(Decimal(7))

    sgwb = tmp_path / "book.sgwb"
    sgwb.write_text(save_canonical(wb), encoding="utf-8")
    again = read_workbook(sgwb)
    assert again.sheets == wb.sheets
    assert again.id == wb.id  # the document names itself; path not imposed


def test_read_workbook_falls_back_to_path_identity(tmp_path):
    anon = Workbook(sheets=(Sheet(name="S", cells={}),))
    path = tmp_path / "anon.sgwb"
    path.write_text(save_canonical(anon), encoding="utf-8")
    assert read_workbook(path).id == str(path)
