"""Workbook setup review: graded severities, heuristics, stable order."""

import pytest
from hypothesis import given, settings as hyp_settings, strategies as st

from sheetgate.depgraph import build_graph
from sheetgate.model import CalcMode, WorkbookFeatures, WorkbookSettings
from sheetgate.setup_risk import (
    ADVANCED_FEATURE,
    HIDDEN_COLS,
    HIDDEN_ROWS,
    HIDDEN_SHEET,
    ITERATION_ENABLED,
    MACROS_PRESENT,
    MANUAL_RECALC,
    NAMES_IN_USE,
    NO_PROTECTION,
    NO_RECALC_BEFORE_SAVE,
    SetupConfig,
    assess_setup,
)
from sheetgate.severity import Severity

from wbbuild import make_wb


def assess(wb):
    return assess_setup(wb, build_graph(wb))


def kinds(findings):
    return [f.kind for f in findings]


def one(findings, kind):
    matches = [f for f in findings if f.kind == kind]
    assert len(matches) == 1, f"expected exactly one {kind}, got {matches}"
    return matches[0]


# --- calculation settings ---------------------------------------------

def test_automatic_calc_is_silent():
    wb = make_wb({"S": {"A1": "=1+1"}})
    assert MANUAL_RECALC not in kinds(assess(wb))
    assert NO_RECALC_BEFORE_SAVE not in kinds(assess(wb))


def test_manual_with_recalc_on_save_is_medium():
    wb = make_wb(
        {"S": {"A1": "=1+1"}},
        settings=WorkbookSettings(calc_mode=CalcMode.MANUAL, recalc_before_save=True),
    )
    findings = assess(wb)
    assert one(findings, MANUAL_RECALC).severity is Severity.MEDIUM
    assert NO_RECALC_BEFORE_SAVE not in kinds(findings)


def test_manual_without_recalc_on_save_is_high_and_doubled():
    wb = make_wb(
        {"S": {"A1": "=1+1"}},
        settings=WorkbookSettings(calc_mode=CalcMode.MANUAL, recalc_before_save=False),
    )
    findings = assess(wb)
    assert one(findings, MANUAL_RECALC).severity is Severity.HIGH
    assert one(findings, NO_RECALC_BEFORE_SAVE).severity is Severity.HIGH


def test_iteration_without_cycles_is_low():
    wb = make_wb(
        {"S": {"A1": "=B1", "B1": 2}},
        settings=WorkbookSettings(iteration_enabled=True),
    )
    f = one(assess(wb), ITERATION_ENABLED)
    assert f.severity is Severity.LOW
    assert "no circular" in f.detail


def test_iteration_with_cycles_is_high():
    wb = make_wb(
        {"S": {"A1": "=B1", "B1": "=A1"}},
        settings=WorkbookSettings(iteration_enabled=True),
    )
    f = one(assess(wb), ITERATION_ENABLED)
    assert f.severity is Severity.HIGH
    assert "1 circular" in f.detail


def test_iteration_off_is_silent_even_with_cycles():
    wb = make_wb({"S": {"A1": "=B1", "B1": "=A1"}})
    assert ITERATION_ENABLED not in kinds(assess(wb))


# --- macros ------------------------------------------------------------

def test_vba_project_flagged_at_workbook_scope():
    wb = make_wb({"S": {"A1": 1}}, features=WorkbookFeatures(has_vba=True))
    f = one(assess(wb), MACROS_PRESENT)
    assert f.location == "workbook"
    assert f.severity is Severity.MEDIUM


def test_unknown_function_suggests_udf():
    wb = make_wb({"S": {"A1": "=FROBNICATE(B1)", "B1": 1}})
    f = one(assess(wb), MACROS_PRESENT)
    assert f.location == "sheet:S"
    assert "FROBNICATE" in f.detail
    assert "S!A1" in f.detail


def test_builtin_and_defined_names_are_not_udfs():
    wb = make_wb(
        {"S": {"A1": "=SUM(B1:B2)", "A2": "=TAXOF(B1)", "B1": 1, "B2": 2}},
        defined_names={"TAXOF": "S!$B$1"},
    )
    assert MACROS_PRESENT not in kinds(assess(wb))


def test_udf_reported_once_at_first_use():
    wb = make_wb({"S": {"A1": "=ZAP(1)", "A2": "=ZAP(2)", "B1": "=ZAP(3)"}})
    matches = [f for f in assess(wb) if f.kind == MACROS_PRESENT]
    assert len(matches) == 1
    assert "S!A1" in matches[0].detail


# --- structure ---------------------------------------------------------

def test_hidden_sheet_rows_cols():
    wb = make_wb(
        {"Main": {"A1": 1}, "Store": {"A1": 2}},
        sheet_kwargs={
            "Store": {
                "hidden": True,
                "hidden_rows": frozenset({4, 2}),
                "hidden_cols": frozenset({3}),
            }
        },
    )
    findings = assess(wb)
    sheet_f = one(findings, HIDDEN_SHEET)
    assert sheet_f.location == "sheet:Store"
    rows_f = one(findings, HIDDEN_ROWS)
    assert "2 hidden row(s): 2, 4" in rows_f.detail
    cols_f = one(findings, HIDDEN_COLS)
    assert "1 hidden column(s): C" in cols_f.detail


def test_unprotected_sheet_with_formulas_flagged():
    wb = make_wb(
        {"Calc": {"A1": "=1+1"}, "Data": {"A1": 7}, "Locked": {"A1": "=2+2"}},
        sheet_kwargs={"Locked": {"protected": True}},
    )
    matches = [f for f in assess(wb) if f.kind == NO_PROTECTION]
    assert [f.location for f in matches] == ["sheet:Calc"]
    assert matches[0].severity is Severity.LOW


# --- features and names -------------------------------------------------

def test_advanced_features_listed_individually():
    wb = make_wb(
        {"S": {"A1": 1}},
        features=WorkbookFeatures(
            has_pivot_tables=True, has_scenarios=True, has_data_consolidation=True
        ),
    )
    details = [f.detail for f in assess(wb) if f.kind == ADVANCED_FEATURE]
    assert details == [
        "workbook uses pivot tables",
        "workbook uses scenario manager",
        "workbook uses data consolidation",
    ]


def test_names_in_use_is_info_and_requires_a_reference():
    unused = make_wb({"S": {"A1": "=B1", "B1": 3}}, defined_names={"RATE": "S!$B$1"})
    assert NAMES_IN_USE not in kinds(assess(unused))

    used = make_wb({"S": {"A1": "=RATE*2", "B1": 3}}, defined_names={"RATE": "S!$B$1"})
    f = one(assess(used), NAMES_IN_USE)
    assert f.severity is Severity.INFO
    assert "RATE" in f.detail


# --- configuration -----------------------------------------------------

def test_severity_override():
    wb = make_wb({"Calc": {"A1": "=1+1"}})
    config = SetupConfig(severities={NO_PROTECTION: Severity.MEDIUM})
    f = one(assess_setup(wb, build_graph(wb), config), NO_PROTECTION)
    assert f.severity is Severity.MEDIUM


@pytest.mark.parametrize("kind", [MANUAL_RECALC, ITERATION_ENABLED, NAMES_IN_USE, "BOGUS"])
def test_graded_and_unknown_kinds_not_configurable(kind):
    with pytest.raises(ValueError):
        SetupConfig(severities={kind: Severity.HIGH})


# --- ordering and monotonicity ------------------------------------------

def test_workbook_scope_precedes_sheet_scope():
    wb = make_wb(
        {"S": {"A1": "=MYFN(1)"}},
        sheet_kwargs={"S": {"hidden_rows": frozenset({9})}},
        settings=WorkbookSettings(calc_mode=CalcMode.MANUAL),
        features=WorkbookFeatures(has_vba=True),
    )
    ks = kinds(assess(wb))
    assert ks.index(MANUAL_RECALC) < ks.index(HIDDEN_ROWS)
    assert ks == kinds(assess(wb))  # stable across runs


@hyp_settings(max_examples=60, deadline=None)
@given(
    rows=st.frozensets(st.integers(min_value=1, max_value=12), max_size=5),
    extra=st.integers(min_value=1, max_value=12),
)
def test_hiding_more_never_removes_findings(rows, extra):
    def build(hidden_rows):
        return make_wb(
            {"S": {"A1": "=B1+B2", "B1": 1, "B2": 2}},
            sheet_kwargs={"S": {"hidden_rows": hidden_rows}},
        )

    base = {(f.kind, f.location) for f in assess(build(rows))}
    more = {(f.kind, f.location) for f in assess(build(rows | {extra}))}
    assert base <= more
