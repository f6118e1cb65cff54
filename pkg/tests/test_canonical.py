import json
from decimal import Decimal

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sheetgate.canonical import CanonicalError, load_canonical, save_canonical
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
    WorkbookFeatures,
    WorkbookSettings,
)

MINIMAL = '{"format": 1, "sheets": [{"name": "S"}]}'


def doc(**overrides):
    base = {"format": 1, "sheets": [{"name": "S", "cells": {}}]}
    base.update(overrides)
    return json.dumps(base)


def test_minimal_document_loads_with_defaults():
    wb = load_canonical(MINIMAL)
    assert wb.id == ""
    assert wb.sheets[0].name == "S"
    assert wb.settings.calc_mode is CalcMode.AUTOMATIC
    assert wb.settings.recalc_before_save
    assert not wb.features.has_vba
    assert wb.external_targets == ()


def test_format_version_is_required():
    with pytest.raises(CanonicalError, match="format"):
        load_canonical('{"sheets": []}')
    with pytest.raises(CanonicalError, match="format"):
        load_canonical('{"format": 2, "sheets": []}')


@pytest.mark.parametrize(
    "text,fragment",
    [
        ('{"format": 1, "bogus": 1}', "bogus"),
        (doc(settings={"calc_mod": "manual"}), "settings.calc_mod"),
        (doc(features={"has_vba": 1}), "features.has_vba"),
        ('{"format": 1, "sheets": [{"name": "S", "cells": {"A1": {"x": 1}}}]}',
         "sheets[0].cells.A1.x"),
        ('{"format": 1, "sheets": [{"name": "S", "cells": {"A1": {}}}]}',
         "exactly one"),
        ('{"format": 1, "sheets": [{"name": "S", "cells": {"A1": {"n": 1, "s": "x"}}}]}',
         "exactly one"),
        ('{"format": 1, "sheets": [{"name": "S", "cells": {"A1": {"s": "x", "cached": {"n": 1}}}}]}',
         "cached"),
        ('{"format": 1, "sheets": [{"name": "S", "cells": {"a1": {"n": 1}}}]}',
         "canonical form"),
        ('{"format": 1, "sheets": [{"name": "S", "cells": {"ZZZ9": {"n": 1}}}]}',
         "sheets[0].cells.ZZZ9"),
        ('{"format": 1, "sheets": [{"name": "S", "cells": {"A1": {"e": "#OOPS!"}}}]}',
         "#OOPS!"),
        ('{"format": 1, "sheets": [{"name": "S", "cells": {"A1": {"f": "="}}}]}',
         "empty"),
        ('{"format": 1, "sheets": [{"cells": {}}]}', "name"),
        (doc(names={"A1": "2"}), "names.A1"),
        (doc(settings={"max_iterations": 0}), "max_iterations"),
        ('{"format": 1, "sheets": [{"name": "S", "hidden_rows": [0]}]}', "hidden_rows"),
    ],
)
def test_schema_violations_report_paths(text, fragment):
    with pytest.raises(CanonicalError) as exc:
        load_canonical(text)
    assert fragment in str(exc.value)


def test_duplicate_cell_keys_rejected():
    text = ('{"format": 1, "sheets": [{"name": "S", '
            '"cells": {"A1": {"n": 1}, "A1": {"n": 2}}}]}')
    with pytest.raises(CanonicalError, match="duplicate"):
        load_canonical(text)


def test_non_finite_numbers_rejected():
    with pytest.raises(CanonicalError):
        load_canonical(doc().replace('"cells": {}', '"cells": {"A1": {"n": NaN}}'))


def test_numbers_survive_exactly():
    text = ('{"format": 1, "sheets": [{"name": "S", "cells": {'
            '"A1": {"n": 0.1}, "A2": {"n": 1e-7}, '
            '"A3": {"n": 123456789012345678901234567890}}}]}')
    wb = load_canonical(text)
    assert wb.cell(CellAddress(0, 1, 1)) == Number(Decimal("0.1"))
    assert wb.cell(CellAddress(0, 2, 1)) == Number(Decimal("1e-7"))
    assert wb.cell(CellAddress(0, 3, 1)) == Number(
        Decimal("123456789012345678901234567890"))
    # and 0.1 is not the binary float approximation
    assert wb.cell(CellAddress(0, 1, 1)).value == Decimal("0.1")


def test_formula_sources_normalized_and_cached_decoded():
    text = ('{"format": 1, "sheets": [{"name": "S", "cells": {'
            '"B2": {"f": "A1+1", "cached": {"e": "#DIV/0!"}}}}]}')
    wb = load_canonical(text)
    cell = wb.cell(CellAddress(0, 2, 2))
    assert cell == Formula("=A1+1", cached=Error(ErrorKind.DIV0))


def test_external_targets_collected_from_formulas():
    text = ('{"format": 1, "external_targets": ["Declared.xlsx"], '
            '"sheets": [{"name": "S", "cells": {'
            '"A1": {"f": "=[Linked.xlsx]Data!B2"}}}]}')
    wb = load_canonical(text)
    assert wb.external_targets == ("Declared.xlsx", "Linked.xlsx")


def sample_workbook() -> Workbook:
    s0 = Sheet(
        name="Model",
        cells={
            CellAddress(0, 1, 1): Text("Rate"),
            CellAddress(0, 1, 2): Number(Decimal("0.175")),
            CellAddress(0, 2, 2): Formula("=B1*2", cached=Number(Decimal("0.35"))),
            CellAddress(0, 3, 2): Error(ErrorKind.NA),
            CellAddress(0, 4, 2): Boolean(True),
        },
        hidden_rows=frozenset({9, 4}),
        protected=True,
    )
    s1 = Sheet(name="Später Blatt", hidden=True,
               cells={CellAddress(1, 1, 1): Formula("=Model!B2+1")})
    return Workbook(
        id="sample",
        sheets=(s0, s1),
        defined_names={"RATE": "Model!$B$1", "Alpha": "0.5"},
        external_targets=("Other.xlsx",),
        settings=WorkbookSettings(calc_mode=CalcMode.MANUAL,
                                  recalc_before_save=False,
                                  iteration_enabled=True,
                                  max_iterations=25),
        features=WorkbookFeatures(has_vba=True),
    )


def test_value_roundtrip():
    wb = sample_workbook()
    assert load_canonical(save_canonical(wb)) == wb


def test_save_is_deterministic_and_text_stable():
    wb = sample_workbook()
    text = save_canonical(wb)
    assert save_canonical(wb) == text
    assert save_canonical(load_canonical(text)) == text


def test_saved_form_is_fully_explicit():
    text = save_canonical(load_canonical(MINIMAL))
    doc = json.loads(text)
    assert doc["settings"]["calc_mode"] == "automatic"
    assert doc["features"]["has_vba"] is False
    assert doc["sheets"][0]["hidden"] is False
    assert doc["sheets"][0]["cells"] == {}


def test_cells_saved_row_major():
    text = ('{"format": 1, "sheets": [{"name": "S", "cells": {'
            '"B2": {"n": 1}, "A10": {"n": 2}, "A2": {"n": 3}}}]}')
    saved = save_canonical(load_canonical(text))
    order = [line.split('"')[1] for line in saved.splitlines()
             if line.strip().startswith('"') and '": {' in line and
             line.split('"')[1][0].isalpha() and line.split('"')[1][-1].isdigit()]
    assert order == ["A2", "B2", "A10"]


def test_number_text_precision_is_preserved():
    # 5 vs 5.0 vs 5E+1 are distinct decimal texts and must round-trip
    text = ('{"format": 1, "id": "", "sheets": [{"name": "S", "cells": {'
            '"A1": {"n": 5}, "A2": {"n": 5.0}, "A3": {"n": 5E+1}}}]}')
    saved = save_canonical(load_canonical(text))
    assert '"A1": {"n": 5}' in saved.replace("\n      ", " ").replace("\n    ", " ") or '"n": 5\n' in saved
    assert "5.0" in saved
    assert "5E+1" in saved


cell_values = st.one_of(
    st.builds(Number, st.decimals(allow_nan=False, allow_infinity=False,
                                  places=6, min_value=-10**9, max_value=10**9)),
    st.builds(Text, st.text(max_size=20)),
    st.builds(Boolean, st.booleans()),
    st.builds(Error, st.sampled_from(list(ErrorKind))),
    st.builds(Formula, st.just("=A1+1"),
              st.one_of(st.none(), st.builds(Number, st.just(Decimal("2"))))),
)


@settings(max_examples=60, deadline=None)
@given(st.dictionaries(
    st.tuples(st.integers(1, 40), st.integers(1, 30)), cell_values, max_size=25))
def test_roundtrip_property(cells):
    sheet = Sheet(name="P", cells={
        CellAddress(0, r, c): v for (r, c), v in cells.items()})
    wb = Workbook(id="prop", sheets=(sheet,))
    assert load_canonical(save_canonical(wb)) == wb
    assert save_canonical(load_canonical(save_canonical(wb))) == save_canonical(wb)
