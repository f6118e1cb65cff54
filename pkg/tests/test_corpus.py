"""Generated corpora: determinism, clean baselines, plant/detect agreement."""

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sheetgate.canonical import load_canonical, save_canonical
from sheetgate.corpus import (
    MANIFEST_VERSION,
    PATTERNS,
    CorpusError,
    DefectRequest,
    SeedSpec,
    generate,
)
from sheetgate.depgraph import build_graph
from sheetgate.inspection import ALL_RULES, NO_DEPENDENTS, RuleConfig, inspect
from sheetgate.model import MAX_ROW, Workbook, column_letters


def detect(result, *, exempt_outputs=True):
    """Run the rule catalog over a generated workbook."""
    wb = result.workbook
    ranges = result.output_ranges if exempt_outputs else ()
    findings = inspect(wb, build_graph(wb), RuleConfig(output_ranges=ranges))
    return findings


def located(wb: Workbook, findings):
    return {
        (
            f.rule_id,
            wb.sheets[f.cell.sheet_index].name,
            f"{column_letters(f.cell.col)}{f.cell.row}",
        )
        for f in findings
    }


def planted(result):
    return {(t.rule_id, t.sheet, t.cell) for t in result.truth}


# --- determinism ----------------------------------------------------------

@pytest.mark.parametrize("pattern", PATTERNS)
def test_same_spec_same_bytes(pattern):
    spec = SeedSpec(rng_seed=42, rows=9, cols=5, pattern=pattern,
                    defects=(DefectRequest("CONST_IN_FORMULA", 2),))
    first, second = generate(spec), generate(spec)
    assert first.canonical_text == second.canonical_text
    assert first.manifest_text() == second.manifest_text()


def test_different_seeds_give_different_inputs():
    a = generate(SeedSpec(rng_seed=0))
    b = generate(SeedSpec(rng_seed=1))
    assert a.canonical_text != b.canonical_text


@settings(max_examples=25, deadline=None)
@given(
    seed=st.integers(min_value=0, max_value=2**32),
    pattern=st.sampled_from(PATTERNS),
    rules=st.lists(st.sampled_from(ALL_RULES), unique=True, max_size=4),
)
def test_generation_is_a_pure_function_of_the_spec(seed, pattern, rules):
    spec = SeedSpec(rng_seed=seed, rows=6, cols=5, pattern=pattern,
                    defects=tuple(DefectRequest(r) for r in rules))
    first, second = generate(spec), generate(spec)
    assert first.canonical_text == second.canonical_text
    assert first.manifest_text() == second.manifest_text()
    assert first.workbook == second.workbook


# --- clean baselines ------------------------------------------------------

@pytest.mark.parametrize("pattern", PATTERNS)
@pytest.mark.parametrize("seed", [0, 5, 99])
def test_clean_workbook_raises_no_findings(pattern, seed):
    result = generate(SeedSpec(rng_seed=seed, rows=15, cols=6, pattern=pattern))
    assert detect(result) == []


def test_clean_silence_depends_on_the_declared_outputs():
    # The terminal cell has no dependents by design; the manifest's
    # output ranges are what exempt it, not luck.
    result = generate(SeedSpec(rng_seed=8, rows=6))
    findings = detect(result, exempt_outputs=False)
    assert {f.rule_id for f in findings} == {NO_DEPENDENTS}
    assert detect(result) == []


# --- planted defects are found, and nothing else --------------------------

@pytest.mark.parametrize("rule", ALL_RULES)
def test_each_plant_is_found_exactly_once(rule):
    result = generate(SeedSpec(rng_seed=13, defects=(DefectRequest(rule, 2),)))
    findings = detect(result)
    assert located(result.workbook, findings) == planted(result)
    assert len(findings) == len(result.truth) == 2


def test_full_catalog_in_one_workbook():
    result = generate(SeedSpec(
        rng_seed=11, rows=8,
        defects=tuple(DefectRequest(r) for r in ALL_RULES),
    ))
    findings = detect(result)
    assert located(result.workbook, findings) == planted(result)
    assert len(findings) == len(ALL_RULES)


@settings(max_examples=15, deadline=None)
@given(
    seed=st.integers(min_value=0, max_value=10**6),
    pattern=st.sampled_from(PATTERNS),
    rules=st.lists(st.sampled_from(ALL_RULES), unique=True, min_size=1, max_size=5),
)
def test_detection_matches_truth_for_any_mix(seed, pattern, rules):
    spec = SeedSpec(rng_seed=seed, rows=6, cols=5, pattern=pattern,
                    defects=tuple(DefectRequest(r) for r in rules))
    result = generate(spec)
    findings = detect(result)
    assert located(result.workbook, findings) == planted(result)
    assert len(findings) == len(result.truth)


def test_requested_counts_are_honoured():
    result = generate(SeedSpec(rng_seed=2, defects=(DefectRequest("ABS_REF", 3),)))
    assert len(result.truth) == 3
    assert len({t.cell for t in result.truth}) == 3
    assert all(t.rule_id == "ABS_REF" for t in result.truth)


def test_truth_is_sorted_row_major():
    result = generate(SeedSpec(
        rng_seed=4,
        defects=(DefectRequest("UNUSED_INPUT"), DefectRequest("CONST_IN_FORMULA")),
    ))
    rows = [int(t.cell[1:]) for t in result.truth]
    assert rows == sorted(rows)


# --- workbook shape -------------------------------------------------------

def test_hidden_store_sheet_only_when_referenced():
    with_store = generate(SeedSpec(rng_seed=1, defects=(DefectRequest("HIDDEN_REF"),)))
    names = [s.name for s in with_store.workbook.sheets]
    assert names == ["Model", "Store"]
    assert with_store.workbook.sheets[1].hidden

    without = generate(SeedSpec(rng_seed=1, defects=(DefectRequest("ABS_REF"),)))
    assert [s.name for s in without.workbook.sheets] == ["Model"]


def test_external_books_are_declared_when_linked():
    linked = generate(SeedSpec(rng_seed=1, defects=(DefectRequest("EXTERNAL_LINK"),)))
    assert linked.workbook.external_targets == ("Feed.xlsx",)
    clean = generate(SeedSpec(rng_seed=1))
    assert clean.workbook.external_targets == ()


def test_collector_range_tracks_collected_bands():
    none_collected = generate(SeedSpec(
        rng_seed=6, defects=(DefectRequest("UNUSED_INPUT"), DefectRequest("ERROR_CELL")),
    ))
    assert len(none_collected.output_ranges) == 1  # just the clean terminal

    collected = generate(SeedSpec(rng_seed=6, defects=(DefectRequest("TEXT_NUMBER"),)))
    assert len(collected.output_ranges) == 2
    assert collected.output_ranges[1].startswith("Model!H")


def test_workbook_id_names_the_spec():
    result = generate(SeedSpec(rng_seed=7, rows=10, cols=5, pattern="rowwise"))
    assert result.workbook.id == "rowwise-10x5-seed7"


# --- round trips ----------------------------------------------------------

def test_generated_text_round_trips():
    result = generate(SeedSpec(
        rng_seed=3, defects=tuple(DefectRequest(r) for r in ALL_RULES),
    ))
    reloaded = load_canonical(result.canonical_text)
    assert reloaded == result.workbook
    assert save_canonical(reloaded) == result.canonical_text


def test_manifest_is_valid_json_with_the_spec_echoed():
    spec = SeedSpec(rng_seed=5, rows=7, cols=4, pattern="ledger",
                    defects=(DefectRequest("BLOCK_REF", 2),))
    result = generate(spec)
    doc = json.loads(result.manifest_text())
    assert doc["version"] == MANIFEST_VERSION
    assert doc["workbook_id"] == result.workbook.id
    assert doc["spec"] == {
        "rng_seed": 5, "rows": 7, "cols": 4, "pattern": "ledger",
        "defects": [{"rule_id": "BLOCK_REF", "count": 2}],
    }
    assert doc["output_ranges"] == list(result.output_ranges)
    assert len(doc["truth"]) == 2
    assert set(doc["truth"][0]) == {"rule_id", "sheet", "cell", "detail"}


# --- seed spec validation -------------------------------------------------

@pytest.mark.parametrize("kwargs, hint", [
    (dict(pattern="waterfall"), "unknown pattern"),
    (dict(pattern="ledger", cols=2), "at least 3 columns"),
    (dict(pattern="rowwise", cols=3), "at least 4 columns"),
    (dict(cols=27), "at most 26"),
    (dict(rows=3), "at least 4"),
    (dict(defects=(DefectRequest("NOT_A_RULE"),)), "unknown rule id"),
    (dict(defects=(DefectRequest("ABS_REF", 0),)), "at least 1"),
])
def test_bad_specs_are_rejected(kwargs, hint):
    with pytest.raises(CorpusError, match=hint):
        SeedSpec(rng_seed=0, **kwargs)


@pytest.mark.parametrize("spec", [
    SeedSpec(rng_seed=1, rows=MAX_ROW),
    SeedSpec(rng_seed=1, defects=(DefectRequest("PATTERN_BREAK", 300_000),)),
])
def test_layouts_past_the_grid_fail_before_generating(spec):
    with pytest.raises(CorpusError, match="grid ends"):
        generate(spec)
