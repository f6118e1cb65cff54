"""Canonical JSON workbook format (``.sgwb``).

A workbook serialized losslessly to a single JSON document, used for
test fixtures, generated audit corpora, and as a loader-independent
interchange form.  The writer is deterministic: fixed key order,
row-major cells, sorted name/target lists, and exact decimal number
text — saving the same workbook twice yields identical bytes.

Identities:

* ``load(save(wb)) == wb`` for every workbook.
* ``save(load(text)) == text`` for documents already in saved form
  (the writer makes every default explicit, so a hand-written document
  that omits defaults round-trips to its normalized equivalent).

Strictness: unknown keys anywhere are an error, reported with a path
such as ``sheets[0].cells.B2``, so schema drift never passes silently.
"""

from __future__ import annotations

import json
from decimal import Decimal, InvalidOperation
from typing import Any, Mapping

from .model import (
    BLANK,
    MAX_COL,
    MAX_ROW,
    Boolean,
    CalcMode,
    CellAddress,
    CellValue,
    Error,
    ErrorKind,
    Formula,
    Number,
    Sheet,
    Text,
    Workbook,
    WorkbookError,
    WorkbookFeatures,
    WorkbookSettings,
    external_mentions,
    is_valid_name,
)

FORMAT_VERSION = 1

SUFFIX = ".sgwb"


class CanonicalError(WorkbookError):
    """Malformed canonical document.  ``path`` points at the offender."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


def _fail(path: list[str], message: str) -> "CanonicalError":
    return CanonicalError("".join(path) or "(document)", message)


def _no_duplicate_keys(pairs):
    d = {}
    for key, value in pairs:
        if key in d:
            raise CanonicalError(key, "duplicate key")
        d[key] = value
    return d


def _reject_constant(text):
    raise CanonicalError("(document)", f"non-finite number {text!r} not allowed")


def _expect(obj: Any, kind: type, path: list[str], what: str) -> Any:
    if kind is bool:
        if not isinstance(obj, bool):
            raise _fail(path, f"expected {what}, got {type(obj).__name__}")
    elif kind is int:
        if not isinstance(obj, int) or isinstance(obj, bool):
            raise _fail(path, f"expected {what}, got {type(obj).__name__}")
    elif not isinstance(obj, kind) or isinstance(obj, bool):
        raise _fail(path, f"expected {what}, got {type(obj).__name__}")
    return obj


def _check_keys(obj: Mapping, allowed: tuple, path: list[str]) -> None:
    for key in obj:
        if key not in allowed:
            raise _fail(path + [".", str(key)], "unknown key")


def _decimal(obj: Any, path: list[str]) -> Decimal:
    if isinstance(obj, bool) or not isinstance(obj, (int, Decimal)):
        raise _fail(path, f"expected number, got {type(obj).__name__}")
    value = Decimal(obj) if isinstance(obj, int) else obj
    if not value.is_finite():
        raise _fail(path, "number must be finite")
    return value


_CELL_KEYS = ("n", "s", "b", "e", "f", "cached")
_PAYLOAD_KEYS = ("n", "s", "b", "e", "f")


def _load_cell_value(obj: Any, path: list[str], allow_formula: bool) -> CellValue:
    _expect(obj, dict, path, "cell object")
    _check_keys(obj, _CELL_KEYS if allow_formula else _CELL_KEYS[:4], path)
    present = [k for k in _PAYLOAD_KEYS if k in obj]
    if len(present) != 1:
        raise _fail(path, f"cell must carry exactly one of n/s/b/e/f, got {present or 'none'}")
    key = present[0]
    if "cached" in obj and key != "f":
        raise _fail(path, "cached is only valid alongside f")
    if key == "n":
        return Number(_decimal(obj["n"], path + [".n"]))
    if key == "s":
        return Text(_expect(obj["s"], str, path + [".s"], "string"))
    if key == "b":
        return Boolean(_expect(obj["b"], bool, path + [".b"], "boolean"))
    if key == "e":
        text = _expect(obj["e"], str, path + [".e"], "error literal")
        try:
            return Error(ErrorKind.from_text(text))
        except ValueError as exc:
            raise _fail(path + [".e"], str(exc)) from None
    source = _expect(obj["f"], str, path + [".f"], "formula text")
    if not source.lstrip("="):
        raise _fail(path + [".f"], "formula text is empty")
    cached = None
    if "cached" in obj:
        cached = _load_cell_value(obj["cached"], path + [".cached"], False)
    return Formula(source, cached=cached)


def _load_sheet(obj: Any, index: int, path: list[str]) -> Sheet:
    _expect(obj, dict, path, "sheet object")
    _check_keys(obj, ("name", "hidden", "protected", "hidden_rows",
                      "hidden_cols", "cells"), path)
    if "name" not in obj:
        raise _fail(path, "sheet requires a name")
    name = _expect(obj["name"], str, path + [".name"], "string")

    def axis(key: str, limit: int) -> frozenset[int]:
        raw = obj.get(key, [])
        _expect(raw, list, path + [".", key], "list of integers")
        out = set()
        for i, item in enumerate(raw):
            p = path + [".", key, f"[{i}]"]
            n = _expect(item, int, p, "integer")
            if not (1 <= n <= limit):
                raise _fail(p, f"index {n} outside 1..{limit}")
            out.add(n)
        return frozenset(out)

    cells: dict[CellAddress, CellValue] = {}
    raw_cells = obj.get("cells", {})
    _expect(raw_cells, dict, path + [".cells"], "cell map")
    parsed = []
    for a1, cell_obj in raw_cells.items():
        p = path + [".cells.", a1]
        try:
            addr = CellAddress.from_a1(index, a1)
        except ValueError as exc:
            raise _fail(p, str(exc)) from None
        if a1 != addr.a1:
            raise _fail(p, f"address not in canonical form (want {addr.a1})")
        parsed.append((addr, _load_cell_value(cell_obj, p, True)))
    parsed.sort(key=lambda pair: (pair[0].row, pair[0].col))
    for addr, value in parsed:
        cells[addr] = value

    try:
        return Sheet(
            name=name,
            cells=cells,
            hidden=_expect(obj.get("hidden", False), bool, path + [".hidden"], "boolean"),
            protected=_expect(obj.get("protected", False), bool, path + [".protected"], "boolean"),
            hidden_rows=axis("hidden_rows", MAX_ROW),
            hidden_cols=axis("hidden_cols", MAX_COL),
        )
    except ValueError as exc:
        raise _fail(path, str(exc)) from None


def load_canonical(text: str) -> Workbook:
    """Parse a canonical JSON document into a Workbook."""
    try:
        doc = json.loads(
            text,
            parse_float=Decimal,
            parse_constant=_reject_constant,
            object_pairs_hook=_no_duplicate_keys,
        )
    except CanonicalError:
        raise
    except (json.JSONDecodeError, InvalidOperation) as exc:
        raise CanonicalError("(document)", f"not valid JSON: {exc}") from None

    _expect(doc, dict, [], "JSON object")
    _check_keys(doc, ("format", "id", "settings", "features", "names",
                      "external_targets", "sheets"), [])
    version = doc.get("format")
    if version != FORMAT_VERSION:
        raise _fail(["format"], f"unsupported format {version!r}, want {FORMAT_VERSION}")

    wb_id = _expect(doc.get("id", ""), str, ["id"], "string")

    raw_settings = doc.get("settings", {})
    _expect(raw_settings, dict, ["settings"], "object")
    _check_keys(raw_settings, ("calc_mode", "recalc_before_save",
                               "iteration_enabled", "max_iterations"), ["settings"])
    mode_text = _expect(raw_settings.get("calc_mode", "automatic"), str,
                        ["settings.calc_mode"], "string")
    try:
        mode = CalcMode(mode_text)
    except ValueError:
        raise _fail(["settings.calc_mode"],
                    f"unknown mode {mode_text!r} (automatic|manual)") from None
    try:
        settings = WorkbookSettings(
            calc_mode=mode,
            recalc_before_save=_expect(raw_settings.get("recalc_before_save", True),
                                       bool, ["settings.recalc_before_save"], "boolean"),
            iteration_enabled=_expect(raw_settings.get("iteration_enabled", False),
                                      bool, ["settings.iteration_enabled"], "boolean"),
            max_iterations=_expect(raw_settings.get("max_iterations", 100),
                                   int, ["settings.max_iterations"], "integer"),
        )
    except ValueError as exc:
        raise _fail(["settings"], str(exc)) from None

    raw_features = doc.get("features", {})
    _expect(raw_features, dict, ["features"], "object")
    feature_keys = ("has_vba", "has_pivot_tables", "has_scenarios",
                    "has_data_consolidation")
    _check_keys(raw_features, feature_keys, ["features"])
    features = WorkbookFeatures(**{
        key: _expect(raw_features.get(key, False), bool, ["features.", key], "boolean")
        for key in feature_keys
    })

    raw_names = doc.get("names", {})
    _expect(raw_names, dict, ["names"], "object")
    names = {}
    for name, definition in raw_names.items():
        if not is_valid_name(name):
            raise _fail(["names.", name], "not a valid defined name")
        names[name] = _expect(definition, str, ["names.", name], "string")

    raw_targets = doc.get("external_targets", [])
    _expect(raw_targets, list, ["external_targets"], "list")
    targets = set()
    for i, item in enumerate(raw_targets):
        targets.add(_expect(item, str, ["external_targets", f"[{i}]"], "string"))

    raw_sheets = doc.get("sheets", [])
    _expect(raw_sheets, list, ["sheets"], "list")
    sheets = tuple(
        _load_sheet(obj, i, [f"sheets[{i}]"]) for i, obj in enumerate(raw_sheets)
    )

    # Formulas may mention workbooks the declared target list misses.
    for sheet in sheets:
        for value in sheet.cells.values():
            if isinstance(value, Formula):
                targets.update(external_mentions(value.source))

    try:
        return Workbook(
            id=wb_id,
            sheets=sheets,
            defined_names=names,
            external_targets=tuple(sorted(targets)),
            settings=settings,
            features=features,
        )
    except ValueError as exc:
        raise CanonicalError("(document)", str(exc)) from None


# ---------------------------------------------------------------------------
# Writer


def _emit(value: Any, indent: int, out: list[str]) -> None:
    pad = "  " * indent
    if isinstance(value, dict):
        if not value:
            out.append("{}")
            return
        out.append("{\n")
        for i, (key, item) in enumerate(value.items()):
            out.append(f'{pad}  {json.dumps(key, ensure_ascii=False)}: ')
            _emit(item, indent + 1, out)
            out.append(",\n" if i < len(value) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(value, list):
        if not value:
            out.append("[]")
            return
        out.append("[\n")
        for i, item in enumerate(value):
            out.append(pad + "  ")
            _emit(item, indent + 1, out)
            out.append(",\n" if i < len(value) - 1 else "\n")
        out.append(pad + "]")
    elif isinstance(value, str):
        out.append(json.dumps(value, ensure_ascii=False))
    elif value is True:
        out.append("true")
    elif value is False:
        out.append("false")
    elif isinstance(value, int):
        out.append(str(value))
    elif isinstance(value, Decimal):
        out.append(str(value))
    else:  # pragma: no cover - writer only sees the types above
        raise TypeError(f"cannot emit {type(value).__name__}")


def _cell_doc(value: CellValue) -> dict:
    if isinstance(value, Number):
        return {"n": value.value}
    if isinstance(value, Text):
        return {"s": value.value}
    if isinstance(value, Boolean):
        return {"b": value.value}
    if isinstance(value, Error):
        return {"e": value.kind.value}
    if isinstance(value, Formula):
        doc = {"f": value.source}
        if value.cached is not None:
            doc["cached"] = _cell_doc(value.cached)
        return doc
    raise TypeError(f"cannot serialize cell value {value!r}")


def save_canonical(wb: Workbook) -> str:
    """Serialize a workbook to deterministic canonical JSON text."""
    doc = {
        "format": FORMAT_VERSION,
        "id": wb.id,
        "settings": {
            "calc_mode": wb.settings.calc_mode.value,
            "recalc_before_save": wb.settings.recalc_before_save,
            "iteration_enabled": wb.settings.iteration_enabled,
            "max_iterations": wb.settings.max_iterations,
        },
        "features": {
            "has_vba": wb.features.has_vba,
            "has_pivot_tables": wb.features.has_pivot_tables,
            "has_scenarios": wb.features.has_scenarios,
            "has_data_consolidation": wb.features.has_data_consolidation,
        },
        "names": {name: wb.defined_names[name] for name in sorted(wb.defined_names)},
        "external_targets": sorted(wb.external_targets),
        "sheets": [
            {
                "name": sheet.name,
                "hidden": sheet.hidden,
                "protected": sheet.protected,
                "hidden_rows": sorted(sheet.hidden_rows),
                "hidden_cols": sorted(sheet.hidden_cols),
                "cells": {
                    addr.a1: _cell_doc(sheet.cells[addr])
                    for addr in sheet.sorted_addresses()
                },
            }
            for sheet in wb.sheets
        ],
    }
    out: list[str] = []
    _emit(doc, 0, out)
    out.append("\n")
    return "".join(out)
