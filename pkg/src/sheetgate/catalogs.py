"""Name catalogs shipped as package data.

Three lists live under ``sheetgate/data``: the built-in worksheet
functions, the lookup family, and the aggregation family.  They are plain
text so an audit team can extend them without touching code.
"""

from __future__ import annotations

from importlib import resources


def load_name_list(filename: str) -> frozenset:
    """Read one names file: one name per line, ``#`` comments, case-folded up."""
    text = resources.files("sheetgate.data").joinpath(filename).read_text(encoding="utf-8")
    names = set()
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            names.add(line.upper())
    return frozenset(names)


BUILTIN_FUNCTIONS = load_name_list("functions.txt")
LOOKUP_FUNCTIONS = load_name_list("lookup_functions.txt")
AGGREGATION_FUNCTIONS = load_name_list("aggregation_functions.txt")
