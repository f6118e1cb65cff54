"""sheetgate: risk triage for spreadsheet workbooks.

Loads workbooks (OOXML or the canonical JSON form), builds formula
dependency graphs, partitions formulas into copy classes, sizes the
audit effort, runs an inspection rule catalog, and drives stage-gated
go/stop decisions over a portfolio.
"""

__version__ = "0.1.0"
