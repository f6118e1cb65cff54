"""Copy-class normalization.

Two formulas belong to the same copy class when one is what the other
becomes if copied to its cell: every relative reference axis moves by
the copy offset, everything else is identical.  Rewriting each relative
axis as a signed offset *from the formula's own cell* makes that
equivalence a plain string comparison — the normalized key of a formula
is invariant under copying.

``A1`` in cell ``B2`` and ``A9`` in ``B10`` both normalize to
``R[-1]C[-1]``; ``$A$1`` stays ``R1C1`` wherever it lives.  The no-op
unary plus is dropped (a ``=+A1`` habit does not split a class), and
numeric literals keep their written text, so ``0.5`` and ``.5`` remain
distinguishable.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..model import CellAddress
from .ast import Node, render_relative


@dataclass(frozen=True, slots=True)
class NormalizedFormula:
    """Opaque copy-class key.  Equal keys == same class."""

    key: str


def normalize(node: Node, host: CellAddress) -> NormalizedFormula:
    """The copy-class key of a formula living at ``host``.

    Invariant: for any in-grid offset (dr, dc),
    ``normalize(shift(ast, dr, dc), host_moved_by(dr, dc)) ==
    normalize(ast, host)``.  Formulas whose references are all absolute
    normalize identically at every host.
    """
    return NormalizedFormula(render_relative(node, host))
