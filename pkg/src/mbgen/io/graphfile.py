"""Line-based molecular graph records: ``<id> <formula> <bonds>``.

``<bonds>`` is ``i-j:c`` items joined by ``;`` with ``i != j`` indexing the
heavy atoms in formula node order and ``c`` in 1..4 (single, double, triple,
aromatic).  Writers emit ``i < j``; readers accept either order.  A lone ``-`` stands for no bonds.  Blank and ``#`` lines are
skipped.
"""

from __future__ import annotations

import logging
import re
from collections.abc import Iterable
from pathlib import Path

import numpy as np

from ..chem import FormulaError, MolecularGraph, format_formula, formula_to_nodes, parse_formula, valence_violations

log = logging.getLogger(__name__)

_BOND = re.compile(r"^(\d+)-(\d+):([1-4])$")


class GraphFileError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def parse_graph_line(line: str, lineno: int = 1) -> tuple[str, MolecularGraph]:
    parts = line.split()
    if len(parts) not in (2, 3):
        raise GraphFileError(f"expected 'id formula bonds', got {line!r}", lineno)
    ident, ftext = parts[0], parts[1]
    try:
        formula = parse_formula(ftext)
    except FormulaError as exc:
        raise GraphFileError(f"bad formula: {exc}", lineno) from None
    nodes = formula_to_nodes(formula)
    n = len(nodes)
    E = np.zeros((n, n), dtype=np.int8)
    items = [] if len(parts) == 2 or parts[2] == "-" else parts[2].split(";")
    for item in items:
        m = _BOND.match(item)
        if not m:
            raise GraphFileError(f"malformed bond {item!r}", lineno)
        i, j, c = (int(x) for x in m.groups())
        if i == j:
            raise GraphFileError(f"bond {item!r} joins an atom to itself", lineno)
        i, j = min(i, j), max(i, j)
        if j >= n:
            raise GraphFileError(f"bond {item!r} index out of range for {n} atoms", lineno)
        if E[i, j]:
            raise GraphFileError(f"duplicate pair {i}-{j}", lineno)
        E[i, j] = E[j, i] = c
    g = MolecularGraph(tuple(nodes), E)
    bad = valence_violations(g)
    if bad:
        log.warning("line %d (%s): valence exceeded at atoms %s", lineno, ident, [b[0] for b in bad])
    return ident, g


def load_graph_dataset(path) -> list[tuple[str, MolecularGraph]]:
    out = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        out.append(parse_graph_line(line, lineno))
    return out


def format_graph_line(ident: str, g: MolecularGraph, formula=None) -> str:
    if formula is None:
        formula = g.formula()
    if list(g.nodes) != formula_to_nodes(formula):
        raise ValueError("graph node order must follow formula node order")
    bonds = ";".join(f"{i}-{j}:{c}" for i, j, c in g.bonds()) or "-"
    return f"{ident} {format_formula(formula)} {bonds}"


def write_graph_dataset(path, records: Iterable[tuple]) -> None:
    lines = [format_graph_line(*rec) for rec in records]
    Path(path).write_text("\n".join(lines) + "\n")
