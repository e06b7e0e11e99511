"""Molecular formulas: parsing, Hill-order formatting, sub-formula checks."""

from __future__ import annotations

import re
from collections.abc import Mapping

import numpy as np

# fixed vector order for element-count features
ELEMENTS = ("C", "H", "N", "O", "S", "P", "F", "Cl", "Br", "I")
HEAVY_ORDER = ("C", "Br", "Cl", "F", "I", "N", "O", "P", "S")

# integer-ish monoisotopic masses; good enough for toy m/z values
MONO_MASS = {
    "C": 12.0,
    "H": 1.007825,
    "N": 14.003074,
    "O": 15.994915,
    "S": 31.972071,
    "P": 30.973762,
    "F": 18.998403,
    "Cl": 34.968853,
    "Br": 78.918338,
    "I": 126.904473,
}

_TOKEN = re.compile(r"([A-Z][a-z]?)(\d*)")


class FormulaError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class Formula(Mapping):
    """Immutable element -> count mapping with at least one heavy atom."""

    __slots__ = ("_counts",)

    def __init__(self, counts: Mapping[str, int]):
        clean = {}
        for el, c in counts.items():
            if el not in ELEMENTS:
                raise FormulaError(f"unknown element {el!r}", 0)
            c = int(c)
            if c < 0:
                raise FormulaError(f"negative count for {el}", 0)
            if c:
                clean[el] = c
        self._counts = clean

    def __getitem__(self, el):
        return self._counts[el]

    def __iter__(self):
        return iter(self._counts)

    def __len__(self):
        return len(self._counts)

    def get(self, el, default=0):
        return self._counts.get(el, default)

    def __eq__(self, other):
        if isinstance(other, Mapping):
            return self._counts == {k: v for k, v in other.items() if v}
        return NotImplemented

    def __hash__(self):
        return hash(tuple(sorted(self._counts.items())))

    def __repr__(self):
        return f"Formula({str(self)!r})"

    def __str__(self):
        return format_formula(self)

    @property
    def heavy_atoms(self) -> int:
        return sum(c for el, c in self._counts.items() if el != "H")

    def is_subformula_of(self, other: Mapping[str, int]) -> bool:
        return all(other.get(el, 0) >= c for el, c in self._counts.items())

    def count_vector(self) -> np.ndarray:
        return np.array([self._counts.get(el, 0) for el in ELEMENTS], dtype=np.float64)

    def mass(self) -> float:
        return sum(MONO_MASS[el] * c for el, c in self._counts.items())


def parse_formula(text: str) -> Formula:
    """Parse tokens like ``C8H10N4O2``; omitted counts mean 1."""
    if not text:
        raise FormulaError("empty formula", 0)
    counts: dict[str, int] = {}
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise FormulaError(f"unexpected character {text[pos]!r}", pos)
        el, num = m.group(1), m.group(2)
        if el not in ELEMENTS:
            raise FormulaError(f"unknown element {el!r}", pos)
        if num:
            if int(num) == 0:
                raise FormulaError(f"zero count for {el}", pos + len(el))
        counts[el] = counts.get(el, 0) + (int(num) if num else 1)
        pos = m.end()
    if not any(el != "H" for el in counts):
        raise FormulaError("formula has no heavy atoms", 0)
    return Formula(counts)


def format_formula(f: Mapping[str, int]) -> str:
    order = ["C", "H"] + sorted(el for el in f if el not in ("C", "H"))
    if "C" not in f:
        order = sorted(f)
    parts = []
    for el in order:
        c = f.get(el, 0)
        if c:
            parts.append(el if c == 1 else f"{el}{c}")
    return "".join(parts)


def formula_to_nodes(f: Mapping[str, int]) -> list[str]:
    nodes = [el for el in HEAVY_ORDER for _ in range(f.get(el, 0))]
    if not nodes:
        raise FormulaError("formula has no heavy atoms; graph would be empty", 0)
    return nodes
