"""Canonical labelling by colour refinement plus individualisation.

The canonical string is the lexicographically smallest serialisation over
all leaves of the search tree.  Interchangeable twin vertices (same label,
identical adjacency rows) are explored once, which keeps highly symmetric
graphs such as sets of isolated atoms cheap.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from .graph import MolecularGraph


def _rank(keys: list) -> np.ndarray:
    order = sorted(set(keys))
    lookup = {k: r for r, k in enumerate(order)}
    return np.array([lookup[k] for k in keys], dtype=np.int64)


def _refine(colors: np.ndarray, E: np.ndarray, nbrs: list[np.ndarray]) -> np.ndarray:
    while True:
        sigs = [
            (int(colors[i]), tuple(sorted((int(colors[j]), int(E[i, j])) for j in nbrs[i])))
            for i in range(len(colors))
        ]
        new = _rank(sigs)
        if new.max(initial=-1) == colors.max(initial=-1):
            return new
        colors = new


def _serialise(labels: Sequence[str], E: np.ndarray, order: np.ndarray) -> tuple:
    sub = E[np.ix_(order, order)]
    iu = np.triu_indices(len(order), 1)
    return tuple(labels[i] for i in order), tuple(int(x) for x in sub[iu])


def _twin_reps(cell: np.ndarray, E: np.ndarray) -> list[int]:
    reps: list[int] = []
    for v in cell:
        for r in reps:
            row_v, row_r = E[v].copy(), E[r].copy()
            row_v[[v, r]] = 0
            row_r[[v, r]] = 0
            if np.array_equal(row_v, row_r):
                break
        else:
            reps.append(int(v))
    return reps


def canonical_tuple(labels: Sequence[str], E: np.ndarray) -> tuple:
    n = len(labels)
    if n == 0:
        return ((), ())
    E = np.asarray(E)
    nbrs = [np.nonzero(E[i])[0] for i in range(n)]
    best = None

    def search(colors):
        nonlocal best
        colors = _refine(colors, E, nbrs)
        if colors.max() == n - 1:
            cand = _serialise(labels, E, np.argsort(colors))
            if best is None or cand < best:
                best = cand
            return
        counts = np.bincount(colors)
        target = int(np.nonzero(counts > 1)[0][0])
        cell = np.nonzero(colors == target)[0]
        for v in _twin_reps(cell, E):
            nxt = colors * 2
            nxt[cell] += 1
            nxt[v] -= 1
            search(_rank(list(nxt)))

    search(_rank(list(labels)))
    return best


def canonical_form(g: MolecularGraph) -> str:
    labels, bonds = canonical_tuple(g.nodes, g.edges)
    return ".".join(labels) + "|" + "".join(str(b) for b in bonds)


def is_isomorphic(g1: MolecularGraph, g2: MolecularGraph) -> bool:
    if g1.n != g2.n or sorted(g1.nodes) != sorted(g2.nodes):
        return False
    if g1.num_bonds != g2.num_bonds:
        return False
    return canonical_tuple(g1.nodes, g1.edges) == canonical_tuple(g2.nodes, g2.edges)
