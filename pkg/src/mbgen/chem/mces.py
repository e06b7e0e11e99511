"""Maximum common edge subgraph distance by branch and bound.

Atoms of the first graph are assigned in turn either to an unused atom of
the second graph with the same element or to nothing.  An edge counts as
common when both endpoints are mapped and the images carry the same bond
category.  Nodes are pruned with the minimum of three admissible bounds on
the edges still obtainable: undecided edge count, per-atom degree caps and
per-edge-type counts.
"""

from __future__ import annotations

from collections import Counter
from typing import NamedTuple

import numpy as np

from .graph import MolecularGraph

DEFAULT_BUDGET = 200_000


class MCESResult(NamedTuple):
    distance: float
    exact: bool


def _edge_type(g: MolecularGraph, i: int, j: int) -> tuple:
    a, b = sorted((g.nodes[i], g.nodes[j]))
    return a, b, int(g.edges[i, j])


def _type_bound(g1: MolecularGraph, g2: MolecularGraph) -> int:
    c1 = Counter(_edge_type(g1, i, j) for i, j, _ in g1.bonds())
    c2 = Counter(_edge_type(g2, i, j) for i, j, _ in g2.bonds())
    return sum(min(c, c2[t]) for t, c in c1.items())


def max_common_edges(g1: MolecularGraph, g2: MolecularGraph, budget: int = DEFAULT_BUDGET) -> tuple[int, int, bool]:
    """Return (best edge count found, proven upper bound, exact)."""
    root_ub = _type_bound(g1, g2)
    E1, E2 = g1.edges, g2.edges
    deg1 = np.count_nonzero(E1, axis=1)
    deg2 = np.count_nonzero(E2, axis=1)
    order = [int(u) for u in sorted(np.nonzero(deg1)[0], key=lambda u: (-deg1[u], u))]
    if not order or root_ub == 0:
        return 0, 0, True
    pos = {u: k for k, u in enumerate(order)}
    nbrs1 = [np.nonzero(E1[u])[0] for u in range(g1.n)]
    cands = {
        u: [int(w) for w in np.nonzero(deg2)[0] if g2.nodes[w] == g1.nodes[u]] for u in order
    }
    types1 = {(u, int(v)): _edge_type(g1, u, int(v)) for u in order for v in nbrs1[u]}
    bonds2 = [(i, j, _edge_type(g2, i, j)) for i, j, _ in g2.bonds()]

    NULL = -1
    mapping: dict[int, int] = {}
    used = np.zeros(g2.n, dtype=bool)
    best = 0
    nodes = 0
    aborted = False

    def bound(k: int) -> int:
        # edges of g1 still obtainable once atoms order[:k] are fixed
        future1: Counter = Counter()
        caps = 0
        count = 0
        for u in order[k:]:
            reach = 0
            for v in nbrs1[u]:
                v = int(v)
                pv = pos[v]
                if pv < k and mapping[v] == NULL:
                    continue
                reach += 1
                if pv < k or pv > pos[u]:
                    count += 1
                    future1[types1[(u, v)]] += 1
            free = [deg2[w] for w in cands[u] if not used[w]]
            caps += min(reach, max(free, default=0))
        future2: Counter = Counter()
        for i, j, t in bonds2:
            if not (used[i] and used[j]):
                future2[t] += 1
        by_type = sum(min(c, future2[t]) for t, c in future1.items())
        return min(count, caps, by_type)

    def gain(u: int, w: int) -> int:
        g = 0
        for v in nbrs1[u]:
            fv = mapping.get(int(v), NULL)
            if fv != NULL and E2[w, fv] == E1[u, v]:
                g += 1
        return g

    def search(k: int, score: int):
        nonlocal best, nodes, aborted
        if score > best:
            best = score
        if k == len(order) or aborted:
            return
        nodes += 1
        if nodes > budget:
            aborted = True
            return
        if score + bound(k) <= best or best == root_ub:
            return
        u = order[k]
        options = [(gain(u, w), w) for w in cands[u] if not used[w]]
        options.sort(key=lambda t: -t[0])
        for gu, w in options:
            mapping[u] = w
            used[w] = True
            search(k + 1, score + gu)
            used[w] = False
            del mapping[u]
            if aborted or best == root_ub:
                return
        mapping[u] = NULL
        search(k + 1, score)
        del mapping[u]

    search(0, 0)
    if aborted:
        return best, root_ub, False
    return best, best, True


def mces_distance(g1: MolecularGraph, g2: MolecularGraph, budget: int = DEFAULT_BUDGET) -> MCESResult:
    """``|E1| + |E2| - 2|MCES|``; on budget exhaustion a lower bound, flagged inexact."""
    best, ub, exact = max_common_edges(g1, g2, budget)
    total = g1.num_bonds + g2.num_bonds
    return MCESResult(float(total - 2 * (best if exact else ub)), exact)
