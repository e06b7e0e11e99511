"""Heavy-atom molecular graphs with categorical bond matrices."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .formula import Formula, formula_to_nodes

N_BOND_CLASSES = 5


class Bond(IntEnum):
    NONE = 0
    SINGLE = 1
    DOUBLE = 2
    TRIPLE = 3
    AROMATIC = 4


BOND_ORDER = np.array([0.0, 1.0, 2.0, 3.0, 1.5])

MAX_VALENCE = {"C": 4, "N": 3, "O": 2, "S": 6, "P": 5, "F": 1, "Cl": 1, "Br": 1, "I": 1}
# allowed valence states, used to count implicit hydrogens
VALENCE_STATES = {"C": (4,), "N": (3,), "O": (2,), "S": (2, 4, 6), "P": (3, 5), "F": (1,), "Cl": (1,), "Br": (1,), "I": (1,)}


class GraphError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MolecularGraph:
    nodes: tuple[str, ...]
    edges: np.ndarray = field(repr=False)

    def __post_init__(self):
        nodes = tuple(self.nodes)
        edges = np.array(self.edges, dtype=np.int8)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", edges)
        n = len(nodes)
        if edges.shape != (n, n):
            raise GraphError(f"edge array shape {edges.shape} does not match {n} nodes")
        if not np.array_equal(edges, edges.T):
            raise GraphError("edge array is not symmetric")
        if np.any(np.diag(edges) != 0):
            raise GraphError("self-bonds on the diagonal")
        if edges.size and (edges.min() < 0 or edges.max() >= N_BOND_CLASSES):
            raise GraphError("bond category out of range")
        edges.setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.nodes)

    def bonds(self) -> list[tuple[int, int, int]]:
        iu, ju = np.nonzero(np.triu(self.edges, 1))
        return [(int(i), int(j), int(self.edges[i, j])) for i, j in zip(iu, ju)]

    @property
    def num_bonds(self) -> int:
        return int(np.count_nonzero(np.triu(self.edges, 1)))

    def permute(self, perm) -> "MolecularGraph":
        """Node ``perm[i]`` of the result is node ``i`` of this graph."""
        perm = np.asarray(perm)
        inv = np.argsort(perm)
        return MolecularGraph(tuple(self.nodes[i] for i in inv), self.edges[np.ix_(inv, inv)])

    def implicit_hydrogens(self) -> list[int]:
        used = BOND_ORDER[self.edges].sum(axis=1)
        out = []
        for el, u in zip(self.nodes, used):
            state = next((v for v in VALENCE_STATES[el] if v >= u), VALENCE_STATES[el][-1])
            out.append(max(0, int(math.floor(state - u + 1e-9))))
        return out

    def formula(self, atoms=None) -> Formula:
        """Formula of the whole graph, or of the listed atoms with their own hydrogens."""
        hs = self.implicit_hydrogens()
        idx = range(self.n) if atoms is None else atoms
        counts: dict[str, int] = {}
        for i in idx:
            counts[self.nodes[i]] = counts.get(self.nodes[i], 0) + 1
            counts["H"] = counts.get("H", 0) + hs[i]
        return Formula(counts)

    def components(self) -> list[list[int]]:
        seen = [False] * self.n
        comps = []
        for s in range(self.n):
            if seen[s]:
                continue
            stack, comp = [s], []
            seen[s] = True
            while stack:
                u = stack.pop()
                comp.append(u)
                for v in np.nonzero(self.edges[u])[0]:
                    if not seen[v]:
                        seen[v] = True
                        stack.append(int(v))
            comps.append(sorted(comp))
        return comps


def graph_from_bonds(formula: Formula, bonds) -> MolecularGraph:
    nodes = formula_to_nodes(formula)
    n = len(nodes)
    E = np.zeros((n, n), dtype=np.int8)
    for i, j, c in bonds:
        E[i, j] = E[j, i] = c
    return MolecularGraph(tuple(nodes), E)


def valence_violations(g: MolecularGraph) -> list[tuple[int, float, int]]:
    used = BOND_ORDER[g.edges].sum(axis=1)
    return [
        (i, float(u), MAX_VALENCE[el])
        for i, (el, u) in enumerate(zip(g.nodes, used))
        if u > MAX_VALENCE[el]
    ]
