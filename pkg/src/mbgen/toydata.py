"""Deterministic desk-scale molecules with bond-cleavage fragment spectra."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .chem import BOND_ORDER, MolecularGraph, canonical_form, valence_violations
from .chem.formula import HEAVY_ORDER, Formula
from .chem.graph import MAX_VALENCE
from .encoder import Peak, Spectrum


@dataclass(frozen=True)
class ToySpec:
    molecules: int = 20
    max_atoms: int = 9
    min_atoms: int = 4
    palette: tuple[str, ...] = ("C", "N", "O")
    weights: tuple[float, ...] = (0.7, 0.15, 0.15)
    depth: int = 2
    seed: int = 0


def _free(el: str, used: float) -> float:
    return MAX_VALENCE[el] - used


def random_molecule(rng: np.random.Generator, spec: ToySpec) -> MolecularGraph:
    n = int(rng.integers(spec.min_atoms, spec.max_atoms + 1))
    p = np.asarray(spec.weights) / np.sum(spec.weights)
    E = np.zeros((n, n), dtype=np.int8)
    elems: list[str] = []
    ring = n >= 6 and rng.random() < 0.25
    if ring:
        elems = ["C"] * 6
        for i in range(6):
            E[i, (i + 1) % 6] = E[(i + 1) % 6, i] = 4
    else:
        elems = [str(rng.choice(spec.palette, p=p))]
        if MAX_VALENCE[elems[0]] < 2:
            elems[0] = "C"
    while len(elems) < n:
        used = BOND_ORDER[E[: len(elems), : len(elems)]].sum(axis=1)
        open_atoms = [i for i, el in enumerate(elems) if _free(el, used[i]) >= 1]
        a = int(rng.choice(open_atoms))
        new = len(elems)
        elems.append(str(rng.choice(spec.palette, p=p)))
        E[a, new] = E[new, a] = 1
    # ring closures between atoms at path distance >= 4 (rings of 5+)
    for _ in range(int(rng.integers(0, 2))):
        used = BOND_ORDER[E].sum(axis=1)
        dist = _distances(E)
        pairs = [
            (i, j)
            for i in range(n)
            for j in range(i + 1, n)
            if dist[i, j] >= 4 and _free(elems[i], used[i]) >= 1 and _free(elems[j], used[j]) >= 1
        ]
        if pairs:
            i, j = pairs[int(rng.integers(len(pairs)))]
            E[i, j] = E[j, i] = 1
    # bond-order upgrades on single bonds
    for _ in range(int(rng.integers(0, 3))):
        used = BOND_ORDER[E].sum(axis=1)
        singles = [
            (i, j)
            for i in range(n)
            for j in range(i + 1, n)
            if E[i, j] == 1 and _free(elems[i], used[i]) >= 1 and _free(elems[j], used[j]) >= 1
        ]
        if singles:
            i, j = singles[int(rng.integers(len(singles)))]
            E[i, j] = E[j, i] = 2
    order = sorted(range(n), key=lambda i: (HEAVY_ORDER.index(elems[i]), i))
    g = MolecularGraph(tuple(elems[i] for i in order), E[np.ix_(order, order)])
    assert not valence_violations(g)
    return g


def _distances(E: np.ndarray) -> np.ndarray:
    n = E.shape[0]
    D = np.full((n, n), 99)
    for s in range(n):
        D[s, s] = 0
        frontier = [s]
        while frontier:
            nxt = []
            for u in frontier:
                for v in np.nonzero(E[u])[0]:
                    if D[s, v] == 99:
                        D[s, v] = D[s, u] + 1
                        nxt.append(int(v))
            frontier = nxt
    return D


def fragment_atom_sets(g: MolecularGraph, depth: int) -> set[tuple[int, ...]]:
    """Connected components left after deleting any 1..depth bonds."""
    bonds = [(i, j) for i, j, _ in g.bonds()]
    out: set[tuple[int, ...]] = set()
    for r in range(1, depth + 1):
        for cut in itertools.combinations(bonds, r):
            E = g.edges.copy()
            for i, j in cut:
                E[i, j] = E[j, i] = 0
            for comp in MolecularGraph(g.nodes, E).components():
                out.add(tuple(comp))
    return out


def fragment_spectrum(g: MolecularGraph, depth: int, title: str = "") -> Spectrum:
    precursor = g.formula()
    by_formula: dict[Formula, int] = {}
    for atoms in fragment_atom_sets(g, depth):
        f = g.formula(atoms)
        by_formula[f] = len(atoms)
    if not by_formula:
        by_formula[precursor] = g.n
    peaks = [Peak(round(f.mass(), 6), float(size), f) for f, size in by_formula.items()]
    peaks.sort(key=lambda p: (p.mz, str(p.formula)))
    return Spectrum.normalized(peaks, precursor, title)


def generate_toy_dataset(spec: ToySpec) -> list[tuple[str, MolecularGraph, Spectrum]]:
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    seen: set[str] = set()
    out = []
    while len(out) < spec.molecules:
        g = random_molecule(rng, spec)
        key = canonical_form(g)
        if key in seen:
            continue
        seen.add(key)
        name = f"toy{len(out):03d}"
        out.append((name, g, fragment_spectrum(g, spec.depth, name)))
    return out
