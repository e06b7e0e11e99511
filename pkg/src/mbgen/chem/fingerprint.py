"""Folded circular-environment fingerprints and Tanimoto similarity."""

from __future__ import annotations

import hashlib

import numpy as np

from .canon import canonical_tuple
from .graph import MolecularGraph

FP_LENGTH = 2048
FP_RADIUS = 2


def _ball(g: MolecularGraph, centre: int, radius: int) -> list[int]:
    dist = {centre: 0}
    frontier = [centre]
    for r in range(radius):
        nxt = []
        for u in frontier:
            for v in np.nonzero(g.edges[u])[0]:
                v = int(v)
                if v not in dist:
                    dist[v] = r + 1
                    nxt.append(v)
        frontier = nxt
    return sorted(dist)


def environment_key(g: MolecularGraph, centre: int, radius: int) -> str:
    atoms = _ball(g, centre, radius)
    labels = [("*" if a == centre else "") + g.nodes[a] for a in atoms]
    sub = g.edges[np.ix_(atoms, atoms)]
    lab, bonds = canonical_tuple(labels, sub)
    return ".".join(lab) + "|" + "".join(map(str, bonds))


def _bit(key: str, length: int) -> int:
    digest = hashlib.blake2b(key.encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little") % length


def circular_fingerprint(g: MolecularGraph, radius: int = FP_RADIUS, length: int = FP_LENGTH) -> np.ndarray:
    if radius < 0:
        raise ValueError("radius must be non-negative")
    bits = np.zeros(length, dtype=np.uint8)
    for a in range(g.n):
        for r in range(radius + 1):
            bits[_bit(environment_key(g, a, r), length)] = 1
    return bits


def tanimoto(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError(f"fingerprint lengths differ: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union
