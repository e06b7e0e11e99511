"""Ancestral sampling of bond matrices from the trained denoiser."""

from __future__ import annotations

import numpy as np

from .chem import Formula, MolecularGraph, formula_to_nodes
from .decoder import ManyBodyDecoder, atom_indices
from .diffusion import TransitionMatrices, reverse_step, sample_prior
from .nn import tensor as T


def sample_bond_matrices(
    nodes,
    y: np.ndarray,
    dec: ManyBodyDecoder,
    trans: TransitionMatrices,
    rng: np.random.Generator,
    n_samples: int = 1,
) -> np.ndarray:
    """Run ``n_samples`` independent reverse chains side by side; returns (n_samples, n, n)."""
    n = len(nodes)
    if n == 1:
        return np.zeros((n_samples, 1, 1), dtype=np.int8)
    atoms = np.broadcast_to(atom_indices(nodes), (n_samples, n))
    mask = np.ones((n_samples, n), dtype=bool)
    cond = T.Tensor(np.broadcast_to(np.asarray(y, dtype=np.float64), (n_samples, len(y))))
    E = sample_prior(n, trans, rng, lead=(n_samples,))
    with T.no_grad():
        for t in range(trans.T, 0, -1):
            logits = dec(atoms, mask, E, np.full(n_samples, t), cond, trans.T).data
            E = reverse_step(logits, E, t, trans, rng)
    return E


def sample_graphs(
    formula: Formula,
    y: np.ndarray,
    dec: ManyBodyDecoder,
    trans: TransitionMatrices,
    rng: np.random.Generator,
    n_samples: int = 1,
) -> list[MolecularGraph]:
    nodes = tuple(formula_to_nodes(formula))
    E = sample_bond_matrices(nodes, y, dec, trans, rng, n_samples)
    return [MolecularGraph(nodes, E[s]) for s in range(n_samples)]


def sample_molecule(formula, y, dec, trans, rng) -> MolecularGraph:
    return sample_graphs(formula, y, dec, trans, rng, 1)[0]
