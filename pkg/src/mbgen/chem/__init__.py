from .canon import canonical_form, is_isomorphic
from .fingerprint import FP_LENGTH, FP_RADIUS, circular_fingerprint, tanimoto
from .formula import ELEMENTS, Formula, FormulaError, format_formula, formula_to_nodes, parse_formula
from .graph import (
    BOND_ORDER,
    N_BOND_CLASSES,
    Bond,
    GraphError,
    MolecularGraph,
    graph_from_bonds,
    valence_violations,
)
from .mces import MCESResult, mces_distance

__all__ = [
    "BOND_ORDER",
    "Bond",
    "ELEMENTS",
    "FP_LENGTH",
    "FP_RADIUS",
    "Formula",
    "FormulaError",
    "GraphError",
    "MCESResult",
    "MolecularGraph",
    "N_BOND_CLASSES",
    "canonical_form",
    "circular_fingerprint",
    "format_formula",
    "formula_to_nodes",
    "graph_from_bonds",
    "is_isomorphic",
    "mces_distance",
    "parse_formula",
    "tanimoto",
    "valence_violations",
]
