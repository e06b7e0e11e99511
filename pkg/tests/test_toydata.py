import itertools

from mbgen.chem import valence_violations
from mbgen.io.graphfile import format_graph_line
from mbgen.io.mgf import format_mgf
from mbgen.toydata import ToySpec, fragment_atom_sets, generate_toy_dataset


def _dump(data):
    return "\n".join(format_graph_line(n, g) for n, g, _ in data) + format_mgf([s for _, _, s in data])


def test_deterministic_bytes():
    assert _dump(generate_toy_dataset(ToySpec(seed=3))) == _dump(generate_toy_dataset(ToySpec(seed=3)))
    assert _dump(generate_toy_dataset(ToySpec(seed=3))) != _dump(generate_toy_dataset(ToySpec(seed=4)))


def test_molecules_valid_and_in_range():
    data = generate_toy_dataset(ToySpec(seed=0))
    assert len(data) == 20
    for _, g, _ in data:
        assert 4 <= g.n <= 9
        assert valence_violations(g) == []
        assert len(g.components()) == 1


def test_peaks_are_subformulas():
    for _, g, s in generate_toy_dataset(ToySpec(seed=1)):
        assert s.precursor == g.formula()
        assert all(p.formula.is_subformula_of(s.precursor) for p in s.peaks)
        assert max(p.intensity for p in s.peaks) == 1.0


def _brute_fragments(g, depth):
    """Connected components after deleting every bond subset of size 1..depth, via BFS on an edge list."""
    bonds = [(i, j) for i in range(g.n) for j in range(i + 1, g.n) if g.edges[i, j]]
    out = set()
    for r in range(1, depth + 1):
        for cut in itertools.combinations(bonds, r):
            kept = [b for b in bonds if b not in cut]
            seen = set()
            for s in range(g.n):
                if s in seen:
                    continue
                comp, stack = {s}, [s]
                while stack:
                    u = stack.pop()
                    for a, b in kept:
                        for x, y in ((a, b), (b, a)):
                            if x == u and y not in comp:
                                comp.add(y)
                                stack.append(y)
                seen |= comp
                out.add(tuple(sorted(comp)))
    return out


def test_fragments_match_deletion_enumeration():
    for _, g, s in generate_toy_dataset(ToySpec(seed=2)):
        sets = fragment_atom_sets(g, 2)
        assert sets == _brute_fragments(g, 2)
        assert {p.formula for p in s.peaks} == {g.formula(a) for a in sets}


def test_double_deletion_adds_fragments():
    data = generate_toy_dataset(ToySpec(seed=0))
    assert any(fragment_atom_sets(g, 2) > fragment_atom_sets(g, 1) for _, g, _ in data)
