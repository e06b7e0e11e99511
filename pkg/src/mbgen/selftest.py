"""Quick oracle and invariant checks behind ``mbgen selftest``.

Each check is small enough that the whole run takes seconds; the pytest
suite covers the same ground exhaustively.
"""

from __future__ import annotations

import itertools
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import oracles
from .chem import (
    MolecularGraph,
    canonical_form,
    circular_fingerprint,
    graph_from_bonds,
    is_isomorphic,
    mces_distance,
    parse_formula,
    tanimoto,
)
from .decoder import DecoderConfig, ManyBodyDecoder, decode_logits
from .diffusion import NoiseSchedule, build_transitions, posterior_table
from .encoder import EncoderConfig, Peak, Spectrum, SpectrumEncoder, encode_spectrum
from .io import Checkpoint, load_checkpoint, save_checkpoint
from .nn import make_rng
from .nn import tensor as T
from .nn.gradcheck import check_gradients

SMALL_DEC = DecoderConfig(d_h=8, d_e=8, d_y=6, d_c=6, d_t=4, heads_node_edge=2, heads_many_body=2, layers=1, ffn_hidden=8, fp_length=16)


def check_transitions() -> str:
    m = np.array([0.7, 0.2, 0.05, 0.01, 0.04])
    tr = build_transitions(NoiseSchedule.cosine(50), m)
    rows = max(np.abs(tr.Q.sum(-1) - 1).max(), np.abs(tr.Qbar.sum(-1) - 1).max())
    prod = max(np.abs(oracles.qbar_product(tr.Q, t) - tr.Qbar[t]).max() for t in range(51))
    assert rows <= 1e-12 and prod <= 1e-10, (rows, prod)
    return f"row error {rows:.1e}, product error {prod:.1e}"


def check_posterior() -> str:
    m = np.array([0.7, 0.2, 0.05, 0.01, 0.04])
    tr = build_transitions(NoiseSchedule.cosine(50), m)
    worst = 0.0
    for t in (1, 2, 25, 50):
        table = posterior_table(t, tr)
        for a, b in itertools.product(range(5), repeat=2):
            worst = max(worst, np.abs(table[a, b] - oracles.bayes_posterior(a, b, t, tr.Q)).max())
    assert worst <= 1e-12, worst
    return f"max error {worst:.1e}"


def _small_graph(rng, n=5):
    nodes = tuple(sorted(rng.choice(["C", "N", "O"], size=n), key=lambda a: "CNO".index(a)))
    E = np.triu(rng.integers(0, 5, size=(n, n)), 1).astype(np.int8)
    return MolecularGraph(nodes, E + E.T)


def check_gradients_decoder() -> str:
    rng = make_rng(1)
    dec = ManyBodyDecoder(rng, SMALL_DEC)
    g = _small_graph(rng)
    from .decoder import atom_indices
    from .diffusion import training_loss

    atoms = atom_indices(g.nodes)[None]
    mask = np.ones_like(atoms, dtype=bool)
    E_t = g.edges[None]
    y = T.Parameter(rng.normal(size=(1, SMALL_DEC.d_y)))
    pair = np.triu(np.ones((g.n, g.n), dtype=bool), 1)[None]

    def loss():
        return training_loss(dec(atoms, mask, E_t, np.array([7]), y, 50), E_t, pair)

    params = [y] + [p for k, p in dec.named_parameters() if not k.startswith("fp_proj")]
    err = check_gradients(loss, params)
    assert err <= 1e-5, err
    return f"max relative error {err:.1e}"


def check_equivariance() -> str:
    rng = make_rng(2)
    dec = ManyBodyDecoder(rng, SMALL_DEC)
    g = _small_graph(rng, 6)
    y = rng.normal(size=SMALL_DEC.d_y)
    base = decode_logits(g.nodes, g.edges, 9, y, dec, 50)
    worst = 0.0
    for _ in range(5):
        perm = rng.permutation(g.n)
        out = decode_logits([g.nodes[i] for i in perm], g.edges[np.ix_(perm, perm)], 9, y, dec, 50)
        worst = max(worst, np.abs(out - base[np.ix_(perm, perm)]).max())
    assert worst <= 1e-8, worst
    return f"max deviation {worst:.1e}"


def check_many_body() -> str:
    rng = make_rng(3)
    dec = ManyBodyDecoder(rng, SMALL_DEC)
    mb = dec.many_body[0]
    e = rng.normal(size=(4, 4, SMALL_DEC.d_e))
    e = 0.5 * (e + e.transpose(1, 0, 2))
    c = rng.normal(size=SMALL_DEC.d_c)
    mask = np.ones((1, 4), dtype=bool)
    with T.no_grad():
        got = mb(T.Tensor(e[None]), T.Tensor(c[None]), mask).data[0]
    _, want = oracles.many_body_loop(mb, e, c)
    err = np.abs(got - want).max()
    assert err <= 1e-10, err
    return f"max error {err:.1e}"


def check_encoder_invariance() -> str:
    rng = make_rng(4)
    enc = SpectrumEncoder(rng, EncoderConfig(d=8, heads=2, layers=2))
    pre = parse_formula("C6H6NO")
    frags = ["C", "CH2", "C2H3", "NO", "C4H4", "C5H5N"]
    peaks = [Peak(10.0 + i, float(rng.random()), parse_formula(f)) for i, f in enumerate(frags)]
    y0 = encode_spectrum(Spectrum(tuple(peaks), pre), enc)
    worst = 0.0
    for _ in range(10):
        order = rng.permutation(len(peaks))
        y1 = encode_spectrum(Spectrum(tuple(peaks[i] for i in order), pre), enc)
        worst = max(worst, np.abs(y1 - y0).max())
    assert worst <= 1e-10, worst
    return f"max deviation {worst:.1e}"


def check_chem() -> str:
    ethanol = graph_from_bonds(parse_formula("C2H6O"), [(0, 1, 1), (1, 2, 1)])
    ether = graph_from_bonds(parse_formula("C2H6O"), [(0, 2, 1), (1, 2, 1)])
    benzene = graph_from_bonds(parse_formula("C6H6"), [(i, (i + 1) % 6, 4) for i in range(6)])
    rng = make_rng(5)
    perm = rng.permutation(6)
    assert canonical_form(benzene) == canonical_form(benzene.permute(perm))
    assert not is_isomorphic(ethanol, ether)
    assert mces_distance(ethanol, ether).distance == oracles.brute_mces(ethanol, ether) == 2
    fa, fb = circular_fingerprint(ethanol), circular_fingerprint(ether)
    assert abs(tanimoto(fa, fb) - oracles.brute_tanimoto(fa, fb)) < 1e-15
    count = 0
    for _ in range(30):
        g1, g2 = _small_graph(rng, 4), _small_graph(rng, 4)
        assert is_isomorphic(g1, g2) == oracles.brute_isomorphic(g1, g2)
        g3 = g1.permute(rng.permutation(4))
        assert is_isomorphic(g1, g3)
        count += 1
    return f"{count} random pairs agree with brute force"


def check_checkpoint() -> str:
    rng = make_rng(6)
    dec = ManyBodyDecoder(rng, SMALL_DEC)
    g = _small_graph(rng)
    y = rng.normal(size=SMALL_DEC.d_y)
    before = decode_logits(g.nodes, g.edges, 3, y, dec, 50)
    ckpt = Checkpoint("decoder-pretrain", {"seed": 6}, dec.state_dict(), rng.bit_generator.state, {})
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "x.ckpt"
        save_checkpoint(path, ckpt)
        loaded = load_checkpoint(path)
        fresh = ManyBodyDecoder(make_rng(99), SMALL_DEC)
        fresh.load_state_dict(loaded.tensors)
        after = decode_logits(g.nodes, g.edges, 3, y, fresh, 50)
        assert np.array_equal(before, after)
        save_checkpoint(Path(tmp) / "y.ckpt", loaded)
        assert path.read_bytes() == (Path(tmp) / "y.ckpt").read_bytes()
    return "bitwise round trip"


CHECKS = [
    ("transition matrices", check_transitions),
    ("posterior vs Bayes enumeration", check_posterior),
    ("decoder gradients vs finite differences", check_gradients_decoder),
    ("decoder permutation equivariance", check_equivariance),
    ("many-body attention vs triple loop", check_many_body),
    ("encoder peak-order invariance", check_encoder_invariance),
    ("canonical form, MCES, Tanimoto", check_chem),
    ("checkpoint round trip", check_checkpoint),
]


def run_selftest(out=sys.stdout) -> int:
    failures = 0
    for name, fn in CHECKS:
        try:
            detail = fn()
            out.write(f"PASS  {name}: {detail}\n")
        except Exception as exc:  # noqa: BLE001
            failures += 1
            out.write(f"FAIL  {name}: {type(exc).__name__}: {exc}\n")
    out.write(f"{len(CHECKS) - failures}/{len(CHECKS)} checks passed\n")
    return 1 if failures else 0
