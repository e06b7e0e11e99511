"""Edge-centric denoising network with triplet (many-body) attention.

Shapes: B graphs padded to n atoms; ``h`` is (B, n, d_h), ``e`` is
(B, n, n, d_e) and kept symmetric in its two atom axes.  ``c`` is the fused
condition (B, d_c) built from the spectrum/fingerprint vector and the
timestep.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .chem import N_BOND_CLASSES
from .chem.formula import HEAVY_ORDER
from .nn import FeedForward, FiLM, Linear, Module, Parameter
from .nn import tensor as T

ATOM_INDEX = {el: i for i, el in enumerate(HEAVY_ORDER)}


def diag_logits(k: int) -> np.ndarray:
    """Logits pinning a diagonal pair to "no bond"."""
    return np.array([0.0] + [-30.0] * (k - 1))


@dataclass(frozen=True)
class DecoderConfig:
    d_h: int = 128
    d_e: int = 64
    d_y: int = 256
    d_c: int = 64
    d_t: int = 32
    heads_node_edge: int = 4
    heads_many_body: int = 2
    layers: int = 6
    ffn_hidden: int = 128
    k: int = N_BOND_CLASSES
    many_body: bool = True
    fp_length: int = 2048

    def to_dict(self):
        return asdict(self)


DESK_DECODER = dict(d_h=32, d_e=16, d_c=32, d_t=16, layers=2, ffn_hidden=32)


def timestep_embedding(t: np.ndarray, width: int, T_max: int = 1000) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64).reshape(-1, 1)
    half = width // 2
    freqs = np.exp(-np.log(T_max) * np.arange(half) / max(half, 1))
    ang = t * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


def symmetrize(e: T.Tensor) -> T.Tensor:
    return (e + e.transpose(0, 2, 1, 3)) * 0.5


class NodeEdgeLayer(Module):
    def __init__(self, rng, cfg: DecoderConfig):
        H = cfg.heads_node_edge
        if cfg.d_h % H:
            raise ValueError("d_h must be divisible by heads_node_edge")
        self.heads = H
        self.WQ = Linear(rng, cfg.d_h, cfg.d_h, bias=False)
        self.WK = Linear(rng, cfg.d_h, cfg.d_h, bias=False)
        self.WV = Linear(rng, cfg.d_h, cfg.d_h, bias=False)
        self.WO = Linear(rng, cfg.d_h, cfg.d_h)
        self.WE = Linear(rng, cfg.d_e, H)
        self.Walpha = Linear(rng, H, cfg.d_e)
        self.film = FiLM(rng, cfg.d_c, cfg.d_e)
        self.ffn = FeedForward(rng, cfg.d_e, cfg.ffn_hidden)

    def scores(self, h: T.Tensor, e: T.Tensor) -> T.Tensor:
        B, n, d = h.shape
        H = self.heads
        dk = d // H
        q = self.WQ(h).reshape(B, n, H, dk)
        k = self.WK(h).reshape(B, n, H, dk)
        return T.einsum("bihd,bjhd->bijh", q, k) * (1.0 / np.sqrt(dk)) + self.WE(e)

    def __call__(self, h, e, c, node_mask):
        B, n, d = h.shape
        H = self.heads
        alpha = self.scores(h, e)
        o = self.Walpha(alpha)
        e_new = symmetrize(self.ffn(e + self.film(o, c)))
        a = T.softmax(alpha, axis=2, mask=node_mask[:, None, :, None])
        v = self.WV(h).reshape(B, n, H, d // H)
        h_new = h + self.WO(T.einsum("bijh,bjhd->bihd", a, v).reshape(B, n, d))
        return h_new, e_new


class ManyBodyAttention(Module):
    """Pair (i, j) attends over pairs (j, k), biased and gated by pair (i, k)."""

    def __init__(self, rng, cfg: DecoderConfig):
        H = cfg.heads_many_body
        if cfg.d_e % H:
            raise ValueError("d_e must be divisible by heads_many_body")
        self.heads = H
        self.WQ = Linear(rng, cfg.d_e, cfg.d_e, bias=False)
        self.WK = Linear(rng, cfg.d_e, cfg.d_e, bias=False)
        self.WV = Linear(rng, cfg.d_e, cfg.d_e, bias=False)
        self.WB = Linear(rng, cfg.d_e, H)
        self.WG = Linear(rng, cfg.d_e, cfg.d_e)
        self.film = FiLM(rng, cfg.d_c, cfg.d_e)

    def attend(self, e: T.Tensor, node_mask: np.ndarray) -> T.Tensor:
        """The aggregated triplet message z (B, n, n, d_e)."""
        B, n, _, d = e.shape
        H = self.heads
        dk = d // H
        q = self.WQ(e).reshape(B, n, n, H, dk)
        k = self.WK(e).reshape(B, n, n, H, dk)
        v = self.WV(e).reshape(B, n, n, H, dk)
        bias = self.WB(e).reshape(B, n, 1, n, H)  # b_ik, shared across j
        gate = T.sigmoid(self.WG(e)).reshape(B, n, n, H, dk)  # g_ik
        s = T.einsum("bijhd,bjkhd->bijkh", q, k) * (1.0 / np.sqrt(dk)) + bias
        a = T.softmax(s, axis=3, mask=node_mask[:, None, None, :, None])
        # gated values sigma(g_ik) * v_jk for every (i, j, k)
        gv = gate.reshape(B, n, 1, n, H, dk) * v.reshape(B, 1, n, n, H, dk)
        z = T.einsum("bijkh,bijkhd->bijhd", a, gv)
        return z.reshape(B, n, n, d)

    def __call__(self, e, c, node_mask):
        return symmetrize(e + self.film(self.attend(e, node_mask), c))


class ManyBodyDecoder(Module):
    def __init__(self, rng, cfg: DecoderConfig = DecoderConfig()):
        self.cfg = cfg
        self.node_emb = Parameter(rng.normal(0.0, 1.0, size=(len(HEAVY_ORDER), cfg.d_h)))
        self.edge_emb = Linear(rng, 2 * cfg.d_h + cfg.k, cfg.d_e)
        self.cond = Linear(rng, cfg.d_y + cfg.d_t, cfg.d_c)
        self.node_edge = [NodeEdgeLayer(rng, cfg) for _ in range(cfg.layers)]
        self.many_body = [ManyBodyAttention(rng, cfg) for _ in range(cfg.layers)] if cfg.many_body else []
        self.classifier = Linear(rng, cfg.d_e, cfg.k)
        # fingerprint -> condition slot, used only when pretraining without spectra
        self.fp_proj = Linear(rng, cfg.fp_length, cfg.d_y)

    def condition(self, y: T.Tensor, t: np.ndarray, T_max: int) -> T.Tensor:
        # RMS-normalise so fingerprint projections and spectrum encodings share a scale
        y = y / T.sqrt(T.mean(y * y, axis=-1, keepdims=True) + 1e-6)
        temb = T.Tensor(timestep_embedding(t, self.cfg.d_t, max(T_max, 2)))
        return self.cond(T.concat([y, temb], axis=-1))

    def init_embeddings(self, atoms: np.ndarray, E_t: np.ndarray) -> tuple[T.Tensor, T.Tensor]:
        cfg = self.cfg
        if not np.array_equal(E_t, np.swapaxes(E_t, -1, -2)):
            raise ValueError("noisy bond matrix must be symmetric")
        h = self.node_emb[atoms]
        W = self.edge_emb.weight
        # linear([h_i; h_j; onehot(E_ij)]) split into its three column blocks
        hi = T.linear(h, W[:, : cfg.d_h])
        hj = T.linear(h, W[:, cfg.d_h : 2 * cfg.d_h])
        r = T.linear(T.Tensor(np.eye(cfg.k)[E_t]), W[:, 2 * cfg.d_h :], self.edge_emb.bias)
        B, n = atoms.shape
        e = hi.reshape(B, n, 1, cfg.d_e) + hj.reshape(B, 1, n, cfg.d_e) + r
        return h, symmetrize(e)

    def __call__(self, atoms, node_mask, E_t, t, y: T.Tensor, T_max: int) -> T.Tensor:
        """Logits (B, n, n, k) for the clean bond class of every pair."""
        atoms = np.asarray(atoms)
        if atoms.shape[1] == 0:
            raise ValueError("cannot decode an empty graph")
        c = self.condition(y, t, T_max)
        h, e = self.init_embeddings(atoms, np.asarray(E_t))
        for l in range(self.cfg.layers):
            h, e = self.node_edge[l](h, e, c, node_mask)
            if self.many_body:
                e = self.many_body[l](e, c, node_mask)
        logits = symmetrize(self.classifier(e))
        n = atoms.shape[1]
        diag = np.eye(n, dtype=bool)[None, :, :, None]
        return logits * (~diag) + diag * diag_logits(self.cfg.k)


def atom_indices(nodes) -> np.ndarray:
    return np.array([ATOM_INDEX[a] for a in nodes], dtype=np.int64)


def decode_logits(nodes, E_t: np.ndarray, t: int, y: np.ndarray, dec: ManyBodyDecoder, T_max: int) -> np.ndarray:
    """Single-graph convenience wrapper returning an (n, n, k) array."""
    atoms = atom_indices(nodes)[None]
    mask = np.ones_like(atoms, dtype=bool)
    with T.no_grad():
        out = dec(atoms, mask, np.asarray(E_t)[None], np.array([t]), T.Tensor(np.atleast_2d(y)), T_max)
    return out.data[0]
