"""Slow, direct reference implementations used by the self-test and the test suite.

Each function recomputes a quantity by explicit loops or enumeration and
shares no code path with the vectorised implementation it checks.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .chem import MolecularGraph


def _lin(x, lin):
    out = lin.weight.data @ x
    return out + lin.bias.data if lin.bias is not None else out


def _gelu(x):
    return 0.5 * x * (1 + np.tanh(math.sqrt(2 / math.pi) * (x + 0.044715 * x**3)))


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _softmax(v):
    w = np.exp(v - v.max())
    return w / w.sum()


def _film(o, c, fl):
    return fl.W2.data @ c + o * (fl.W1.data @ c) + o


# diffusion

def qbar_product(Q: np.ndarray, t: int) -> np.ndarray:
    out = np.eye(Q.shape[1])
    for s in range(1, t + 1):
        out = out @ Q[s]
    return out


def bayes_posterior(e_t: int, e_0: int, t: int, Q: np.ndarray) -> np.ndarray:
    """q(e_{t-1} | e_t, e_0) by Bayes over explicit chain products."""
    k = Q.shape[1]
    prev = qbar_product(Q, t - 1)
    joint = np.array([prev[e_0, a] * Q[t][a, e_t] for a in range(k)])
    return joint / joint.sum()


def mixture_loop(probs: np.ndarray, e_t: int, t: int, Q: np.ndarray) -> np.ndarray:
    k = Q.shape[1]
    out = np.zeros(k)
    for e0 in range(k):
        out += probs[e0] * bayes_posterior(e_t, e0, t, Q)
    return out


def chain_marginal(n: int, decode, Q: np.ndarray, m: np.ndarray) -> dict[tuple, float]:
    """Exact law of the final bond matrix of the reverse chain by enumerating all states.

    ``decode(E, t)`` returns (n, n, k) logits for one symmetric matrix ``E``.
    The chain is Markov over the k**pairs upper-triangle states, so summing
    over every state sequence reduces to propagating the state vector.
    """
    k = Q.shape[1]
    T_max = Q.shape[0] - 1
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    states = list(itertools.product(range(k), repeat=len(pairs)))

    def matrix(state):
        E = np.zeros((n, n), dtype=np.int8)
        for (i, j), c in zip(pairs, state):
            E[i, j] = E[j, i] = c
        return E

    law = {s: float(np.prod([m[c] for c in s])) for s in states}
    for t in range(T_max, 0, -1):
        nxt = dict.fromkeys(states, 0.0)
        for s, p in law.items():
            if p == 0.0:
                continue
            logits = decode(matrix(s), t)
            per_pair = [mixture_loop(_softmax(logits[i, j]), s[p_i], t, Q) for p_i, (i, j) in enumerate(pairs)]
            for s2 in states:
                nxt[s2] += p * float(np.prod([per_pair[a][c] for a, c in enumerate(s2)]))
        law = nxt
    return law


# chemistry

def brute_isomorphic(g1: MolecularGraph, g2: MolecularGraph) -> bool:
    if g1.n != g2.n or sorted(g1.nodes) != sorted(g2.nodes):
        return False
    for perm in itertools.permutations(range(g1.n)):
        if all(g1.nodes[perm[i]] == g2.nodes[i] for i in range(g1.n)):
            if np.array_equal(g1.edges[np.ix_(perm, perm)], g2.edges):
                return True
    return False


def brute_canonical_key(labels, E: np.ndarray) -> bytes:
    """Lexicographically smallest (labels, adjacency) over all n! relabelings."""
    n = len(labels)
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.intp).reshape(-1, n)
    codes = np.array([ord(a[0]) * 256 + (ord(a[1]) if len(a) > 1 else 0) for a in labels], dtype=np.int64)
    E = np.asarray(E, dtype=np.int64)
    keys = np.concatenate([codes[perms], E[perms[:, :, None], perms[:, None, :]].reshape(len(perms), -1)], axis=1)
    best = keys[np.lexsort(keys.T[::-1])[0]]
    return best.tobytes()


def brute_mces(g1: MolecularGraph, g2: MolecularGraph) -> int:
    """|E1| + |E2| - 2 * max common edges over all label-preserving partial injections."""
    best = 0
    n1, n2 = g1.n, g2.n
    e1 = [(i, j, int(g1.edges[i, j])) for i in range(n1) for j in range(i + 1, n1) if g1.edges[i, j]]
    for size in range(n1 + 1):
        for dom in itertools.combinations(range(n1), size):
            for img in itertools.permutations(range(n2), size):
                f = dict(zip(dom, img))
                if any(g1.nodes[a] != g2.nodes[b] for a, b in f.items()):
                    continue
                common = sum(1 for i, j, c in e1 if i in f and j in f and g2.edges[f[i], f[j]] == c)
                best = max(best, common)
    return g1.num_bonds + g2.num_bonds - 2 * best


def brute_tanimoto(a: np.ndarray, b: np.ndarray) -> float:
    both = either = 0
    for x, y in zip(a, b):
        both += int(x and y)
        either += int(x or y)
    return 1.0 if either == 0 else both / either


# networks

def encoder_layer_loop(layer, X: np.ndarray, F: np.ndarray) -> np.ndarray:
    """One formula-attention layer for a single spectrum; X (N, d), F embedded formulas (N, d)."""
    N, d = X.shape
    H = layer.heads
    dh = d // H
    out = X.copy()
    q = np.array([_lin(x, layer.Wq) for x in X])
    k = np.array([_lin(x, layer.Wk) for x in X])
    v = np.array([_lin(x, layer.Wv) for x in X])
    for h in range(H):
        sl = slice(h * dh, (h + 1) * dh)
        for i in range(N):
            s = np.array([
                ((q[i, sl] + layer.b1.data[h]) @ k[j, sl] + (q[i, sl] + layer.b2.data[h]) @ np.abs(F[i, sl] - F[j, sl]))
                / math.sqrt(dh)
                for j in range(N)
            ])
            a = _softmax(s)
            out[i, sl] += sum(a[j] * v[j, sl] for j in range(N))
    return out


def node_edge_loop(layer, h: np.ndarray, e: np.ndarray, c: np.ndarray):
    """Node-edge layer for one graph: h (n, d_h), e (n, n, d_e), c (d_c,)."""
    n, d = h.shape
    H = layer.heads
    dk = d // H
    q = np.array([layer.WQ.weight.data @ x for x in h])
    k = np.array([layer.WK.weight.data @ x for x in h])
    v = np.array([layer.WV.weight.data @ x for x in h])
    alpha = np.zeros((n, n, H))
    for i in range(n):
        for j in range(n):
            we = _lin(e[i, j], layer.WE)
            for hh in range(H):
                sl = slice(hh * dk, (hh + 1) * dk)
                alpha[i, j, hh] = q[i, sl] @ k[j, sl] / math.sqrt(dk) + we[hh]
    e_new = np.zeros_like(e)
    for i in range(n):
        for j in range(n):
            x = e[i, j] + _film(_lin(alpha[i, j], layer.Walpha), c, layer.film)
            e_new[i, j] = x + _lin(_gelu(_lin(x, layer.ffn.inner)), layer.ffn.outer)
    e_new = 0.5 * (e_new + e_new.transpose(1, 0, 2))
    h_new = h.copy()
    for i in range(n):
        agg = np.zeros(d)
        for hh in range(H):
            sl = slice(hh * dk, (hh + 1) * dk)
            a = _softmax(alpha[i, :, hh])
            agg[sl] = sum(a[j] * v[j, sl] for j in range(n))
        h_new[i] += _lin(agg, layer.WO)
    return h_new, e_new


def many_body_loop(mb, e: np.ndarray, c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(z, e') for one graph by the direct triple loop over (i, j, k)."""
    n, _, d = e.shape
    H = mb.heads
    dk = d // H
    q = np.einsum("od,ijd->ijo", mb.WQ.weight.data, e)
    kk = np.einsum("od,ijd->ijo", mb.WK.weight.data, e)
    v = np.einsum("od,ijd->ijo", mb.WV.weight.data, e)
    z = np.zeros_like(e)
    for i in range(n):
        for j in range(n):
            for hh in range(H):
                sl = slice(hh * dk, (hh + 1) * dk)
                s = np.array([q[i, j, sl] @ kk[j, k, sl] / math.sqrt(dk) + _lin(e[i, k], mb.WB)[hh] for k in range(n)])
                a = _softmax(s)
                for k in range(n):
                    gate = _sigmoid(_lin(e[i, k], mb.WG)[sl])
                    z[i, j, sl] += a[k] * gate * v[j, k, sl]
    out = np.zeros_like(e)
    for i in range(n):
        for j in range(n):
            out[i, j] = e[i, j] + _film(z[i, j], c, mb.film)
    return z, 0.5 * (out + out.transpose(1, 0, 2))
