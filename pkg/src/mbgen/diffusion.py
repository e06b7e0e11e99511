"""Categorical edge diffusion: marginal noise kernel, posterior, loss, reverse step."""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np

from .chem import N_BOND_CLASSES, MolecularGraph
from .nn import tensor as T

MARGINAL_FLOOR = 1e-3


class DiffusionError(ArithmeticError):
    pass


@dataclass(frozen=True)
class NoiseSchedule:
    T: int
    alpha_bar: np.ndarray
    kind: str = "cosine"

    @classmethod
    def cosine(cls, T: int, s: float = 0.008) -> "NoiseSchedule":
        steps = np.arange(T + 1, dtype=np.float64) / T
        f = np.cos((steps + s) / (1 + s) * np.pi / 2) ** 2
        ab = np.clip(f / f[0], 0.0, 1.0)
        ab[0] = 1.0
        return cls(T, np.minimum.accumulate(ab), "cosine")

    @property
    def alpha(self) -> np.ndarray:
        """Per-step retention; index 0 is unused and set to 1."""
        ab = self.alpha_bar
        out = np.ones(self.T + 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            out[1:] = np.where(ab[:-1] > 0, ab[1:] / ab[:-1], 0.0)
        return np.clip(out, 0.0, 1.0)


def estimate_marginals(graphs: Iterable[MolecularGraph], k: int = N_BOND_CLASSES, floor: float = MARGINAL_FLOOR) -> np.ndarray:
    """Bond-class frequencies over unordered atom pairs, floored so every class stays reachable."""
    counts = np.zeros(k)
    for g in graphs:
        iu = np.triu_indices(g.n, 1)
        counts += np.bincount(g.edges[iu], minlength=k)[:k]
    if counts.sum() == 0:
        counts[0] = 1.0
    m = np.maximum(counts / counts.sum(), floor)
    return m / m.sum()


@dataclass(frozen=True)
class TransitionMatrices:
    """``Q[t]`` and ``Qbar[t]`` for t = 0..T; both are identity at t = 0."""

    Q: np.ndarray
    Qbar: np.ndarray
    m: np.ndarray

    @property
    def T(self) -> int:
        return self.Q.shape[0] - 1

    @property
    def k(self) -> int:
        return self.Q.shape[1]


def build_transitions(schedule: NoiseSchedule, m: np.ndarray) -> TransitionMatrices:
    m = np.asarray(m, dtype=np.float64)
    k = m.shape[0]
    eye = np.eye(k)
    prior = np.ones((k, 1)) * m[None, :]
    a = schedule.alpha[:, None, None]
    ab = schedule.alpha_bar[:, None, None]
    Q = a * eye + (1 - a) * prior
    Qbar = ab * eye + (1 - ab) * prior
    for name, mats in (("Q", Q), ("Qbar", Qbar)):
        if np.any(mats < 0) or np.max(np.abs(mats.sum(axis=-1) - 1.0)) > 1e-12:
            raise DiffusionError(f"{name} is not row-stochastic")
    return TransitionMatrices(Q, Qbar, m)


def _sample_rows(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row of ``probs`` (..., k)."""
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[:-1] + (1,)) * cdf[..., -1:]
    return np.minimum((u >= cdf).sum(axis=-1), probs.shape[-1] - 1)


def _symmetric_from_upper(upper_vals: np.ndarray, n: int, lead: tuple) -> np.ndarray:
    out = np.zeros(lead + (n, n), dtype=np.int8)
    iu = np.triu_indices(n, 1)
    out[(...,) + iu] = upper_vals
    return out + np.swapaxes(out, -1, -2)


def forward_noise(E0: np.ndarray, t, trans: TransitionMatrices, rng: np.random.Generator) -> np.ndarray:
    """Corrupt ``E0`` (n, n) or (B, n, n) to step ``t`` (scalar or per-batch array)."""
    E0 = np.asarray(E0)
    n = E0.shape[-1]
    lead = E0.shape[:-2]
    iu = np.triu_indices(n, 1)
    upper = E0[(...,) + iu]
    tt = np.broadcast_to(np.asarray(t), lead)
    rows = trans.Qbar[tt[..., None], upper]
    return _symmetric_from_upper(_sample_rows(rows, rng), n, lead)


def posterior_table(t: int, trans: TransitionMatrices) -> np.ndarray:
    """``P[e_t, e_0, e_prev] = q(e_prev | e_t, e_0)`` at step t."""
    if not 1 <= t <= trans.T:
        raise ValueError(f"timestep {t} outside 1..{trans.T}")
    # numerator[e_t, e_0, e_prev] = Q_t[e_prev, e_t] * Qbar_{t-1}[e_0, e_prev]
    num = trans.Q[t].T[:, None, :] * trans.Qbar[t - 1][None, :, :]
    z = num.sum(axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(z > 0, num / z, np.nan)


def posterior(e_t: int, e_0: int, t: int, trans: TransitionMatrices) -> np.ndarray:
    row = posterior_table(t, trans)[e_t, e_0]
    if np.any(np.isnan(row)):
        raise DiffusionError(f"zero normaliser in posterior (e_t={e_t}, e_0={e_0}, t={t})")
    return row


def training_loss(logits: T.Tensor, E0: np.ndarray, mask: np.ndarray) -> T.Tensor:
    """Mean cross-entropy over masked pairs; ``mask`` selects unordered off-diagonal pairs."""
    k = logits.shape[-1]
    onehot = np.eye(k)[np.asarray(E0, dtype=np.int64)]
    w = np.asarray(mask, dtype=np.float64)
    total = w.sum()
    if total == 0:
        raise ValueError("loss mask selects no pairs")
    nll = -(T.log_softmax(logits, axis=-1) * onehot).sum(axis=-1)
    return (nll * (w / total)).sum()


def reverse_distribution(probs: np.ndarray, E_t: np.ndarray, t: int, trans: TransitionMatrices) -> np.ndarray:
    """Per-pair ``p(e_prev) = sum_e q(e_prev | E_t, e) probs[e]``."""
    table = posterior_table(t, trans)[np.asarray(E_t, dtype=np.int64)]  # (..., e0, e_prev)
    weight = probs[..., :, None]
    bad = np.isnan(table) & (weight > 0)
    if np.any(bad):
        raise DiffusionError(f"prediction puts mass on an impossible clean class at t={t}")
    mix = np.where(np.isnan(table), 0.0, table * weight).sum(axis=-2)
    if np.any(mix < 0):
        raise DiffusionError("negative reverse-step probability")
    z = mix.sum(axis=-1, keepdims=True)
    if np.any(np.abs(z - 1.0) > 1e-9):
        raise DiffusionError("reverse-step mixture is not normalisable")
    return mix / z


def reverse_step(logits: np.ndarray, E_t: np.ndarray, t: int, trans: TransitionMatrices, rng: np.random.Generator) -> np.ndarray:
    logits = np.asarray(logits)
    z = logits - logits.max(axis=-1, keepdims=True)
    probs = np.exp(z)
    probs /= probs.sum(axis=-1, keepdims=True)
    dist = reverse_distribution(probs, E_t, t, trans)
    n = dist.shape[-2]
    iu = np.triu_indices(n, 1)
    draws = _sample_rows(dist[(...,) + iu + (slice(None),)], rng)
    return _symmetric_from_upper(draws, n, dist.shape[:-3])


def sample_prior(n: int, trans: TransitionMatrices, rng: np.random.Generator, lead: tuple = ()) -> np.ndarray:
    npairs = n * (n - 1) // 2
    rows = np.broadcast_to(trans.m, lead + (npairs, trans.k))
    return _symmetric_from_upper(_sample_rows(rows, rng), n, lead)
