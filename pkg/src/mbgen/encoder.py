"""Set encoder over formula-annotated peaks, pooled into a global condition."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import asdict, dataclass, field

import numpy as np

from .chem import ELEMENTS, FP_LENGTH, Formula
from .nn import Linear, Module, Parameter
from .nn import tensor as T


class SpectrumError(ValueError):
    pass


@dataclass(frozen=True)
class Peak:
    mz: float
    intensity: float
    formula: Formula


@dataclass(frozen=True)
class Spectrum:
    peaks: tuple[Peak, ...]
    precursor: Formula
    title: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.peaks:
            raise SpectrumError("spectrum has no peaks")
        for p in self.peaks:
            if p.mz <= 0 or p.intensity < 0:
                raise SpectrumError(f"invalid peak mz={p.mz} intensity={p.intensity}")
            if not p.formula.is_subformula_of(self.precursor):
                raise SpectrumError(f"peak formula {p.formula} is not a sub-formula of {self.precursor}")

    @classmethod
    def normalized(cls, peaks: Sequence[Peak], precursor: Formula, title: str = "", meta=None) -> "Spectrum":
        if not peaks:
            raise SpectrumError("spectrum has no peaks")
        top = max(p.intensity for p in peaks)
        scale = 1.0 / top if top > 0 else 1.0
        scaled = tuple(Peak(p.mz, p.intensity * scale, p.formula) for p in peaks)
        return cls(scaled, precursor, title, dict(meta or {}))


@dataclass(frozen=True)
class EncoderConfig:
    d: int = 256
    heads: int = 4
    layers: int = 3
    fp_length: int = FP_LENGTH

    def to_dict(self):
        return asdict(self)


def batch_spectra(spectra: Sequence[Spectrum]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pad to (B, N_max): element counts, intensities and a peak mask."""
    if any(not s.peaks for s in spectra):
        raise SpectrumError("empty spectrum")
    N = max(len(s.peaks) for s in spectra)
    B = len(spectra)
    counts = np.zeros((B, N, len(ELEMENTS)))
    inten = np.zeros((B, N))
    mask = np.zeros((B, N), dtype=bool)
    for b, s in enumerate(spectra):
        for i, p in enumerate(s.peaks):
            counts[b, i] = p.formula.count_vector()
            inten[b, i] = p.intensity
            mask[b, i] = True
    return counts, inten, mask


class FormulaAttention(Module):
    """Peak-set attention whose scores add a formula-difference term."""

    def __init__(self, rng, d: int, heads: int):
        if d % heads:
            raise ValueError("encoder width must be divisible by head count")
        self.heads = heads
        self.Wq = Linear(rng, d, d)
        self.Wk = Linear(rng, d, d)
        self.Wv = Linear(rng, d, d)
        self.b1 = Parameter(np.zeros((heads, d // heads)))
        self.b2 = Parameter(np.zeros((heads, d // heads)))

    def __call__(self, X: T.Tensor, D: T.Tensor, mask: np.ndarray) -> T.Tensor:
        B, N, d = X.shape
        H, dh = self.heads, d // self.heads
        q = self.Wq(X).reshape(B, N, H, dh)
        k = self.Wk(X).reshape(B, N, H, dh)
        v = self.Wv(X).reshape(B, N, H, dh)
        Dh = D.reshape(B, N, N, H, dh)
        s = T.einsum("bihd,bjhd->bijh", q + self.b1, k) + T.einsum("bihd,bijhd->bijh", q + self.b2, Dh)
        a = T.softmax(s * (1.0 / np.sqrt(dh)), axis=2, mask=mask[:, None, :, None])
        upd = T.einsum("bijh,bjhd->bihd", a, v).reshape(B, N, d)
        return X + upd


class SpectrumEncoder(Module):
    def __init__(self, rng, cfg: EncoderConfig = EncoderConfig()):
        self.cfg = cfg
        self.formula_embed = Linear(rng, len(ELEMENTS), cfg.d)
        self.peak_proj = Linear(rng, cfg.d + 1, cfg.d)
        self.layers = [FormulaAttention(rng, cfg.d, cfg.heads) for _ in range(cfg.layers)]
        self.fp_head = Linear(rng, cfg.d, cfg.fp_length)

    def embed_peaks(self, counts: np.ndarray, inten: np.ndarray) -> tuple[T.Tensor, T.Tensor]:
        F = self.formula_embed(T.Tensor(counts))
        X = self.peak_proj(T.concat([F, T.Tensor(inten[..., None])], axis=-1))
        return X, F

    def encode_batch(self, counts: np.ndarray, inten: np.ndarray, mask: np.ndarray) -> T.Tensor:
        X, F = self.embed_peaks(counts, inten)
        D = T.tabs(F.reshape(F.shape[0], F.shape[1], 1, F.shape[2]) - F.reshape(F.shape[0], 1, F.shape[1], F.shape[2]))
        for layer in self.layers:
            X = layer(X, D, mask)
        w = mask.astype(np.float64)
        w = w / w.sum(axis=1, keepdims=True)
        return T.einsum("bn,bnd->bd", w, X)

    def __call__(self, spectra: Sequence[Spectrum]) -> T.Tensor:
        return self.encode_batch(*batch_spectra(spectra))

    def fingerprint_logits(self, y: T.Tensor) -> T.Tensor:
        return self.fp_head(y)


def encode_spectrum(s: Spectrum, enc: SpectrumEncoder) -> np.ndarray:
    with T.no_grad():
        return enc([s]).data[0]


def predict_fingerprint(y: np.ndarray, enc: SpectrumEncoder) -> np.ndarray:
    """Bit probabilities for one condition vector."""
    with T.no_grad():
        return T.sigmoid(enc.fingerprint_logits(T.Tensor(np.atleast_2d(y)))).data[0]
