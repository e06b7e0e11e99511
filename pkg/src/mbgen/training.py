"""Three-stage training and candidate generation."""

from __future__ import annotations

import logging
import math
from collections import Counter
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .chem import MolecularGraph, canonical_form, circular_fingerprint
from .decoder import ManyBodyDecoder, atom_indices
from .diffusion import (
    NoiseSchedule,
    TransitionMatrices,
    build_transitions,
    estimate_marginals,
    forward_noise,
    training_loss,
)
from .encoder import Spectrum, SpectrumEncoder, batch_spectra
from .io.checkpoint import Checkpoint
from .io.config import RunConfig
from .nn import Adam, backward, make_rng
from .nn import tensor as T
from .sampling import sample_graphs

log = logging.getLogger(__name__)

STAGES = ("encoder-pretrain", "decoder-pretrain", "finetune")


class TrainingError(RuntimeError):
    pass


@dataclass
class History:
    stage: str
    losses: list[float] = field(default_factory=list)

    def append(self, step: int, loss: float, log_path: Path | None = None, every: int = 100) -> None:
        if not math.isfinite(loss):
            raise TrainingError(f"{self.stage}: non-finite loss {loss!r} at step {step}")
        self.losses.append(loss)
        if log_path is not None and (step % every == 0 or step == 1):
            with open(log_path, "a") as fh:
                fh.write(f"stage={self.stage}\tstep={step}\tloss={loss:.10g}\n")


def _log_path(cfg: RunConfig) -> Path | None:
    if not cfg.workdir:
        return None
    path = Path(cfg.workdir)
    path.mkdir(parents=True, exist_ok=True)
    return path / "metrics.log"


def build_encoder(cfg: RunConfig, rng: np.random.Generator) -> SpectrumEncoder:
    return SpectrumEncoder(rng, cfg.encoder_config())


def build_decoder(cfg: RunConfig, rng: np.random.Generator) -> ManyBodyDecoder:
    return ManyBodyDecoder(rng, cfg.decoder_config())


def transitions_for(cfg: RunConfig, m: np.ndarray) -> TransitionMatrices:
    return build_transitions(NoiseSchedule.cosine(cfg.timesteps), m)


def cosine_lr(base: float, step: int, steps: int, floor: float = 0.05) -> float:
    """Half-cosine decay from ``base`` to ``floor * base`` over ``steps``."""
    frac = (step - 1) / max(steps - 1, 1)
    return base * (floor + (1 - floor) * 0.5 * (1 + math.cos(math.pi * frac)))


def _pick(rng: np.random.Generator, size: int, batch: int) -> np.ndarray:
    return np.sort(rng.choice(size, size=min(batch, size), replace=False))


# encoder pretraining

def pretrain_encoder(
    data: Sequence[tuple[Spectrum, MolecularGraph]],
    cfg: RunConfig,
    enc: SpectrumEncoder | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[SpectrumEncoder, History, np.random.Generator]:
    """Fit ``sigmoid(fp_head(encode(s)))`` to the circular fingerprint of each molecule."""
    if not data:
        raise TrainingError("encoder pretraining needs a non-empty dataset")
    rng = rng or make_rng(cfg.seed)
    enc = enc or build_encoder(cfg, rng)
    targets = np.stack([circular_fingerprint(g, cfg.fp_radius, cfg.fp_length) for _, g in data]).astype(np.float64)
    opt = Adam(list(enc.named_parameters()), lr=cfg.lr)
    hist = History("encoder-pretrain")
    logp = _log_path(cfg)
    for step in range(1, cfg.steps_encoder + 1):
        idx = _pick(rng, len(data), cfg.batch_size)
        y = enc([data[i][0] for i in idx])
        loss = T.bce_with_logits(enc.fingerprint_logits(y), targets[idx]).mean()
        opt.zero_grad()
        backward(loss)
        opt.step()
        hist.append(step, loss.item(), logp, cfg.log_every)
    return enc, hist, rng


# diffusion training (decoder pretraining and finetuning share this loop)

@dataclass
class GraphBatch:
    atoms: np.ndarray
    node_mask: np.ndarray
    E0: np.ndarray
    pair_mask: np.ndarray

    @classmethod
    def from_graphs(cls, graphs: Sequence[MolecularGraph]) -> "GraphBatch":
        n = max(g.n for g in graphs)
        B = len(graphs)
        atoms = np.zeros((B, n), dtype=np.int64)
        mask = np.zeros((B, n), dtype=bool)
        E0 = np.zeros((B, n, n), dtype=np.int8)
        for b, g in enumerate(graphs):
            atoms[b, : g.n] = atom_indices(g.nodes)
            mask[b, : g.n] = True
            E0[b, : g.n, : g.n] = g.edges
        pair = np.triu(np.ones((n, n), dtype=bool), 1)[None] & mask[:, :, None] & mask[:, None, :]
        return cls(atoms, mask, E0, pair)


def diffusion_loss(
    dec: ManyBodyDecoder,
    batch: GraphBatch,
    y: T.Tensor,
    trans: TransitionMatrices,
    rng: np.random.Generator,
) -> T.Tensor:
    t = rng.integers(1, trans.T + 1, size=len(batch.atoms))
    E_t = forward_noise(batch.E0, t, trans, rng)
    # padded pairs carry no information; keep them at "no bond"
    E_t = np.where(batch.node_mask[:, :, None] & batch.node_mask[:, None, :], E_t, 0).astype(np.int8)
    logits = dec(batch.atoms, batch.node_mask, E_t, t, y, trans.T)
    return training_loss(logits, batch.E0, batch.pair_mask)


def _diffusion_loop(
    stage: str,
    graphs: Sequence[MolecularGraph],
    condition: Callable[[np.ndarray], T.Tensor],
    dec: ManyBodyDecoder,
    params: list,
    trans: TransitionMatrices,
    cfg: RunConfig,
    steps: int,
    rng: np.random.Generator,
) -> History:
    opt = Adam(params, lr=cfg.lr)
    hist = History(stage)
    logp = _log_path(cfg)
    for step in range(1, steps + 1):
        if cfg.lr_decay:
            opt.lr = cosine_lr(cfg.lr, step, steps)
        idx = _pick(rng, len(graphs), cfg.batch_size)
        batch = GraphBatch.from_graphs([graphs[i] for i in idx])
        loss = diffusion_loss(dec, batch, condition(idx), trans, rng)
        opt.zero_grad()
        backward(loss)
        opt.step()
        hist.append(step, loss.item(), logp, cfg.log_every)
    return hist


def _usable(items, cfg: RunConfig, graph_of=lambda it: it[1]):
    kept = []
    for it in items:
        g = graph_of(it)
        if g.n > cfg.n_max:
            log.warning("skipping molecule with %d heavy atoms (n_max=%d)", g.n, cfg.n_max)
            continue
        kept.append(it)
    if not kept:
        raise TrainingError("no usable molecules in the dataset")
    return kept


def pretrain_decoder(
    data: Sequence[tuple[np.ndarray, MolecularGraph]],
    cfg: RunConfig,
    dec: ManyBodyDecoder | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[ManyBodyDecoder, np.ndarray, History, np.random.Generator]:
    """Train the denoiser with linearly projected fingerprints as the condition."""
    data = _usable(data, cfg)
    rng = rng or make_rng(cfg.seed)
    dec = dec or build_decoder(cfg, rng)
    graphs = [g for _, g in data]
    fps = np.stack([np.asarray(fp, dtype=np.float64) for fp, _ in data])
    m = estimate_marginals(graphs)
    trans = transitions_for(cfg, m)
    hist = _diffusion_loop(
        "decoder-pretrain",
        graphs,
        lambda idx: dec.fp_proj(T.Tensor(fps[idx])),
        dec,
        list(dec.named_parameters()),
        trans,
        cfg,
        cfg.steps_decoder,
        rng,
    )
    return dec, m, hist, rng


def finetune(
    data: Sequence[tuple[Spectrum, MolecularGraph]],
    enc: SpectrumEncoder,
    dec: ManyBodyDecoder,
    m: np.ndarray,
    cfg: RunConfig,
    rng: np.random.Generator | None = None,
) -> tuple[SpectrumEncoder, ManyBodyDecoder, History, np.random.Generator]:
    """Joint training with the encoder output as the decoder condition."""
    data = _usable(data, cfg)
    rng = rng or make_rng(cfg.seed)
    graphs = [g for _, g in data]
    packed = batch_spectra([s for s, _ in data])
    trans = transitions_for(cfg, m)
    params = [("decoder." + k, p) for k, p in dec.named_parameters() if not k.startswith("fp_proj.")]

    if cfg.freeze_encoder:
        with T.no_grad():
            frozen = enc.encode_batch(*packed).data

        def condition(idx):
            return T.Tensor(frozen[idx])
    else:
        params += [("encoder." + k, p) for k, p in enc.named_parameters() if not k.startswith("fp_head.")]

        def condition(idx):
            counts, inten, mask = (a[idx] for a in packed)
            width = int(mask.sum(axis=1).max())
            return enc.encode_batch(counts[:, :width], inten[:, :width], mask[:, :width])

    hist = _diffusion_loop("finetune", graphs, condition, dec, params, trans, cfg, cfg.steps_finetune, rng)
    return enc, dec, hist, rng


def run_pipeline(
    data: Sequence[tuple[Spectrum, MolecularGraph]],
    cfg: RunConfig,
) -> tuple[SpectrumEncoder, ManyBodyDecoder, np.ndarray, dict[str, History]]:
    """Encoder pretraining, decoder pretraining and finetuning from one seed."""
    rng = make_rng(cfg.seed)
    enc, h_enc, rng = pretrain_encoder(data, cfg, rng=rng)
    fps = [(circular_fingerprint(g, cfg.fp_radius, cfg.fp_length), g) for _, g in data]
    dec, m, h_dec, rng = pretrain_decoder(fps, cfg, rng=rng)
    enc, dec, h_ft, rng = finetune(data, enc, dec, m, cfg, rng=rng)
    return enc, dec, m, {h.stage: h for h in (h_enc, h_dec, h_ft)}


# checkpoint packing

def pack_checkpoint(stage: str, cfg: RunConfig, enc=None, dec=None, m=None, rng=None, extra=None) -> Checkpoint:
    tensors: dict[str, np.ndarray] = {}
    if enc is not None:
        tensors.update({"encoder." + k: v for k, v in enc.state_dict().items()})
    if dec is not None:
        tensors.update({"decoder." + k: v for k, v in dec.state_dict().items()})
    if m is not None:
        tensors["diffusion.marginals"] = np.asarray(m, dtype=np.float64)
    state = rng.bit_generator.state if rng is not None else None
    return Checkpoint(stage, cfg.to_dict(), tensors, state, dict(extra or {}))


def unpack_checkpoint(ckpt: Checkpoint, cfg: RunConfig | None = None):
    """Rebuild (encoder, decoder, marginals) present in ``ckpt``; absent parts are None."""
    cfg = cfg or RunConfig.from_dict(ckpt.config)
    enc = dec = m = None
    scratch = make_rng(0)
    enc_state = {k[len("encoder.") :]: v for k, v in ckpt.tensors.items() if k.startswith("encoder.")}
    dec_state = {k[len("decoder.") :]: v for k, v in ckpt.tensors.items() if k.startswith("decoder.")}
    if enc_state:
        enc = build_encoder(cfg, scratch)
        _load(enc, enc_state, "encoder.")
    if dec_state:
        dec = build_decoder(cfg, scratch)
        _load(dec, dec_state, "decoder.")
    if "diffusion.marginals" in ckpt.tensors:
        m = ckpt.tensors["diffusion.marginals"]
    return enc, dec, m


def _load(module, state, prefix):
    from .io.checkpoint import CheckpointError

    own = dict(module.named_parameters())
    for name, p in own.items():
        if name not in state:
            raise CheckpointError(f"checkpoint lacks tensor {prefix + name!r}")
        if state[name].shape != p.shape:
            raise CheckpointError(
                f"tensor {prefix + name!r}: checkpoint shape {state[name].shape} != config shape {p.shape}"
            )
    extra = sorted(set(state) - set(own))
    if extra:
        raise CheckpointError(f"unexpected tensor {prefix + extra[0]!r} for this configuration")
    module.load_state_dict(state)


# candidates

@dataclass
class CandidateSet:
    spectrum_id: str
    samples: list[MolecularGraph]
    ranked: list[tuple[str, MolecularGraph, int]]

    def top(self, k: int) -> list[MolecularGraph]:
        return [g for _, g, _ in self.ranked[:k]]


def rank_samples(samples: Sequence[MolecularGraph]) -> list[tuple[str, MolecularGraph, int]]:
    """Unique structures by descending frequency, ties by canonical string."""
    keys = [canonical_form(g) for g in samples]
    counts = Counter(keys)
    first = {}
    for key, g in zip(keys, samples):
        first.setdefault(key, g)
    order = sorted(counts, key=lambda key: (-counts[key], key))
    return [(key, first[key], counts[key]) for key in order]


def generate_candidates(
    spectrum: Spectrum,
    enc: SpectrumEncoder,
    dec: ManyBodyDecoder,
    trans: TransitionMatrices,
    rng: np.random.Generator,
    n_samples: int = 100,
) -> CandidateSet:
    with T.no_grad():
        y = enc([spectrum]).data[0]
    samples = sample_graphs(spectrum.precursor, y, dec, trans, rng, n_samples)
    return CandidateSet(spectrum.title, samples, rank_samples(samples))
