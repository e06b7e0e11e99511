"""Candidate-set scoring: top-k exact match, best Tanimoto, best MCES distance."""

from __future__ import annotations

import io
import logging
import os
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .chem import MolecularGraph, circular_fingerprint, is_isomorphic, mces_distance, tanimoto
from .chem.mces import DEFAULT_BUDGET
from .diffusion import TransitionMatrices
from .encoder import Spectrum
from .training import CandidateSet, generate_candidates

log = logging.getLogger(__name__)

KS = (1, 10)


def topk_accuracy(candidates: CandidateSet, truth: MolecularGraph, k: int) -> int:
    if not candidates.ranked:
        log.warning("empty candidate list for %s", candidates.spectrum_id)
        return 0
    return int(any(is_isomorphic(g, truth) for g in candidates.top(k)))


def topk_similarity(
    candidates: CandidateSet,
    truth: MolecularGraph,
    k: int,
    budget: int = DEFAULT_BUDGET,
) -> tuple[float, float, bool]:
    """(best Tanimoto, lowest MCES distance, MCES exact) over the first k candidates."""
    top = candidates.top(k)
    if not top:
        return 0.0, float(truth.num_bonds), True
    fp_truth = circular_fingerprint(truth)
    best_tan = max(tanimoto(circular_fingerprint(g), fp_truth) for g in top)
    results = [mces_distance(g, truth, budget) for g in top]
    best = min(results, key=lambda r: r.distance)
    return best_tan, best.distance, best.exact


@dataclass
class ItemRecord:
    spectrum_id: str
    atoms: int
    unique: int
    accuracy: dict[int, int]
    tanimoto: dict[int, float]
    mces: dict[int, float]
    mces_exact: dict[int, bool]


@dataclass
class EvalReport:
    items: list[ItemRecord]
    ks: tuple[int, ...] = KS
    summary: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.summary:
            self.summary = self._summarise(self.items)

    def _summarise(self, items) -> dict:
        out = {"items": len(items)}
        for k in self.ks:
            out[f"top{k}_accuracy"] = float(np.mean([r.accuracy[k] for r in items])) if items else 0.0
            out[f"top{k}_tanimoto"] = float(np.mean([r.tanimoto[k] for r in items])) if items else 0.0
            out[f"top{k}_mces"] = float(np.mean([r.mces[k] for r in items])) if items else 0.0
            out[f"top{k}_mces_inexact"] = sum(not r.mces_exact[k] for r in items)
        return out

    def by_atoms(self) -> dict[int, dict]:
        groups: dict[int, list[ItemRecord]] = {}
        for r in self.items:
            groups.setdefault(r.atoms, []).append(r)
        return {a: self._summarise(groups[a]) for a in sorted(groups)}

    def to_tsv(self) -> str:
        buf = io.StringIO()
        buf.write("# summary\nmetric\tvalue\n")
        for key, val in self.summary.items():
            buf.write(f"{key}\t{_fmt(val)}\n")
        buf.write("\n# by heavy-atom count\natoms\titems")
        for k in self.ks:
            buf.write(f"\ttop{k}_accuracy\ttop{k}_tanimoto\ttop{k}_mces")
        buf.write("\n")
        for atoms, s in self.by_atoms().items():
            buf.write(f"{atoms}\t{s['items']}")
            for k in self.ks:
                buf.write(f"\t{_fmt(s[f'top{k}_accuracy'])}\t{_fmt(s[f'top{k}_tanimoto'])}\t{_fmt(s[f'top{k}_mces'])}")
            buf.write("\n")
        buf.write("\n# per item\nspectrum_id\tatoms\tunique")
        for k in self.ks:
            buf.write(f"\ttop{k}_hit\ttop{k}_tanimoto\ttop{k}_mces\ttop{k}_mces_exact")
        buf.write("\n")
        for r in self.items:
            buf.write(f"{r.spectrum_id}\t{r.atoms}\t{r.unique}")
            for k in self.ks:
                buf.write(f"\t{r.accuracy[k]}\t{_fmt(r.tanimoto[k])}\t{_fmt(r.mces[k])}\t{int(r.mces_exact[k])}")
            buf.write("\n")
        return buf.getvalue()


def _fmt(v) -> str:
    return f"{v:.6f}" if isinstance(v, float) else str(v)


def score_item(cands: CandidateSet, truth: MolecularGraph, ks=KS, budget: int = DEFAULT_BUDGET) -> ItemRecord:
    acc, tan, mc, exact = {}, {}, {}, {}
    for k in ks:
        acc[k] = topk_accuracy(cands, truth, k)
        tan[k], mc[k], exact[k] = topk_similarity(cands, truth, k, budget)
    return ItemRecord(cands.spectrum_id, truth.n, len(cands.ranked), acc, tan, mc, exact)


def item_rng(seed: int, index: int) -> np.random.Generator:
    """Independent per-spectrum stream; results do not depend on worker count."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, index])))


def evaluate_dataset(
    enc,
    dec,
    trans: TransitionMatrices,
    dataset: Sequence[tuple[Spectrum, MolecularGraph]],
    seed: int,
    n_samples: int = 100,
    budget: int = DEFAULT_BUDGET,
    threads: int | None = None,
) -> EvalReport:
    def work(i):
        spec, truth = dataset[i]
        cands = generate_candidates(spec, enc, dec, trans, item_rng(seed, i), n_samples)
        return score_item(cands, truth, KS, budget)

    threads = threads or int(os.environ.get("MBGEN_THREADS", "1") or 1)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            items = list(pool.map(work, range(len(dataset))))
    else:
        items = [work(i) for i in range(len(dataset))]
    return EvalReport(items)
