"""Command-line entry point: ``mbgen <subcommand> --config <path> --seed <u64>``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .chem import circular_fingerprint
from .io import (
    RunConfig,
    load_checkpoint,
    load_config,
    load_graph_dataset,
    parse_mgf,
    save_checkpoint,
    write_graph_dataset,
    write_mgf,
)
from .io.config import format_config
from .metrics import evaluate_dataset, item_rng
from .nn import make_rng
from .training import (
    finetune,
    generate_candidates,
    pack_checkpoint,
    pretrain_decoder,
    pretrain_encoder,
    transitions_for,
    unpack_checkpoint,
)

log = logging.getLogger("mbgen")

ENCODER_CKPT = "encoder.ckpt"
DECODER_CKPT = "decoder.ckpt"
MODEL_CKPT = "model.ckpt"


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed {text} is not an unsigned 64-bit integer")
    return value


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    return cfg.replace(seed=args.seed)


def _paired_dataset(cfg: RunConfig):
    if not cfg.graphs or not cfg.spectra:
        raise ValueError("config must set both 'graphs' and 'spectra'")
    graphs = dict(load_graph_dataset(cfg.graphs))
    pairs = []
    for s in parse_mgf(cfg.spectra):
        if s.title not in graphs:
            raise ValueError(f"spectrum {s.title!r} has no graph record in {cfg.graphs}")
        pairs.append((s, graphs[s.title]))
    return pairs


def _workdir(cfg: RunConfig) -> Path:
    path = Path(cfg.workdir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_pretrain_encoder(args) -> int:
    cfg = _config(args)
    enc, hist, rng = pretrain_encoder(_paired_dataset(cfg), cfg)
    out = _workdir(cfg) / ENCODER_CKPT
    save_checkpoint(out, pack_checkpoint("encoder-pretrain", cfg, enc=enc, rng=rng))
    print(f"encoder-pretrain: final loss {hist.losses[-1]:.6f}; wrote {out}")
    return 0


def cmd_pretrain_decoder(args) -> int:
    cfg = _config(args)
    if not cfg.graphs:
        raise ValueError("config must set 'graphs'")
    data = [(circular_fingerprint(g, cfg.fp_radius, cfg.fp_length), g) for _, g in load_graph_dataset(cfg.graphs)]
    dec, m, hist, rng = pretrain_decoder(data, cfg)
    out = _workdir(cfg) / DECODER_CKPT
    save_checkpoint(out, pack_checkpoint("decoder-pretrain", cfg, dec=dec, m=m, rng=rng))
    print(f"decoder-pretrain: final loss {hist.losses[-1]:.6f}; wrote {out}")
    return 0


def cmd_finetune(args) -> int:
    cfg = _config(args)
    work = _workdir(cfg)
    enc, _, _ = unpack_checkpoint(load_checkpoint(args.encoder or work / ENCODER_CKPT), cfg)
    _, dec, m = unpack_checkpoint(load_checkpoint(args.decoder or work / DECODER_CKPT), cfg)
    if enc is None or dec is None:
        raise ValueError("finetune needs an encoder and a decoder checkpoint")
    enc, dec, hist, rng = finetune(_paired_dataset(cfg), enc, dec, m, cfg)
    out = work / MODEL_CKPT
    save_checkpoint(out, pack_checkpoint("finetune", cfg, enc=enc, dec=dec, m=m, rng=rng))
    print(f"finetune: final loss {hist.losses[-1]:.6f}; wrote {out}")
    return 0


def _load_model(args, cfg: RunConfig):
    path = args.checkpoint or Path(cfg.workdir) / MODEL_CKPT
    ckpt = load_checkpoint(path)
    model_cfg = RunConfig.from_dict(ckpt.config)
    enc, dec, m = unpack_checkpoint(ckpt, model_cfg)
    if enc is None or dec is None or m is None:
        raise ValueError(f"{path} is not a finetuned model checkpoint")
    return enc, dec, transitions_for(model_cfg, m)


def cmd_sample(args) -> int:
    cfg = _config(args)
    enc, dec, trans = _load_model(args, cfg)
    n_samples = args.n_samples or cfg.n_samples
    records = []
    for i, spec in enumerate(parse_mgf(args.spectra)):
        cands = generate_candidates(spec, enc, dec, trans, item_rng(cfg.seed, i), n_samples)
        for rank, (_, g, _) in enumerate(cands.ranked[: args.top], start=1):
            ident = spec.title if args.top == 1 else f"{spec.title}.r{rank}"
            records.append((ident, g, spec.precursor))
    write_graph_dataset(args.out, records)
    print(f"sample: wrote {len(records)} graphs to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    enc, dec, trans = _load_model(args, cfg)
    report = evaluate_dataset(enc, dec, trans, _paired_dataset(cfg), cfg.seed, cfg.n_samples, cfg.mces_budget)
    text = report.to_tsv()
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_make_toy(args) -> int:
    from .toydata import ToySpec, generate_toy_dataset

    spec = ToySpec(molecules=args.molecules, max_atoms=args.max_atoms, depth=args.depth, seed=args.seed)
    data = generate_toy_dataset(spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_graph_dataset(out / "graphs.txt", [(name, g) for name, g, _ in data])
    write_mgf(out / "spectra.mgf", [s for _, _, s in data])
    print(f"make-toy: wrote {len(data)} molecules to {out}")
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    return run_selftest()


def cmd_show_config(args) -> int:
    sys.stdout.write(format_config(_config(args)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mbgen", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, help="key = value run configuration")
        p.add_argument("--seed", type=_u64, default=0)
        p.set_defaults(func=func)
        return p

    add("pretrain-encoder", cmd_pretrain_encoder, "fit the spectrum encoder to molecular fingerprints")
    add("pretrain-decoder", cmd_pretrain_decoder, "train the denoiser conditioned on fingerprints")
    p = add("finetune", cmd_finetune, "jointly train encoder and decoder on spectra")
    p.add_argument("--encoder", type=Path)
    p.add_argument("--decoder", type=Path)
    p = add("sample", cmd_sample, "generate structures for every spectrum in an MGF file")
    p.add_argument("--spectra", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--n-samples", type=int)
    p.add_argument("--top", type=int, default=1)
    p = add("evaluate", cmd_evaluate, "score candidates against the configured dataset")
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--out", type=Path)
    add("selftest", cmd_selftest, "run the built-in oracle and invariant checks")
    p = add("make-toy", cmd_make_toy, "write a synthetic graph/MGF dataset")
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--molecules", type=int, default=20)
    p.add_argument("--max-atoms", type=int, default=9)
    p.add_argument("--depth", type=int, default=2)
    add("show-config", cmd_show_config, "print the effective configuration")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001
        print(f"mbgen {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
