"""Flat ``key = value`` run configuration.

One key per line, ``#`` starts a comment.  Keys are the field names of
:class:`RunConfig`; values are coerced to the field's type (``true``/``false``
for booleans).  Unknown or repeated keys are errors.
"""

from __future__ import annotations

import dataclasses
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from ..decoder import DecoderConfig
from ..encoder import EncoderConfig


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class RunConfig:
    # data and outputs
    graphs: str = ""
    spectra: str = ""
    workdir: str = "runs/desk"
    seed: int = 0
    # diffusion
    timesteps: int = 50
    # spectrum encoder
    enc_d: int = 32
    enc_heads: int = 4
    enc_layers: int = 2
    fp_length: int = 2048
    fp_radius: int = 2
    # decoder
    dec_d_h: int = 32
    dec_d_e: int = 16
    dec_d_c: int = 32
    dec_d_t: int = 16
    dec_heads_node_edge: int = 4
    dec_heads_many_body: int = 2
    dec_layers: int = 2
    dec_ffn_hidden: int = 32
    many_body: bool = True
    # optimisation
    batch_size: int = 8
    lr: float = 1e-3
    lr_decay: bool = False
    steps_encoder: int = 2000
    steps_decoder: int = 2000
    steps_finetune: int = 2000
    freeze_encoder: bool = False
    n_max: int = 40
    log_every: int = 100
    # evaluation
    n_samples: int = 100
    mces_budget: int = 200_000

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(d=self.enc_d, heads=self.enc_heads, layers=self.enc_layers, fp_length=self.fp_length)

    def decoder_config(self) -> DecoderConfig:
        return DecoderConfig(
            d_h=self.dec_d_h,
            d_e=self.dec_d_e,
            d_y=self.enc_d,
            d_c=self.dec_d_c,
            d_t=self.dec_d_t,
            heads_node_edge=self.dec_heads_node_edge,
            heads_many_body=self.dec_heads_many_body,
            layers=self.dec_layers,
            ffn_hidden=self.dec_ffn_hidden,
            many_body=self.many_body,
            fp_length=self.fp_length,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)


def _coerce(kind, text: str, line: int):
    if kind in (bool, "bool"):
        low = text.lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise ConfigError(f"expected a boolean, got {text!r}", line)
    try:
        if kind in (int, "int"):
            return int(text.replace("_", ""))
        if kind in (float, "float"):
            return float(text)
    except ValueError:
        raise ConfigError(f"expected {kind}, got {text!r}", line) from None
    return text


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    types = {f.name: f.type for f in fields(RunConfig)}
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        if key not in types:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        values[key] = _coerce(types[key], value, lineno)
    return dataclasses.replace(base or RunConfig(), **values)


def load_config(path) -> RunConfig:
    path = Path(path)
    cfg = parse_config_text(path.read_text())
    # relative data/work paths resolve against the config file's directory
    fix = {}
    for key in ("graphs", "spectra", "workdir"):
        val = getattr(cfg, key)
        if val and not Path(val).is_absolute():
            fix[key] = str((path.parent / val).resolve())
    return cfg.replace(**fix)


def format_config(cfg: RunConfig) -> str:
    return "".join(f"{k} = {str(v).lower() if isinstance(v, bool) else v}\n" for k, v in cfg.to_dict().items())
