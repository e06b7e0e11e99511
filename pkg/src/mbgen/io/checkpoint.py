"""Self-describing binary checkpoints.

Layout::

    b"MBGENCKP"            magic
    u32 little-endian      format version
    u64 little-endian      header length H
    H bytes                UTF-8 JSON header (sorted keys): stage, config echo,
                           rng state, tensor table [{name, shape}]
    raw float64 <          tensor payloads in table order
    32 bytes               SHA-256 of everything above
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"MBGENCKP"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    stage: str
    config: dict
    tensors: dict[str, np.ndarray]
    rng_state: dict | None = None
    extra: dict = field(default_factory=dict)


def to_bytes(ckpt: Checkpoint) -> bytes:
    table = [{"name": k, "shape": list(np.shape(v))} for k, v in ckpt.tensors.items()]
    header = {
        "stage": ckpt.stage,
        "config": ckpt.config,
        "rng_state": ckpt.rng_state,
        "extra": ckpt.extra,
        "tensors": table,
    }
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    body = [MAGIC, struct.pack("<IQ", VERSION, len(hb)), hb]
    for v in ckpt.tensors.values():
        body.append(np.ascontiguousarray(v, dtype="<f8").tobytes())
    blob = b"".join(body)
    return blob + hashlib.sha256(blob).digest()


def from_bytes(blob: bytes) -> Checkpoint:
    if len(blob) < len(MAGIC) + 12 + 32 or not blob.startswith(MAGIC):
        raise CheckpointError("not a checkpoint file (bad magic or truncated)")
    payload, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(payload).digest() != digest:
        raise CheckpointError("checksum mismatch: file is truncated or corrupted")
    version, hlen = struct.unpack_from("<IQ", payload, len(MAGIC))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    off = len(MAGIC) + 12
    header = json.loads(payload[off : off + hlen])
    off += hlen
    tensors = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        end = off + 8 * count
        if end > len(payload):
            raise CheckpointError(f"tensor {entry['name']!r} runs past the end of the file")
        tensors[entry["name"]] = np.frombuffer(payload[off:end], dtype="<f8").reshape(shape).astype(np.float64)
        off = end
    if off != len(payload):
        raise CheckpointError("trailing bytes after the tensor table")
    return Checkpoint(header["stage"], header["config"], tensors, header["rng_state"], header.get("extra", {}))


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    Path(path).write_bytes(to_bytes(ckpt))


def load_checkpoint(path) -> Checkpoint:
    return from_bytes(Path(path).read_bytes())
