"""Checkpoint container.

Layout::

    b"BMRCCKPT"                      8-byte magic
    uint32 little-endian             header length in bytes
    header                           UTF-8 JSON: format version, encoder
                                     config, and per-tensor name/shape/offset
    data                             row-major float32 little-endian values

The vocabulary is stored beside it as a token-per-line text file.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .encoder import EncoderConfig, Vocabulary
from .model import BMRCModel

MAGIC = b"BMRCCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, model: BMRCModel, vocab_path=None, meta=None) -> None:
    tensors, offset = [], 0
    blobs = []
    for name in sorted(model.params):
        arr = np.ascontiguousarray(model.params[name], dtype="<f4")
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(arr.tobytes())
        offset += arr.size
    header = {
        "format": "bmrc-checkpoint",
        "version": VERSION,
        "encoder_config": model.config.to_dict(),
        "vocab_size": len(model.vocab),
        "tensors": tensors,
        "meta": meta or {},
    }
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(raw)))
        f.write(raw)
        for b in blobs:
            f.write(b)
    model.vocab.save(vocab_path or default_vocab_path(path))


def default_vocab_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".vocab.txt")


def read_checkpoint(path):
    """Return ``(header, {name: float32 array})``."""
    with open(path, "rb") as f:
        data = f.read()
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    (n,) = struct.unpack("<I", data[8:12])
    header = json.loads(data[12 : 12 + n].decode("utf-8"))
    if header.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {header.get('version')}")
    body = np.frombuffer(data, dtype="<f4", offset=12 + n)
    tensors = {}
    for t in header["tensors"]:
        size = int(np.prod(t["shape"], dtype=np.int64))
        chunk = body[t["offset"] : t["offset"] + size]
        if chunk.size != size:
            raise CheckpointError(f"{path}: tensor {t['name']} truncated")
        tensors[t["name"]] = chunk.reshape(t["shape"]).astype(np.float32)
    return header, tensors


def load_checkpoint(path, config: EncoderConfig = None, vocab_path=None) -> BMRCModel:
    """Load a model; if ``config`` is given the stored tensors must fit it."""
    header, tensors = read_checkpoint(path)
    stored = EncoderConfig(**header["encoder_config"])
    vocab = Vocabulary.load(vocab_path or default_vocab_path(path))
    if len(vocab) != header["vocab_size"]:
        raise CheckpointError(f"vocabulary has {len(vocab)} entries, checkpoint expects {header['vocab_size']}")
    config = config or stored
    if config.n_heads != stored.n_heads:
        raise CheckpointError(f"checkpoint was trained with n_heads={stored.n_heads}, config asks for {config.n_heads}")
    template = BMRCModel(config, vocab, seed=0)
    for name, ref in template.params.items():
        if name not in tensors:
            raise CheckpointError(f"checkpoint lacks tensor {name!r} required by the encoder config")
        if tensors[name].shape != ref.shape:
            raise CheckpointError(
                f"tensor {name!r} has shape {tensors[name].shape} in the checkpoint but the encoder "
                f"config expects {ref.shape}"
            )
    extra = set(tensors) - set(template.params)
    if extra:
        raise CheckpointError(f"checkpoint has tensors unknown to the encoder config: {sorted(extra)}")
    return BMRCModel(config, vocab, tensors)
