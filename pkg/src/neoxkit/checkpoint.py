"""Versioned binary checkpoint container.

Byte layout (all integers little-endian)::

    magic        8 bytes   b"NEOXCKPT"
    version      u32       1
    header_len   u32       length of the JSON header in bytes
    header       utf-8 JSON object:
                   {"config": {<config key>: value, ...},
                    "meta":   {...free-form, e.g. step...},
                    "tensors": [{"name": str, "shape": [int, ...]}, ...]}
    tensor data  for each entry of "tensors", in order:
                   prod(shape) float64 values, row-major, little-endian ("<f8")

Config keys use the training-config spelling (``num-layers``, ``hidden-size``,
``num-attention-heads``, ``rotary-pct``, ``max-position-embeddings``,
``no-weight-tying``, ``rotary-emb-base``, ``vocab-size``, ``seed``).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .model import LMModel, ModelConfig, init_params

MAGIC = b"NEOXCKPT"
VERSION = 1


def config_to_keys(cfg: ModelConfig) -> dict:
    return {
        "num-layers": cfg.num_layers,
        "hidden-size": cfg.hidden_size,
        "num-attention-heads": cfg.num_heads,
        "vocab-size": cfg.vocab_size,
        "rotary-pct": cfg.rotary_pct,
        "max-position-embeddings": cfg.max_positions,
        "no-weight-tying": not cfg.weight_tying,
        "rotary-emb-base": cfg.rotary_base,
        "seed": cfg.seed,
    }


def config_from_keys(keys: dict) -> ModelConfig:
    return ModelConfig(
        num_layers=int(keys["num-layers"]),
        hidden_size=int(keys["hidden-size"]),
        num_heads=int(keys["num-attention-heads"]),
        vocab_size=int(keys["vocab-size"]),
        rotary_pct=float(keys["rotary-pct"]),
        max_positions=int(keys["max-position-embeddings"]),
        weight_tying=not bool(keys["no-weight-tying"]),
        rotary_base=float(keys["rotary-emb-base"]),
        seed=int(keys["seed"]),
    )


def save_checkpoint(model: LMModel, path: str | Path, meta: dict | None = None) -> None:
    params = model.parameters()
    header = {
        "config": config_to_keys(model.config),
        "meta": meta or {},
        "tensors": [{"name": n, "shape": list(a.shape)} for n, a in params.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(blob)))
        fh.write(blob)
        for arr in params.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint (bad magic)")
    version, hlen = struct.unpack_from("<II", data, 8)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(data[16:16 + hlen].decode("utf-8"))
    off = 16 + hlen
    tensors = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape, dtype=np.int64))
        end = off + 8 * n
        if end > len(data):
            raise ValueError(f"{path}: truncated tensor {entry['name']}")
        tensors[entry["name"]] = np.frombuffer(data[off:end], dtype="<f8").reshape(shape).copy()
        off = end
    if off != len(data):
        raise ValueError(f"{path}: {len(data) - off} trailing bytes")
    return header, tensors


def load_checkpoint(path: str | Path) -> tuple[LMModel, dict]:
    header, tensors = read_checkpoint(path)
    model = init_params(config_from_keys(header["config"]))
    model.load_parameters(tensors)
    return model, header.get("meta", {})
