"""Binary checkpoint format.

Layout::

    b"DSCKPT01"                  8-byte magic
    uint64 little-endian         length of the JSON header in bytes
    JSON header (UTF-8)          config, epoch, seed, manifest, extra metadata
    body                         little-endian float32 values in manifest order

Each manifest entry is ``{"name", "kind", "shape", "offset", "count"}`` where
``kind`` is ``"parameter"`` or ``"buffer"`` (batch-norm running statistics)
and ``offset`` counts float32 elements from the start of the body.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import DataError
from .config import ModelConfig
from .fusion import FusionModel

MAGIC = b"DSCKPT01"


def _entries(model: FusionModel):
    for name, p in model.named_parameters():
        yield name, "parameter", p.data
    for name, arr, _, _ in model.named_buffers():
        yield name, "buffer", arr


def checkpoint_bytes(model: FusionModel, extra: Optional[dict] = None) -> bytes:
    manifest, chunks, offset = [], [], 0
    for name, kind, arr in _entries(model):
        manifest.append({"name": name, "kind": kind, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        offset += arr.size
    header = {
        "format": "dualstream-checkpoint/1",
        "config": model.config.to_dict(),
        "epoch": model.epochs_completed,
        "seed": model.config.seed,
        "manifest": manifest,
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    return MAGIC + struct.pack("<Q", len(blob)) + blob + b"".join(chunks)


def save_checkpoint(model: FusionModel, path, extra: Optional[dict] = None) -> None:
    Path(path).write_bytes(checkpoint_bytes(model, extra))


def read_header(path) -> tuple[dict, bytes]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise DataError(f"{path}: not a dualstream checkpoint")
    (n,) = struct.unpack("<Q", raw[8:16])
    try:
        header = json.loads(raw[16:16 + n])
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: corrupt header ({exc})") from None
    return header, raw[16 + n:]


def load_checkpoint(path) -> tuple[FusionModel, dict]:
    """Rebuild the model from its stored config and fill in the stored values."""
    header, body = read_header(path)
    model = FusionModel(ModelConfig.from_dict(header["config"]))
    values = np.frombuffer(body, dtype="<f4")
    by_name = {e["name"]: e for e in header["manifest"]}
    params = dict(model.named_parameters())
    buffers = {name: (owner, attr) for name, _, owner, attr in model.named_buffers()}
    if set(by_name) != set(params) | set(buffers):
        raise DataError(f"{path}: manifest does not match the model built from its config")
    for name, e in by_name.items():
        arr = values[e["offset"]:e["offset"] + e["count"]].reshape(e["shape"]).astype(np.float32)
        if name in params:
            params[name].data = arr
        else:
            owner, attr = buffers[name]
            setattr(owner, attr, arr)
    model.epochs_completed = int(header["epoch"])
    model.eval()
    return model, header
