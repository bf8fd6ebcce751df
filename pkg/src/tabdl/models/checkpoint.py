"""Binary checkpoint container.

Layout::

    b"TABDLCK1"                      8-byte magic
    uint64 little-endian             length H of the JSON header
    H bytes UTF-8 JSON               {"config": {...}, "meta": {...},
                                      "tensors": [{"name", "shape", "offset", "nbytes"}, ...]}
    payload                          concatenated little-endian float64 arrays

Offsets are relative to the start of the payload.  Parameters and buffers
(e.g. BatchNorm running statistics) are stored alike.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

from . import build_model, config_from_dict, config_to_dict
from ..nn import Module

MAGIC = b"TABDLCK1"


def to_bytes(model: Module, meta: dict | None = None) -> bytes:
    state = model.state_dict()
    entries, chunks, offset = [], [], 0
    for name, arr in state.items():
        raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = {
        "config": config_to_dict(model.config),
        "dtype": str(model.dtype),
        "meta": meta or {},
        "tensors": entries,
    }
    head = json.dumps(header).encode()
    return MAGIC + struct.pack("<Q", len(head)) + head + b"".join(chunks)


def save(model: Module, path, meta: dict | None = None) -> Path:
    """Write atomically; returns the final path."""
    path = Path(path)
    blob = to_bytes(model, meta)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(blob)
    os.replace(tmp, path)
    return path


def save_content_addressed(model: Module, directory, prefix: str, meta: dict | None = None) -> Path:
    """Save as ``<prefix>-<sha256[:12]>.ckpt`` inside ``directory``."""
    return write_content_addressed(to_bytes(model, meta), directory, prefix)


def write_content_addressed(blob: bytes, directory, prefix: str) -> Path:
    """Atomically write an already serialised checkpoint under its content hash."""
    digest = hashlib.sha256(blob).hexdigest()[:12]
    path = Path(directory) / f"{prefix}-{digest}.ckpt"
    tmp = path.with_suffix(".tmp")
    tmp.write_bytes(blob)
    os.replace(tmp, path)
    return path


def read(path) -> tuple[dict, dict[str, np.ndarray]]:
    blob = Path(path).read_bytes()
    if blob[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    (h,) = struct.unpack("<Q", blob[8:16])
    header = json.loads(blob[16:16 + h])
    payload = memoryview(blob)[16 + h:]
    state = {}
    for e in header["tensors"]:
        chunk = payload[e["offset"]:e["offset"] + e["nbytes"]]
        state[e["name"]] = np.frombuffer(chunk, dtype="<f8").reshape(e["shape"]).copy()
    return header, state


def load(path) -> tuple[Module, dict]:
    """Rebuild the model stored at ``path``; returns ``(model, meta)``."""
    header, state = read(path)
    model = build_model(config_from_dict(header["config"]), dtype=np.dtype(header.get("dtype", "float64")))
    model.load_state_dict(state)
    model.eval()
    return model, header["meta"]
