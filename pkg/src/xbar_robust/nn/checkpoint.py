"""Binary checkpoint format.

Layout: magic ``XBNN``, u32 format version, u32 length + JSON header
(model name, class count, training metadata), u32 entry count, then per
state entry: u16 name length + name, u8 ndim, u32 dims, raw
little-endian float32 data. Integer state (batch counters) is stored as
float32 too; values stay far below 2**24 so the round trip is exact.
"""

from __future__ import annotations

import json
import struct

import numpy as np
import torch

from ..errors import IngestionError
from .models import ResNet, build_model

MAGIC = b"XBNN"
VERSION = 1


def save_checkpoint(path, model: ResNet, metadata: dict | None = None):
    meta = {
        "model": model.model_name,
        "num_classes": model.num_classes,
        "metadata": metadata or {},
    }
    header = json.dumps(meta, sort_keys=True).encode()
    state = model.state_dict()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        f.write(struct.pack("<I", len(state)))
        for name, tensor in state.items():
            data = tensor.detach().numpy().astype("<f4")
            enc = name.encode()
            f.write(struct.pack("<H", len(enc)))
            f.write(enc)
            f.write(struct.pack("<B", data.ndim))
            for d in data.shape:
                f.write(struct.pack("<I", d))
            f.write(data.tobytes())


def load_checkpoint(path):
    """Returns (model, metadata); the model is in eval mode."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MAGIC:
        raise IngestionError(f"bad checkpoint magic {blob[:4]!r}", offset=0)
    off = 4
    version, = struct.unpack_from("<I", blob, off); off += 4
    if version != VERSION:
        raise IngestionError(f"unsupported checkpoint version {version}", offset=4)
    hlen, = struct.unpack_from("<I", blob, off); off += 4
    meta = json.loads(blob[off:off + hlen].decode()); off += hlen
    n_entries, = struct.unpack_from("<I", blob, off); off += 4

    model = build_model(meta["model"], meta["num_classes"])
    state = {}
    ref = model.state_dict()
    for _ in range(n_entries):
        nlen, = struct.unpack_from("<H", blob, off); off += 2
        name = blob[off:off + nlen].decode(); off += nlen
        ndim, = struct.unpack_from("<B", blob, off); off += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, off); off += 4 * ndim
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=off)
        off += 4 * count
        if name not in ref:
            raise IngestionError(f"unknown state entry {name!r}", offset=off)
        state[name] = torch.from_numpy(
            arr.reshape(shape).copy()).to(ref[name].dtype)
    if off != len(blob):
        raise IngestionError(
            f"{len(blob) - off} trailing bytes after the last entry", offset=off)
    model.load_state_dict(state)
    model.eval()
    return model, meta["metadata"]
