"""Binary checkpoint container.

Layout (all integers little-endian)::

    b"PANW"  u32 version
    u32 len  config JSON (utf-8)
    u32 count
    count x [u32 name_len, name (utf-8), u32 ndim, ndim x u64 dims, f64 data...]

The config JSON holds the model config plus the encoder cardinalities, so a
checkpoint alone is enough to rebuild the model.
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .model import Model, ModelConfig

MAGIC = b"PANW"
VERSION = 1


def _pack_str(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack("<I", len(b)) + b


def dumps(model: Model) -> bytes:
    meta = {
        "config": model.config.to_dict(),
        "node_cardinalities": model.node_cardinalities,
        "edge_cardinalities": model.edge_cardinalities,
    }
    state = model.state_dict()
    buf = io.BytesIO()
    buf.write(MAGIC + struct.pack("<I", VERSION))
    buf.write(_pack_str(json.dumps(meta, sort_keys=True)))
    buf.write(struct.pack("<I", len(state)))
    for name, arr in state.items():
        arr = np.asarray(arr, dtype="<f8")
        buf.write(_pack_str(name))
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(arr.tobytes())
    return buf.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("checkpoint truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self) -> str:
        (n,) = self.unpack("<I")
        return self.take(n).decode("utf-8")


def loads(data: bytes) -> Model:
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise CheckpointError("not a PANW checkpoint")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        meta = json.loads(r.string())
        config = ModelConfig.from_dict(meta["config"])
    except (ValueError, KeyError) as exc:
        raise CheckpointError(f"bad config block: {exc}") from exc
    (count,) = r.unpack("<I")
    state = {}
    for _ in range(count):
        name = r.string()
        (ndim,) = r.unpack("<I")
        shape = r.unpack(f"<{ndim}Q") if ndim else ()
        n = int(np.prod(shape)) if ndim else 1
        state[name] = np.frombuffer(r.take(8 * n), dtype="<f8").reshape(shape).astype(np.float64)
    if r.pos != len(data):
        raise CheckpointError("trailing bytes after the last block")
    model = Model(config, meta["node_cardinalities"], meta["edge_cardinalities"])
    try:
        model.load_state_dict(state)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(str(exc)) from exc
    return model


def save(model: Model, path) -> None:
    Path(path).write_bytes(dumps(model))


def load(path) -> Model:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read {path}: {exc}") from exc
    return loads(data)
