"""Binary model checkpoints.

Layout (little endian)::

    b"ASDM"  u16 version  u32 config_len  config JSON (utf-8)
    u32 param_count
    per parameter: u16 name_len, name bytes, u8 rank, u32 dim * rank, f64 payload
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import DataError
from .model import FusionModel, ModelConfig

MAGIC = b"ASDM"
VERSION = 1


def save_checkpoint(model: FusionModel, path):
    cfg = json.dumps(model.config.to_dict(), sort_keys=True).encode()
    chunks = [MAGIC, struct.pack("<HI", VERSION, len(cfg)), cfg]
    params = model.params()
    chunks.append(struct.pack("<I", len(params)))
    for p in params:
        name = p.name.encode()
        chunks.append(struct.pack("<H", len(name)) + name)
        chunks.append(struct.pack("<B", p.value.ndim) + struct.pack(f"<{p.value.ndim}I", *p.value.shape))
        chunks.append(np.ascontiguousarray(p.value, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def _take(buf, pos, n, path):
    if pos + n > len(buf):
        raise DataError(f"{path}: truncated checkpoint")
    return buf[pos:pos + n], pos + n


def load_checkpoint(path) -> FusionModel:
    buf = Path(path).read_bytes()
    head, pos = _take(buf, 0, 4, path)
    if head != MAGIC:
        raise DataError(f"{path}: not a model checkpoint")
    raw, pos = _take(buf, pos, 6, path)
    version, cfg_len = struct.unpack("<HI", raw)
    if version != VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    raw, pos = _take(buf, pos, cfg_len, path)
    model = FusionModel(ModelConfig(**json.loads(raw)))
    by_name = {p.name: p for p in model.params()}
    raw, pos = _take(buf, pos, 4, path)
    (count,) = struct.unpack("<I", raw)
    if count != len(by_name):
        raise DataError(f"{path}: {count} parameters stored, model has {len(by_name)}")
    for _ in range(count):
        raw, pos = _take(buf, pos, 2, path)
        (nlen,) = struct.unpack("<H", raw)
        raw, pos = _take(buf, pos, nlen, path)
        name = raw.decode()
        raw, pos = _take(buf, pos, 1, path)
        (rank,) = struct.unpack("<B", raw)
        raw, pos = _take(buf, pos, 4 * rank, path)
        shape = struct.unpack(f"<{rank}I", raw)
        raw, pos = _take(buf, pos, 8 * int(np.prod(shape, dtype=np.int64)), path)
        if name not in by_name or by_name[name].value.shape != tuple(shape):
            raise DataError(f"{path}: parameter {name!r} {shape} does not fit the model")
        by_name[name].value[...] = np.frombuffer(raw, dtype="<f8").reshape(shape)
    return model
