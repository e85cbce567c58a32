"""Binary checkpoint format.

Layout (all integers little-endian)::

    8 bytes   magic  b"VSPHCKPT"
    u32       format version (1)
    u32       length L of the config block
    L bytes   UTF-8 JSON {"model": ModelConfig fields, "meta": {...}},
              keys sorted, no whitespace
    u32       number of parameter arrays
    ...       each parameter as little-endian float64, row-major, in the
              order given by ``model.parameter_specs``

Saving a loaded checkpoint reproduces the file byte for byte.
"""

import json
import struct
from pathlib import Path
from typing import Tuple

import numpy as np

from .errors import FormatError
from .model import Model, ModelConfig, parameter_specs

MAGIC = b"VSPHCKPT"
VERSION = 1

__all__ = ["MAGIC", "VERSION", "dumps", "loads", "save", "load"]


def dumps(model: Model, meta: dict = None) -> bytes:
    block = json.dumps(
        {"model": model.cfg.to_dict(), "meta": meta or {}},
        sort_keys=True, separators=(",", ":"),
    ).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(block)), block]
    parts.append(struct.pack("<I", len(model.params)))
    for arr in model.params.values():
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(parts)


def loads(data: bytes) -> Tuple[Model, dict]:
    if data[:8] != MAGIC:
        raise FormatError("not a checkpoint file (bad magic)")
    try:
        version, block_len = struct.unpack_from("<II", data, 8)
        if version != VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        offset = 16
        header = json.loads(data[offset:offset + block_len].decode("utf-8"))
        offset += block_len
        (count,) = struct.unpack_from("<I", data, offset)
        offset += 4
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt checkpoint header: {exc}") from exc
    cfg = ModelConfig.from_dict(header["model"])
    specs = parameter_specs(cfg)
    if count != len(specs):
        raise FormatError(f"expected {len(specs)} parameters, file has {count}")
    params = {}
    for name, shape, _ in specs:
        size = int(np.prod(shape)) * 8
        if offset + size > len(data):
            raise FormatError(f"truncated checkpoint while reading {name}")
        params[name] = np.frombuffer(data, dtype="<f8", count=size // 8, offset=offset).astype(
            np.float64
        ).reshape(shape)
        offset += size
    if offset != len(data):
        raise FormatError(f"{len(data) - offset} trailing bytes in checkpoint")
    return Model(cfg, params), header["meta"]


def save(path, model: Model, meta: dict = None) -> None:
    Path(path).write_bytes(dumps(model, meta))


def load(path) -> Tuple[Model, dict]:
    return loads(Path(path).read_bytes())
