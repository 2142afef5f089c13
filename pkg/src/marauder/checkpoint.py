"""Binary checkpoint format.

Layout (all integers u32 little-endian)::

    b"MARA" | version | len(config) | config UTF-8 |
    { len(name) | name | rank | dims[rank] | float32 LE payload }*

Records run to end of file.
"""

from __future__ import annotations

import io
import struct
from collections import OrderedDict
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"MARA"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _u32(n: int) -> bytes:
    return struct.pack("<I", n)


def dumps(config_text: str, params: Mapping[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(_u32(VERSION))
    cfg = config_text.encode("utf-8")
    buf.write(_u32(len(cfg)))
    buf.write(cfg)
    for name, arr in params.items():
        arr = np.asarray(getattr(arr, "data", arr))
        nb = name.encode("utf-8")
        buf.write(_u32(len(nb)))
        buf.write(nb)
        buf.write(_u32(arr.ndim))
        for d in arr.shape:
            buf.write(_u32(d))
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return buf.getvalue()


def loads(blob: bytes) -> tuple[str, "OrderedDict[str, np.ndarray]"]:
    view = memoryview(blob)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointError("truncated checkpoint")
        out = view[pos:pos + n]
        pos += n
        return out

    def u32() -> int:
        return struct.unpack("<I", take(4))[0]

    if bytes(take(4)) != MAGIC:
        raise CheckpointError("bad magic bytes; not a checkpoint")
    version = u32()
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    config_text = bytes(take(u32())).decode("utf-8")
    params: "OrderedDict[str, np.ndarray]" = OrderedDict()
    while pos < len(view):
        name = bytes(take(u32())).decode("utf-8")
        dims = tuple(u32() for _ in range(u32()))
        n = int(np.prod(dims, dtype=np.int64))
        params[name] = np.frombuffer(bytes(take(4 * n)), dtype="<f4").reshape(dims).astype(np.float32)
    return config_text, params


def save(path: str | Path, config_text: str, params: Mapping[str, np.ndarray]) -> None:
    Path(path).write_bytes(dumps(config_text, params))


def load(path: str | Path) -> tuple[str, "OrderedDict[str, np.ndarray]"]:
    return loads(Path(path).read_bytes())
