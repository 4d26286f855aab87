"""Flat binary container: one JSON header line + raw float64 arrays.

Layout: magic, newline-terminated JSON ({"header": ..., "arrays": [[name,
shape], ...]}), then each array's C-order float64 little-endian bytes in
manifest order. Round-trips bit-exactly.
"""

from __future__ import annotations

import json

import numpy as np

MAGIC = b"RCASTBLOB1\n"


def write_blob(path, header: dict, arrays: dict) -> None:
    manifest = [[name, list(np.asarray(a).shape)] for name, a in arrays.items()]
    meta = json.dumps({"header": header, "arrays": manifest}).encode() + b"\n"
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(meta)
        for name, _ in manifest:
            a = np.ascontiguousarray(np.asarray(arrays[name], dtype=np.float64))
            fh.write(a.astype("<f8", copy=False).tobytes())


def read_blob(path) -> tuple[dict, dict]:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path}: not a reservoircast blob")
        meta = json.loads(fh.readline().decode())
        arrays = {}
        for name, shape in meta["arrays"]:
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise ValueError(f"{path}: truncated array {name!r}")
            arrays[name] = np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(shape)
    return meta["header"], arrays
