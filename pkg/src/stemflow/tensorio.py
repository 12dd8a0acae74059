"""Named-tensor container: JSON header + raw little-endian float32 blocks.

Layout: magic "SFCK", uint32 format version, uint32 header length, UTF-8 JSON
header {"meta": ..., "tensors": {name: {"shape": [...], "offset": n}}}, then
the concatenated tensor data.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"SFCK"
VERSION = 1


def save_tensors(path: str | Path, tensors: dict[str, np.ndarray], meta: dict) -> None:
    """Atomic write (temp file + rename) of tensors and JSON metadata."""
    index: dict[str, dict] = {}
    blobs: list[bytes] = []
    offset = 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        index[name] = {"shape": list(arr.shape), "offset": offset}
        blob = arr.tobytes()
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"meta": meta, "tensors": index}, sort_keys=True).encode()

    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(np.array([VERSION, len(header)], dtype="<u4").tobytes())
            fh.write(header)
            for blob in blobs:
                fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_tensors(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a tensor container")
    version, header_len = np.frombuffer(raw[4:12], dtype="<u4")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported container version {version}")
    header = json.loads(raw[12 : 12 + header_len].decode())
    base = 12 + int(header_len)
    tensors = {}
    for name, entry in header["tensors"].items():
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = base + entry["offset"]
        tensors[name] = (
            np.frombuffer(raw[start : start + 4 * count], dtype="<f4").reshape(shape).copy()
        )
    return tensors, header["meta"]
