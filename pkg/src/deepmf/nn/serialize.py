"""Flat binary parameter container.

Layout (documented contract, format version 1):

    bytes 0..3   magic b"DMF\\x01"
    bytes 4..7   little-endian uint32: length in bytes of the JSON header
    header       UTF-8 JSON (at least: format_version, arrays = list of
                 {name, shape}, plus caller metadata such as layer strides
                 and the training seed)
    payload      the arrays' values as little-endian float64, concatenated
                 in the header's declaration order, C order within each
                 array
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

MAGIC = b"DMF\x01"
FORMAT_VERSION = 1


def save_arrays(path, arrays: dict[str, np.ndarray], metadata: dict | None = None) -> None:
    """Write named float64 arrays plus JSON metadata; order is preserved."""
    header = {
        "format_version": FORMAT_VERSION,
        "arrays": [{"name": k, "shape": list(v.shape)} for k, v in arrays.items()],
        "metadata": metadata or {},
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(np.uint32(len(hbytes)).astype("<u4").tobytes())
        f.write(hbytes)
        for v in arrays.values():
            f.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_arrays(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read back (arrays, metadata); inverse of :func:`save_arrays`."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a parameter container (bad magic)")
    hlen = int(np.frombuffer(raw[4:8], dtype="<u4")[0])
    header = json.loads(raw[8 : 8 + hlen].decode("utf-8"))
    if header["format_version"] != FORMAT_VERSION:
        raise ValueError(f"unsupported format version {header['format_version']}")
    arrays: dict[str, np.ndarray] = {}
    offset = 8 + hlen
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        vals = np.frombuffer(raw, dtype="<f8", count=n, offset=offset)
        arrays[entry["name"]] = vals.reshape(shape).astype(np.float64)
        offset += 8 * n
    if offset != len(raw):
        raise ValueError(f"{path}: trailing bytes after payload")
    return arrays, header["metadata"]
