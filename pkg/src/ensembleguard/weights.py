"""Deterministic binary weight files.

A text header followed by the raw little-endian float64 bytes of each array
in header order::

    ensembleguard-weights v1
    key = value
    ...
    array <name> <dim1> <dim2> ...
    ...
    end
    <bytes>

Unlike zip-based formats there are no timestamps, so equal weights always
produce equal files.
"""
from __future__ import annotations

import numpy as np

MAGIC = b"ensembleguard-weights v1\n"


def dumps_arrays(header: dict, arrays: dict) -> bytes:
    lines = [f"{k} = {v}" for k, v in header.items()]
    for name, a in arrays.items():
        dims = " ".join(str(d) for d in np.shape(a))
        lines.append(f"array {name} {dims}".rstrip())
    lines.append("end")
    head = MAGIC + ("\n".join(lines) + "\n").encode("utf-8")
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays.values())
    return head + body


def loads_arrays(data: bytes) -> tuple[dict, dict]:
    if not data.startswith(MAGIC):
        raise ValueError("not an ensembleguard weights file")
    pos = len(MAGIC)
    header, shapes = {}, []
    while True:
        nl = data.index(b"\n", pos)
        line = data[pos:nl].decode("utf-8")
        pos = nl + 1
        if line == "end":
            break
        if line.startswith("array "):
            parts = line.split()
            shapes.append((parts[1], tuple(int(d) for d in parts[2:])))
        else:
            key, _, value = line.partition(" = ")
            header[key] = value
    arrays = {}
    for name, shape in shapes:
        count = int(np.prod(shape, dtype=np.int64))
        arrays[name] = np.frombuffer(data, dtype="<f8", count=count, offset=pos).astype(np.float64).reshape(shape)
        pos += 8 * count
    if pos != len(data):
        raise ValueError("weights file has trailing bytes")
    return header, arrays


def save_arrays(path, header: dict, arrays: dict) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps_arrays(header, arrays))


def load_arrays(path) -> tuple[dict, dict]:
    with open(path, "rb") as fh:
        return loads_arrays(fh.read())
