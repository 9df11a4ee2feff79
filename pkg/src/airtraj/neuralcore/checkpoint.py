"""Byte-exact parameter checkpoints.

Layout of a checkpoint file:

    line 1: ``PCKPT1`` (format version)
    line 2: one-line JSON manifest with sorted keys:
            {"format": "PCKPT1", "hyperparameters": {...}, "seed": ...,
             "tensors": [{"name": ..., "offset": ..., "shape": [...]}, ...]}
    rest:   flat little-endian float64 blob; each tensor's data starts at
            its byte ``offset`` into the blob, in C order

Tensor entries are sorted by name, so identical parameters always produce
identical bytes.
"""

from __future__ import annotations

import json
from typing import Mapping

import numpy as np

from .tensor import Tensor

MAGIC = b"PCKPT1"


def save_checkpoint(
    path: str,
    tensors: Mapping[str, Tensor | np.ndarray],
    seed: int,
    hyperparameters: dict | None = None,
) -> None:
    entries = []
    blobs = []
    offset = 0
    for name in sorted(tensors):
        arr = tensors[name]
        values = arr.values if isinstance(arr, Tensor) else np.asarray(arr, dtype=np.float64)
        raw = np.ascontiguousarray(values, dtype="<f8").tobytes()
        entries.append({"name": name, "offset": offset, "shape": list(values.shape)})
        blobs.append(raw)
        offset += len(raw)
    manifest = {
        "format": "PCKPT1",
        "hyperparameters": hyperparameters or {},
        "seed": int(seed),
        "tensors": entries,
    }
    with open(path, "wb") as f:
        f.write(MAGIC + b"\n")
        f.write(json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("ascii") + b"\n")
        for raw in blobs:
            f.write(raw)


def load_checkpoint(path: str) -> tuple[dict[str, np.ndarray], int, dict]:
    """Read a checkpoint; returns (tensors, seed, hyperparameters)."""
    with open(path, "rb") as f:
        magic = f.readline().rstrip(b"\n")
        if magic != MAGIC:
            raise ValueError(f"not a PCKPT1 checkpoint: {path}")
        manifest = json.loads(f.readline().decode("ascii"))
        blob = f.read()
    if manifest.get("format") != "PCKPT1":
        raise ValueError(f"bad checkpoint manifest in {path}")
    tensors: dict[str, np.ndarray] = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        start = entry["offset"]
        end = start + 8 * count
        if end > len(blob):
            raise ValueError(f"checkpoint blob truncated for tensor {entry['name']!r}")
        tensors[entry["name"]] = np.frombuffer(blob[start:end], dtype="<f8").reshape(shape).copy()
    return tensors, int(manifest["seed"]), manifest.get("hyperparameters", {})
