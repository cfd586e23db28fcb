"""Binary parameter checkpoints.

Layout: magic ``CGRD0001``, then one record per tensor until end of file:
u64 name length, UTF-8 name, u64 rank, rank x u64 extents, float64 data.
All integers and floats are little-endian.
"""
from __future__ import annotations

import math
from pathlib import Path
from typing import Union

import numpy as np

from engine.model.network import ModelParams
from engine.utils.io import ensure_parent

MAGIC = b"CGRD0001"
_U64 = np.dtype("<u8")
_F64 = np.dtype("<f8")

PathLike = Union[str, Path]


class CheckpointFormatError(ValueError):
    """Raised when a checkpoint file is truncated or malformed."""


def encode_params(params: ModelParams) -> bytes:
    chunks = [MAGIC]
    for name, arr in params.tensors.items():
        encoded = name.encode("utf-8")
        chunks.append(np.array([len(encoded)], dtype=_U64).tobytes())
        chunks.append(encoded)
        chunks.append(np.array([arr.ndim, *arr.shape], dtype=_U64).tobytes())
        chunks.append(np.ascontiguousarray(arr, dtype=_F64).tobytes())
    return b"".join(chunks)


class _Reader:
    def __init__(self, payload: bytes) -> None:
        self.payload = payload
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        end = self.offset + size
        if end > len(self.payload):
            raise CheckpointFormatError(f"truncated while reading {what} at byte {self.offset}")
        chunk = self.payload[self.offset : end]
        self.offset = end
        return chunk

    def u64(self, count: int, what: str) -> np.ndarray:
        return np.frombuffer(self.take(8 * count, what), dtype=_U64)

    @property
    def done(self) -> bool:
        return self.offset >= len(self.payload)


def decode_params(payload: bytes) -> ModelParams:
    reader = _Reader(payload)
    if reader.take(len(MAGIC), "magic") != MAGIC:
        raise CheckpointFormatError("bad magic; not a CGRD0001 checkpoint")
    tensors = {}
    index = 0
    while not reader.done:
        label = f"tensor {index}"
        name_len = int(reader.u64(1, f"{label} name length")[0])
        if name_len > len(payload):
            raise CheckpointFormatError(f"{label}: name length {name_len} exceeds file size")
        try:
            name = reader.take(name_len, f"{label} name").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointFormatError(f"{label}: name is not valid UTF-8") from exc
        label = f"tensor {index} ('{name}')"
        rank = int(reader.u64(1, f"{label} rank")[0])
        if rank > 8:
            raise CheckpointFormatError(f"{label}: implausible rank {rank}")
        extents = tuple(int(e) for e in reader.u64(rank, f"{label} extents"))
        # Python ints: a u64 product must not wrap before the size check.
        count = math.prod(extents)
        if count * 8 > len(payload) - reader.offset:
            raise CheckpointFormatError(f"{label}: extents {extents} exceed file size")
        data = np.frombuffer(reader.take(8 * count, f"{label} data"), dtype=_F64)
        if name in tensors:
            raise CheckpointFormatError(f"{label}: duplicate tensor name")
        tensors[name] = data.astype(float).reshape(extents)
        index += 1
    return ModelParams(tensors)


def save_checkpoint(params: ModelParams, path: PathLike) -> Path:
    target = ensure_parent(path)
    target.write_bytes(encode_params(params))
    return target


def load_checkpoint(path: PathLike) -> ModelParams:
    source = Path(path)
    if not source.exists():
        raise CheckpointFormatError(f"checkpoint not found: {source}")
    return decode_params(source.read_bytes())
