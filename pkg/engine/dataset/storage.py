"""On-disk dataset layout.

One binary file per split (``<split>.bin``) plus ``manifest.json``.
Split file: magic ``GRIDSP01``; u64 k, p, sample count; then per sample the
image as float32, true weights as float64, mask as one byte per cell and the
optimal cost as float64. Everything is little-endian.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Tuple, Union

import numpy as np

from engine.dataset.generator import SPLITS, Sample, TerrainPalette
from engine.utils.io import ensure_parent, read_json, write_json

MAGIC = b"GRIDSP01"
FORMAT_VERSION = 1
HEADER_BYTES = len(MAGIC) + 3 * 8
MANIFEST_NAME = "manifest.json"

_U64 = np.dtype("<u8")
_F32 = np.dtype("<f4")
_F64 = np.dtype("<f8")

PathLike = Union[str, Path]


class DatasetFormatError(ValueError):
    """Raised when a dataset directory or split file is missing, truncated or malformed."""


@dataclass
class DatasetManifest:
    seed: int
    k: int
    p: int
    palette: TerrainPalette
    counts: Dict[str, int]
    version: int = FORMAT_VERSION
    files: Dict[str, Mapping] = field(default_factory=dict)

    def to_dict(self) -> Mapping:
        return {
            "version": self.version,
            "seed": self.seed,
            "k": self.k,
            "p": self.p,
            "palette": self.palette.to_dict(),
            "counts": dict(self.counts),
            "files": self.files,
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "DatasetManifest":
        try:
            return cls(
                seed=int(payload["seed"]),
                k=int(payload["k"]),
                p=int(payload["p"]),
                palette=TerrainPalette.from_dict(payload["palette"]),
                counts={str(s): int(c) for s, c in payload["counts"].items()},
                version=int(payload.get("version", FORMAT_VERSION)),
                files=dict(payload.get("files", {})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetFormatError(f"manifest is malformed: {exc}") from exc


def record_bytes(k: int, p: int) -> int:
    side = k * p
    return side * side * 3 * 4 + k * k * 8 + k * k + 8


def encode_split(samples: List[Sample], k: int, p: int) -> bytes:
    chunks = [MAGIC, np.array([k, p, len(samples)], dtype=_U64).tobytes()]
    for sample in samples:
        chunks.append(np.ascontiguousarray(sample.image, dtype=_F32).tobytes())
        chunks.append(np.ascontiguousarray(sample.true_weights, dtype=_F64).tobytes())
        chunks.append(np.ascontiguousarray(sample.true_mask, dtype=np.uint8).tobytes())
        chunks.append(np.array([sample.optimal_cost], dtype=_F64).tobytes())
    return b"".join(chunks)


def decode_split(payload: bytes, label: str = "split") -> Tuple[int, int, List[Sample]]:
    if len(payload) < HEADER_BYTES:
        raise DatasetFormatError(f"{label}: truncated header ({len(payload)} bytes)")
    if payload[: len(MAGIC)] != MAGIC:
        raise DatasetFormatError(f"{label}: bad magic; not a GRIDSP01 split file")
    k, p, count = (int(v) for v in np.frombuffer(payload[len(MAGIC) : HEADER_BYTES], dtype=_U64))
    if k < 1 or p < 1:
        raise DatasetFormatError(f"{label}: invalid extents k={k}, p={p}")
    size = record_bytes(k, p)
    expected = HEADER_BYTES + size * count
    if len(payload) != expected:
        missing = (len(payload) - HEADER_BYTES) // size
        raise DatasetFormatError(
            f"{label}: expected {count} samples ({expected} bytes), found {len(payload)} bytes; "
            f"sample {missing} is incomplete or extra data follows"
        )

    side = k * p
    image_len = side * side * 3 * 4
    weights_len = k * k * 8
    samples: List[Sample] = []
    offset = HEADER_BYTES
    for index in range(count):
        image = np.frombuffer(payload, dtype=_F32, count=side * side * 3, offset=offset).reshape(side, side, 3)
        offset += image_len
        weights = np.frombuffer(payload, dtype=_F64, count=k * k, offset=offset).reshape(k, k)
        offset += weights_len
        mask = np.frombuffer(payload, dtype=np.uint8, count=k * k, offset=offset).reshape(k, k)
        offset += k * k
        cost = float(np.frombuffer(payload, dtype=_F64, count=1, offset=offset)[0])
        offset += 8
        if not np.isin(mask, (0, 1)).all():
            raise DatasetFormatError(f"{label}: sample {index} mask holds values other than 0/1")
        samples.append(
            Sample(
                image=image.astype(np.float32),
                true_weights=weights.astype(float),
                true_mask=mask.copy(),
                optimal_cost=cost,
            )
        )
    return k, p, samples


def write_dataset(samples: Mapping[str, List[Sample]], manifest: DatasetManifest, directory: PathLike) -> Path:
    root = Path(directory)
    files: Dict[str, Mapping] = {}
    for split in SPLITS:
        split_samples = samples.get(split, [])
        target = ensure_parent(root / f"{split}.bin")
        target.write_bytes(encode_split(split_samples, manifest.k, manifest.p))
        files[split] = {
            "file": target.name,
            "header_bytes": HEADER_BYTES,
            "record_bytes": record_bytes(manifest.k, manifest.p),
            "count": len(split_samples),
        }
    manifest.files = files
    manifest.counts = {split: len(samples.get(split, [])) for split in SPLITS}
    write_json(root / MANIFEST_NAME, manifest.to_dict())
    return root


def read_manifest(directory: PathLike) -> DatasetManifest:
    path = Path(directory) / MANIFEST_NAME
    if not path.exists():
        raise DatasetFormatError(f"no manifest at {path}")
    try:
        payload = read_json(path)
    except ValueError as exc:
        raise DatasetFormatError(f"manifest at {path} is not valid JSON: {exc}") from exc
    return DatasetManifest.from_dict(payload)


def read_split(directory: PathLike, split: str, manifest: DatasetManifest | None = None) -> List[Sample]:
    manifest = manifest or read_manifest(directory)
    path = Path(directory) / f"{split}.bin"
    if not path.exists():
        raise DatasetFormatError(f"missing split file {path}")
    k, p, samples = decode_split(path.read_bytes(), label=path.name)
    if (k, p) != (manifest.k, manifest.p):
        raise DatasetFormatError(f"{path.name}: extents k={k}, p={p} disagree with manifest k={manifest.k}, p={manifest.p}")
    return samples


def read_dataset(directory: PathLike) -> Tuple[Dict[str, List[Sample]], DatasetManifest]:
    manifest = read_manifest(directory)
    return {split: read_split(directory, split, manifest) for split in SPLITS}, manifest
