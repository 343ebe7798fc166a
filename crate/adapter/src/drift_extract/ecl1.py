"""Reader and writer for ECL1 embedding-cloud files."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"ECL1"
VERSION = 1
_HEADER = struct.Struct("<4sHHQIH")


@dataclass
class Cloud:
    layer_index: int
    model_tag: str
    sample_ids: list[str]
    vectors: np.ndarray


def layer_file_name(layer: int) -> str:
    return f"layer_{layer:02d}.ecl1"


def encode(cloud: Cloud) -> bytes:
    vectors = np.ascontiguousarray(cloud.vectors, dtype="<f4")
    if vectors.ndim != 2:
        raise ValueError(f"vectors must be 2-D, got shape {vectors.shape}")
    n, d = vectors.shape
    if n == 0 or d == 0:
        raise ValueError(f"empty cloud ({n}x{d})")
    if len(cloud.sample_ids) != n:
        raise ValueError(f"{len(cloud.sample_ids)} sample ids for {n} rows")
    if len(set(cloud.sample_ids)) != n:
        raise ValueError("duplicate sample ids")
    if not np.isfinite(vectors).all():
        raise ValueError("non-finite embedding value")
    tag = cloud.model_tag.encode("utf-8")
    parts = [_HEADER.pack(MAGIC, VERSION, cloud.layer_index, n, d, len(tag)), tag, vectors.tobytes()]
    for sid in cloud.sample_ids:
        raw = sid.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
    return b"".join(parts)


def decode(data: bytes) -> Cloud:
    if len(data) < _HEADER.size:
        raise ValueError(f"truncated header: {len(data)} bytes")
    magic, version, layer, n, d, tag_len = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"unsupported version {version}")
    pos = _HEADER.size
    tag = data[pos : pos + tag_len].decode("utf-8")
    pos += tag_len
    size = n * d * 4
    if len(data) < pos + size:
        raise ValueError("truncated vector block")
    vectors = np.frombuffer(data, dtype="<f4", count=n * d, offset=pos).reshape(n, d).copy()
    pos += size
    ids = []
    for _ in range(n):
        (length,) = struct.unpack_from("<H", data, pos)
        pos += 2
        ids.append(data[pos : pos + length].decode("utf-8"))
        pos += length
    if pos != len(data):
        raise ValueError(f"{len(data) - pos} trailing bytes")
    return Cloud(layer, tag, ids, vectors)


def write(cloud: Cloud, path: str | Path) -> None:
    Path(path).write_bytes(encode(cloud))


def read(path: str | Path) -> Cloud:
    return decode(Path(path).read_bytes())
