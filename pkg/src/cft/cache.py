"""Binary feature cache: precomputed backbone features, one row per sample.

File layout (little-endian)::

    magic   4s   b"CFTC"
    version u32  1
    n       u64  number of samples
    z       u32  feature dimension
    data    n*z float32, row-major
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from cft.errors import CorruptionError, FormatError, ParameterError, ValidationError

MAGIC = b"CFTC"
VERSION = 1
_HEADER = struct.Struct("<4sIQI")
HEADER_SIZE = _HEADER.size  # 20


@dataclass(frozen=True)
class FeatureCache:
    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim != 2:
            raise ParameterError(f"feature cache must be 2-D, got shape {d.shape}")
        d = np.ascontiguousarray(d, dtype=np.float32)
        if d is self.data:
            d = d.copy()
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def dim_z(self) -> int:
        return self.data.shape[1]


def save_cache(cache: FeatureCache, path) -> None:
    path = Path(path)
    header = _HEADER.pack(MAGIC, VERSION, cache.n_samples, cache.dim_z)
    try:
        with path.open("wb") as f:
            f.write(header)
            f.write(cache.data.astype("<f4", copy=False).tobytes(order="C"))
    except OSError as e:
        raise OSError(f"cannot write feature cache {path}: {e.strerror or e}") from e


def load_cache(path) -> FeatureCache:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise OSError(f"cannot read feature cache {path}: {e.strerror or e}") from e
    if len(raw) < HEADER_SIZE:
        raise CorruptionError(f"{path}: {len(raw)} bytes is shorter than the {HEADER_SIZE}-byte header")
    magic, version, n, z = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expected = HEADER_SIZE + n * z * 4
    if len(raw) != expected:
        raise CorruptionError(f"{path}: header declares {n}x{z} ({expected} bytes), file has {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", offset=HEADER_SIZE).reshape(n, z)
    bad = ~np.isfinite(data)
    if bad.any():
        row, col = (int(i) for i in np.argwhere(bad)[0])
        raise ValidationError(f"{path}: non-finite feature at ({row}, {col})")
    return FeatureCache(data.astype(np.float32))


def gather(cache: FeatureCache, indices) -> np.ndarray:
    """Rows of ``cache`` in the order given, as a float64 matrix."""
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= cache.n_samples):
        bad = idx[(idx < 0) | (idx >= cache.n_samples)][0]
        raise ParameterError(f"sample index {bad} out of range [0, {cache.n_samples})")
    return cache.data[idx].astype(np.float64)
