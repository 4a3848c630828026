"""Linear classification head and its view as per-category logistic regressions.

Head file layout (little-endian)::

    magic   4s   b"CFTH"
    version u32  1
    C       u32  categories
    Z       u32  feature dimension
    W       C*Z float64, row-major
    b       C float64
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from cft.errors import CorruptionError, FormatError, ParameterError, ValidationError

MAGIC = b"CFTH"
VERSION = 1
_HEADER = struct.Struct("<4sIII")


def sigmoid(x):
    """Logistic function, branch-wise so neither side overflows."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def _readonly(a):
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LRUnit:
    weight: np.ndarray
    bias: float
    category: int

    def __post_init__(self):
        w = _readonly(self.weight)
        if w.ndim != 1 or w.size < 1:
            raise ParameterError(f"unit weight must be a non-empty vector, got shape {w.shape}")
        b = float(self.bias)
        if not (np.all(np.isfinite(w)) and np.isfinite(b)):
            raise ParameterError(f"unit {self.category} has non-finite parameters")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)
        object.__setattr__(self, "category", int(self.category))

    @property
    def dim_z(self) -> int:
        return self.weight.size

    def __eq__(self, other):
        if not isinstance(other, LRUnit):
            return NotImplemented
        return (
            self.category == other.category
            and self.weight.shape == other.weight.shape
            and self.weight.tobytes() == other.weight.tobytes()
            and np.float64(self.bias).tobytes() == np.float64(other.bias).tobytes()
        )


@dataclass(frozen=True, eq=False)
class ClassificationHead:
    weights: np.ndarray  # C x Z
    bias: np.ndarray  # C

    def __post_init__(self):
        w = _readonly(self.weights)
        b = _readonly(self.bias)
        if w.ndim != 2 or w.shape[0] < 1 or w.shape[1] < 1:
            raise ParameterError(f"weights must be C x Z with C, Z >= 1, got {w.shape}")
        if b.shape != (w.shape[0],):
            raise ParameterError(f"bias shape {b.shape} does not match {w.shape[0]} categories")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ParameterError("head parameters must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def n_categories(self) -> int:
        return self.weights.shape[0]

    @property
    def dim_z(self) -> int:
        return self.weights.shape[1]

    def __eq__(self, other):
        if not isinstance(other, ClassificationHead):
            return NotImplemented
        return (
            self.weights.shape == other.weights.shape
            and self.weights.tobytes() == other.weights.tobytes()
            and self.bias.tobytes() == other.bias.tobytes()
        )


def predict(head: ClassificationHead, z) -> np.ndarray:
    """Per-category probabilities for one feature vector (or a batch of rows)."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != head.dim_z:
        raise ParameterError(f"feature length {z.shape[-1]} != head dimension {head.dim_z}")
    return sigmoid(z @ head.weights.T + head.bias)


def predict_unit(unit: LRUnit, z) -> np.ndarray | float:
    """Probability for one vector, or a vector of probabilities for a row batch."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != unit.dim_z:
        raise ParameterError(f"feature length {z.shape[-1]} != unit dimension {unit.dim_z}")
    return sigmoid(z @ unit.weight + unit.bias)


def decompose(head: ClassificationHead) -> list[LRUnit]:
    return [LRUnit(head.weights[c], head.bias[c], c) for c in range(head.n_categories)]


def reassemble(units: list[LRUnit]) -> ClassificationHead:
    units = sorted(units, key=lambda u: u.category)
    if [u.category for u in units] != list(range(len(units))):
        raise ParameterError("units must cover categories 0..C-1 exactly once")
    return ClassificationHead(np.stack([u.weight for u in units]), np.array([u.bias for u in units]))


def replace_unit(head: ClassificationHead, unit: LRUnit) -> ClassificationHead:
    if not 0 <= unit.category < head.n_categories:
        raise ParameterError(f"unit category {unit.category} out of range [0, {head.n_categories})")
    if unit.dim_z != head.dim_z:
        raise ParameterError(f"unit dimension {unit.dim_z} != head dimension {head.dim_z}")
    w = np.array(head.weights)
    b = np.array(head.bias)
    w[unit.category] = unit.weight
    b[unit.category] = unit.bias
    return ClassificationHead(w, b)


# --- serialization ------------------------------------------------------------


def save_head(head: ClassificationHead, path) -> None:
    path = Path(path)
    with path.open("wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, head.n_categories, head.dim_z))
        f.write(head.weights.astype("<f8").tobytes(order="C"))
        f.write(head.bias.astype("<f8").tobytes())


def load_head(path) -> ClassificationHead:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise CorruptionError(f"{path}: truncated header")
    magic, version, c, z = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + 8 * (c * z + c)
    if len(raw) != expected:
        raise CorruptionError(f"{path}: header declares {c}x{z} ({expected} bytes), file has {len(raw)}")
    params = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if not np.all(np.isfinite(params)):
        raise ValidationError(f"{path}: non-finite head parameter")
    return ClassificationHead(params[: c * z].reshape(c, z), params[c * z :])


def head_to_json(head: ClassificationHead) -> str:
    return json.dumps(
        {
            "n_categories": head.n_categories,
            "dim_z": head.dim_z,
            "weights": head.weights.tolist(),
            "bias": head.bias.tolist(),
        }
    )


def head_from_json(text: str) -> ClassificationHead:
    d = json.loads(text)
    w = np.array(d["weights"], dtype=np.float64).reshape(d["n_categories"], d["dim_z"])
    return ClassificationHead(w, np.array(d["bias"], dtype=np.float64))
