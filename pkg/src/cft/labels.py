"""Partial multi-label ground truth and the targets derived from it.

A :class:`LabelMatrix` stores one :class:`LabelValue` per (sample, category)
cell.  Training targets live in a :class:`TargetMatrix`, which keeps soft
values and a separate boolean mask so masked cells can never leak into a
loss as a magic number.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Union

import numpy as np

from cft.errors import ConfigurationError, FormatError, ParameterError


class LabelValue(enum.IntEnum):
    NEGATIVE = -1
    UNKNOWN = 0
    POSITIVE = 1
    UNCERTAIN = 2


_VALID_CODES = np.array([v.value for v in LabelValue], dtype=np.int8)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LabelMatrix:
    """N x C matrix of label codes (see :class:`LabelValue`)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2:
            raise ParameterError(f"label matrix must be 2-D, got shape {v.shape}")
        if v.size and not np.isin(v, _VALID_CODES).all():
            raise ParameterError("label matrix holds codes outside {-1, 0, 1, 2}")
        object.__setattr__(self, "values", _frozen(v.astype(np.int8)))

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_categories(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def known_mask(self) -> np.ndarray:
        return (self.values == LabelValue.POSITIVE) | (self.values == LabelValue.NEGATIVE)

    def count(self, value: LabelValue) -> int:
        return int(np.count_nonzero(self.values == value))

    def __eq__(self, other):
        if not isinstance(other, LabelMatrix):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.values, other.values))

    __hash__ = None


@dataclass(frozen=True)
class TargetMatrix:
    """Soft targets in [0, 1] plus a mask (``True`` = excluded from training)."""

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        m = np.asarray(self.mask, dtype=bool)
        if v.ndim != 2 or v.shape != m.shape:
            raise ParameterError(f"targets {v.shape} and mask {m.shape} must be equal 2-D shapes")
        live = v[~m]
        if live.size and not (np.all(live >= 0.0) and np.all(live <= 1.0)):
            raise ParameterError("unmasked targets must lie in [0, 1]")
        # masked cells carry no meaning; pin them to 0 so equality is well defined
        v = np.where(m, 0.0, v)
        object.__setattr__(self, "values", _frozen(v))
        object.__setattr__(self, "mask", _frozen(m))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def __eq__(self, other):
        if not isinstance(other, TargetMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and bool(np.array_equal(self.mask, other.mask))
            and bool(np.array_equal(self.values, other.values))
        )

    __hash__ = None


# --- uncertain-label policies -------------------------------------------------


@dataclass(frozen=True)
class Ignore:
    name = "ignore"


@dataclass(frozen=True)
class Ones:
    name = "ones"


@dataclass(frozen=True)
class Zeros:
    name = "zeros"


@dataclass(frozen=True)
class OnesLSR:
    """Uncertain -> uniform draw in ``[lo, hi]`` (label-smoothed U-Ones)."""

    lo: float = 0.55
    hi: float = 0.85
    name = "ones-lsr"

    def __post_init__(self):
        if not (0.0 <= self.lo <= self.hi <= 1.0):
            raise ParameterError(f"need 0 <= lo <= hi <= 1, got lo={self.lo}, hi={self.hi}")


@dataclass(frozen=True)
class PerCategory:
    policies: Mapping[int, Union[Ignore, Ones, Zeros, OnesLSR]] = field(default_factory=dict)
    name = "per-category"

    def __post_init__(self):
        for c, p in self.policies.items():
            if isinstance(p, PerCategory):
                raise ParameterError(f"category {c}: per-category policies cannot nest")


UncertainPolicy = Union[Ignore, Ones, Zeros, OnesLSR, PerCategory]

POLICY_NAMES = ("ignore", "ones", "zeros", "ones-lsr")


def policy_from_name(name: str) -> UncertainPolicy:
    table = {"ignore": Ignore, "ones": Ones, "zeros": Zeros, "ones-lsr": OnesLSR}
    try:
        return table[name]()
    except KeyError:
        raise ParameterError(f"unknown uncertain policy {name!r}") from None


# --- operations ---------------------------------------------------------------


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def drop_labels(
    labels: LabelMatrix, keep_fraction: float, seed: int, stratified: bool = False
) -> LabelMatrix:
    """Keep ``round(keep_fraction * #known)`` known cells at random, unknown the rest.

    Cells are sampled uniformly over the whole matrix without replacement.
    With ``stratified=True`` the rounding and sampling happen per category.
    """
    if not 0.0 <= keep_fraction <= 1.0:
        raise ParameterError(f"keep_fraction must be in [0, 1], got {keep_fraction}")
    rng = np.random.default_rng(seed)
    src = labels.values
    known = src != LabelValue.UNKNOWN
    keep = np.zeros_like(known)
    if stratified:
        for c in range(labels.n_categories):
            rows = np.flatnonzero(known[:, c])
            n_keep = _round_half_up(keep_fraction * rows.size)
            keep[rng.choice(rows, size=n_keep, replace=False), c] = True
    else:
        flat = np.flatnonzero(known.ravel())
        n_keep = _round_half_up(keep_fraction * flat.size)
        chosen = rng.choice(flat, size=n_keep, replace=False)
        keep.ravel()[chosen] = True
    out = np.where(keep, src, np.int8(LabelValue.UNKNOWN))
    return LabelMatrix(out)


def assume_negative(labels: LabelMatrix) -> TargetMatrix:
    """Positive -> 1, Negative/Unknown -> 0; Uncertain cells come out masked."""
    v = labels.values
    targets = (v == LabelValue.POSITIVE).astype(np.float64)
    mask = v == LabelValue.UNCERTAIN
    return TargetMatrix(targets, mask)


def _resolve_column(values, mask, cells, policy, rng):
    if isinstance(policy, Ignore):
        mask[cells] = True
    elif isinstance(policy, Ones):
        values[cells] = 1.0
        mask[cells] = False
    elif isinstance(policy, Zeros):
        values[cells] = 0.0
        mask[cells] = False
    elif isinstance(policy, OnesLSR):
        values[cells] = rng.uniform(policy.lo, policy.hi, size=int(np.count_nonzero(cells)))
        mask[cells] = False
    else:
        raise ParameterError(f"unsupported uncertain policy {policy!r}")


def resolve_uncertain(
    targets: TargetMatrix, labels: LabelMatrix, policy: UncertainPolicy, seed: int = 0
) -> TargetMatrix:
    """Fill the cells that are Uncertain in ``labels`` according to ``policy``."""
    if targets.shape != labels.shape:
        raise ParameterError(f"targets {targets.shape} vs labels {labels.shape}")
    rng = np.random.default_rng(seed)
    values = np.array(targets.values)
    mask = np.array(targets.mask)
    uncertain = labels.values == LabelValue.UNCERTAIN

    if isinstance(policy, PerCategory):
        for c in range(labels.n_categories):
            col = uncertain[:, c]
            if not col.any():
                continue
            if c not in policy.policies:
                raise ConfigurationError(f"no uncertain policy for category {c}, which has uncertain labels")
            v, m = values[:, c], mask[:, c]
            _resolve_column(v, m, col, policy.policies[c], rng)
            values[:, c], mask[:, c] = v, m
    else:
        flat_v, flat_m = values.reshape(-1), mask.reshape(-1)
        _resolve_column(flat_v, flat_m, uncertain.reshape(-1), policy, rng)
    return TargetMatrix(values, mask)


def known_index(labels: LabelMatrix, category: int, targets: TargetMatrix | None = None) -> np.ndarray:
    """Sorted indices of samples with a usable label for ``category``.

    Positive and Negative cells always count.  If ``targets`` is given,
    Uncertain cells whose resolved target is unmasked count as well.
    """
    if not 0 <= category < labels.n_categories:
        raise ParameterError(f"category {category} out of range [0, {labels.n_categories})")
    col = labels.values[:, category]
    use = (col == LabelValue.POSITIVE) | (col == LabelValue.NEGATIVE)
    if targets is not None:
        use |= (col == LabelValue.UNCERTAIN) & ~targets.mask[:, category]
    return np.flatnonzero(use)


# --- CSV ----------------------------------------------------------------------

_CELL_TO_CODE = {"1": 1, "-1": -1, "0": 0, "u": 2}
_CODE_TO_CELL = {v: k for k, v in _CELL_TO_CODE.items()}


def read_labels_csv(path) -> LabelMatrix:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty label file") from None
        n_cat = len(header) - 1
        expected = ["sample_id"] + [f"cat_{c}" for c in range(n_cat)]
        if n_cat < 1 or header != expected:
            raise FormatError(f"{path}: bad header {header[:3]}...")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != n_cat + 1:
                raise FormatError(f"{path}:{lineno}: expected {n_cat + 1} fields, got {len(row)}")
            try:
                rows.append([_CELL_TO_CODE[cell.strip()] for cell in row[1:]])
            except KeyError as e:
                raise FormatError(f"{path}:{lineno}: invalid cell {e.args[0]!r}") from None
    values = np.array(rows, dtype=np.int8).reshape(len(rows), n_cat)
    return LabelMatrix(values)


def write_labels_csv(labels: LabelMatrix, path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["sample_id"] + [f"cat_{c}" for c in range(labels.n_categories)])
        for i, row in enumerate(labels.values):
            writer.writerow([i] + [_CODE_TO_CELL[int(v)] for v in row])
