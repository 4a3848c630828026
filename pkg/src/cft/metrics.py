"""Exact AUC and AP.

AUC counts positive/negative pairs with ``p_pos > p_neg`` (strict); tied
pairs count zero unless ``tie_half`` is set, in which case they count 1/2
(the usual midrank AUC).  AP averages, over positives ``i``, the precision
among samples scoring ``>= p_i``.

Both fast paths work on exact integer pair counts obtained by binary search,
so they agree with the brute-force oracles up to summation order.
"""

from __future__ import annotations

import enum
from typing import Iterable, Sequence

import numpy as np

from cft.errors import ParameterError, UndefinedMetricError


class MetricKind(str, enum.Enum):
    AUC = "auc"
    AP = "ap"


def _check(labels, preds):
    y = np.asarray(labels)
    p = np.asarray(preds, dtype=np.float64)
    if y.ndim != 1 or y.shape != p.shape:
        raise ParameterError(f"labels {y.shape} and predictions {p.shape} must be equal-length vectors")
    if y.size and not np.isin(y, (-1, 1)).all():
        raise ParameterError("labels must be -1 or 1; filter unknown/uncertain cells first")
    if not np.all(np.isfinite(p)):
        raise ParameterError("predictions must be finite")
    return y, p


def _auc_core(pos: np.ndarray, neg: np.ndarray, tie_half: bool = False) -> float:
    if pos.size == 0 or neg.size == 0:
        raise UndefinedMetricError(f"AUC needs both classes (N+={pos.size}, N-={neg.size})")
    neg = np.sort(neg)
    below = np.searchsorted(neg, pos, side="left")
    wins = int(below.sum())
    if tie_half:
        ties = int((np.searchsorted(neg, pos, side="right") - below).sum())
        return (wins + 0.5 * ties) / (pos.size * neg.size)
    return wins / (pos.size * neg.size)


def _ap_core(pos: np.ndarray, allp: np.ndarray) -> float:
    if pos.size == 0:
        raise UndefinedMetricError("AP needs at least one positive")
    pos = np.sort(pos)
    allp = np.sort(allp)
    # for each positive i: how many positives / samples score >= p_i
    n_pos_ge = pos.size - np.searchsorted(pos, pos, side="left")
    n_all_ge = allp.size - np.searchsorted(allp, pos, side="left")
    return float(np.sum(n_pos_ge / n_all_ge) / pos.size)


def auc(labels, preds, tie_half: bool = False) -> float:
    y, p = _check(labels, preds)
    return _auc_core(p[y == 1], p[y == -1], tie_half)


def ap(labels, preds) -> float:
    y, p = _check(labels, preds)
    return _ap_core(p[y == 1], p)


def metric_columns(kind: MetricKind | str, labels, preds: np.ndarray) -> np.ndarray:
    """Metric of every column of ``preds`` (n x k) against one label vector.

    Same values as calling :func:`metric` per column, without re-validating
    the labels each time.
    """
    kind = MetricKind(kind)
    preds = np.asarray(preds, dtype=np.float64)
    if preds.ndim != 2:
        raise ParameterError(f"expected an n x k prediction matrix, got shape {preds.shape}")
    y, _ = _check(labels, np.zeros(preds.shape[0]))
    if not np.all(np.isfinite(preds)):
        raise ParameterError("predictions must be finite")
    is_pos = y == 1
    pos, neg = preds[is_pos], preds[~is_pos]
    if kind is MetricKind.AUC:
        return np.array([_auc_core(pos[:, j], neg[:, j]) for j in range(preds.shape[1])])
    return np.array([_ap_core(pos[:, j], preds[:, j]) for j in range(preds.shape[1])])


def metric(kind: MetricKind | str, labels, preds) -> float:
    kind = MetricKind(kind)
    if kind is MetricKind.AUC:
        return auc(labels, preds)
    return ap(labels, preds)


def auc_naive(labels, preds, tie_half: bool = False) -> float:
    """Literal pairwise definition as an O(N^2) comparison matrix; reference only."""
    y, p = _check(labels, preds)
    pos, neg = p[y == 1], p[y == -1]
    if pos.size == 0 or neg.size == 0:
        raise UndefinedMetricError("AUC needs both classes")
    total = np.sum(pos[:, None] > neg[None, :], dtype=np.float64)
    if tie_half:
        total += 0.5 * np.sum(pos[:, None] == neg[None, :])
    return float(total / (pos.size * neg.size))


def ap_naive(labels, preds) -> float:
    """For each positive, precision among all samples scoring ``>=`` it; O(N^2)."""
    y, p = _check(labels, preds)
    is_pos = y == 1
    if not is_pos.any():
        raise UndefinedMetricError("AP needs at least one positive")
    ranked = p[None, :] >= p[is_pos][:, None]  # row i: samples at or above positive i
    hits = np.sum(ranked & is_pos[None, :], axis=1)
    return float(np.mean(hits / ranked.sum(axis=1)))


def mean_metric(
    sets: Iterable[tuple[int, tuple[Sequence, Sequence]]],
    kind: MetricKind | str,
    subset: Sequence[int] | None = None,
) -> tuple[float, dict[int, float], list[int]]:
    """Unweighted mean of a per-category metric.

    ``sets`` yields ``(category, (labels, preds))``.  Returns
    ``(mean, per_category, skipped)`` where ``skipped`` lists categories whose
    metric is undefined.  With ``subset``, every listed category must be
    present and defined.
    """
    kind = MetricKind(kind)
    per_cat: dict[int, float] = {}
    skipped: list[int] = []
    available = dict(sets)
    wanted = list(available) if subset is None else list(subset)
    for c in wanted:
        if c not in available:
            raise ParameterError(f"category {c} requested but not evaluated")
        try:
            per_cat[c] = metric(kind, *available[c])
        except UndefinedMetricError:
            if subset is not None:
                raise UndefinedMetricError(f"{kind.value} undefined for requested category {c}") from None
            skipped.append(c)
    if not per_cat:
        raise UndefinedMetricError(f"no category has a defined {kind.value}")
    return float(np.mean(list(per_cat.values()))), per_cat, skipped
