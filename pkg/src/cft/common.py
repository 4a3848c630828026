"""Per-category plumbing shared by the BP and GA fine-tuners."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from cft.cache import FeatureCache, gather
from cft.errors import ParameterError, UndefinedMetricError
from cft.head import ClassificationHead, LRUnit, decompose, predict_unit, replace_unit
from cft.labels import (
    LabelMatrix,
    LabelValue,
    TargetMatrix,
    UncertainPolicy,
    assume_negative,
    known_index,
    resolve_uncertain,
)
from cft.metrics import MetricKind, metric

REPORT_SCHEMA = 1


def category_seed(seed: int, category: int) -> int:
    """Seed for one category, independent of processing order."""
    return int(np.random.SeedSequence([int(seed), int(category)]).generate_state(1, dtype=np.uint64)[0])


def augment(x: np.ndarray) -> np.ndarray:
    """Append a ones column so ``[w, b]`` acts on ``[z, 1]``."""
    return np.hstack([x, np.ones((x.shape[0], 1))])


@dataclass
class CategoryData:
    category: int
    train_x: np.ndarray  # n x Z, float64
    train_t: np.ndarray  # n soft targets
    valid_x: Optional[np.ndarray] = None
    valid_y: Optional[np.ndarray] = None  # in {-1, 1}

    @property
    def n_train(self) -> int:
        return self.train_t.size

    @property
    def n_valid(self) -> int:
        return 0 if self.valid_y is None else self.valid_y.size

    @property
    def train_y(self) -> np.ndarray:
        return np.where(self.train_t >= 0.5, 1, -1)


def check_shapes(head: ClassificationHead, cache: FeatureCache, labels: LabelMatrix, valid=None) -> None:
    if cache.n_samples != labels.n_samples:
        raise ParameterError(f"cache has {cache.n_samples} samples, labels have {labels.n_samples}")
    if cache.dim_z != head.dim_z:
        raise ParameterError(f"cache dimension {cache.dim_z} != head dimension {head.dim_z}")
    if labels.n_categories != head.n_categories:
        raise ParameterError(f"labels have {labels.n_categories} categories, head has {head.n_categories}")
    if valid is not None:
        vcache, vlabels = valid
        if vcache.n_samples != vlabels.n_samples or vcache.dim_z != head.dim_z:
            raise ParameterError("validation cache/labels shapes inconsistent with head")
        if vlabels.n_categories != head.n_categories:
            raise ParameterError("validation labels have the wrong number of categories")


def training_targets(labels: LabelMatrix, policy: UncertainPolicy, seed: int) -> TargetMatrix:
    return resolve_uncertain(assume_negative(labels), labels, policy, seed)


def valid_data(valid, category: int):
    if valid is None:
        return None, None
    vcache, vlabels = valid
    idx = known_index(vlabels, category)
    y = np.where(vlabels.values[idx, category] == LabelValue.POSITIVE, 1, -1)
    return gather(vcache, idx), y


def category_data(cache, labels, targets, valid, category) -> CategoryData:
    idx = known_index(labels, category, targets)
    vx, vy = valid_data(valid, category)
    return CategoryData(category, gather(cache, idx), targets.values[idx, category], vx, vy)


def safe_metric(kind: MetricKind, y, preds) -> Optional[float]:
    try:
        return metric(kind, y, preds)
    except UndefinedMetricError:
        return None


def unit_score(unit: LRUnit, data: CategoryData, kind: MetricKind) -> tuple[Optional[float], str]:
    """Validation metric of ``unit`` when available, else its training metric."""
    if data.valid_y is not None and data.n_valid:
        v = safe_metric(kind, data.valid_y, predict_unit(unit, data.valid_x))
        if v is not None:
            return v, "valid"
    if data.n_train:
        return safe_metric(kind, data.train_y, predict_unit(unit, data.train_x)), "train"
    return None, "none"


@dataclass
class CategoryReport:
    category: int
    n_train: int
    n_valid: int
    epochs_run: int
    best_epoch: Optional[int]
    metric_before: Optional[float]
    metric_after: Optional[float]
    metric_source: str = "valid"
    skipped: bool = False
    policy: Optional[str] = None


@dataclass
class Report:
    variant: str
    metric: str
    categories: list[CategoryReport] = field(default_factory=list)
    # in-memory only: per-category optimisation traces (not serialized)
    traces: dict = field(default_factory=dict, repr=False)
    extra: dict = field(default_factory=dict)

    @property
    def skipped(self) -> list[int]:
        return [c.category for c in self.categories if c.skipped]

    def mean_before_after(self) -> tuple[Optional[float], Optional[float]]:
        pairs = [
            (c.metric_before, c.metric_after)
            for c in self.categories
            if c.metric_before is not None and c.metric_after is not None
        ]
        if not pairs:
            return None, None
        b, a = zip(*pairs)
        return float(np.mean(b)), float(np.mean(a))

    def to_dict(self) -> dict:
        before, after = self.mean_before_after()
        return {
            "schema": REPORT_SCHEMA,
            "variant": self.variant,
            "metric": self.metric,
            "mean_metric_before": before,
            "mean_metric_after": after,
            "skipped": self.skipped,
            "categories": [asdict(c) for c in self.categories],
            **self.extra,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def run_per_category(
    head: ClassificationHead,
    tune: Callable[[LRUnit, int], tuple[LRUnit, CategoryReport, object]],
    jobs: int = 1,
    order: Optional[Sequence[int]] = None,
):
    """Apply ``tune(unit, category)`` to every unit and merge the results.

    Updates are disjoint rows, so the merged head does not depend on
    ``order`` or ``jobs``.
    """
    units = decompose(head)
    cats = list(range(head.n_categories)) if order is None else list(order)
    if sorted(cats) != list(range(head.n_categories)):
        raise ParameterError("order must be a permutation of the categories")
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = dict(zip(cats, pool.map(lambda c: tune(units[c], c), cats)))
    else:
        results = {c: tune(units[c], c) for c in cats}
    out = head
    reports, traces = [], {}
    for c in range(head.n_categories):
        unit, rep, trace = results[c]
        out = replace_unit(out, unit)
        reports.append(rep)
        traces[c] = trace
    return out, reports, traces
