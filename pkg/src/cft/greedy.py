"""Per-category choice of uncertain-label policy.

Every category is fine-tuned once under each of ``ignore``, ``ones`` and
``zeros``; the unit with the best validation metric is kept (ties go to
``ignore``, then ``ones``).  Feature rows are gathered once per category
and shared by the three runs.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Callable, Optional

import numpy as np

from cft.cache import FeatureCache, gather
from cft.common import (
    CategoryData,
    Report,
    category_seed,
    check_shapes,
    run_per_category,
    training_targets,
    valid_data,
)
from cft.head import ClassificationHead
from cft.labels import LabelMatrix, LabelValue, policy_from_name

GREEDY_POLICIES = ("ignore", "ones", "zeros")


def cft_greedy(
    head: ClassificationHead,
    cache: FeatureCache,
    labels: LabelMatrix,
    valid: Optional[tuple[FeatureCache, LabelMatrix]],
    tune: Callable,
    variant: str,
    kind,
    seed: int = 0,
    jobs: int = 1,
    order=None,
) -> tuple[ClassificationHead, Report]:
    """Run ``tune(unit, data, category_seed)`` per policy and keep the best.

    ``tune`` returns ``(unit, CategoryReport, trace)`` as the BP and GA
    per-category tuners do.
    """
    check_shapes(head, cache, labels, valid)
    targets = {name: training_targets(labels, policy_from_name(name), seed) for name in GREEDY_POLICIES}

    def tune_category(unit, c):
        rows = np.flatnonzero(labels.values[:, c] != LabelValue.UNKNOWN)
        x_all = gather(cache, rows)
        vx, vy = valid_data(valid, c)
        best = None
        for name, t in targets.items():
            use = ~t.mask[rows, c]
            data = CategoryData(c, x_all[use], t.values[rows[use], c], vx, vy)
            new_unit, rep, trace = tune(unit, data, category_seed(seed, c))
            score = -np.inf if rep.metric_after is None else rep.metric_after
            if best is None or score > best[0]:
                best = (score, new_unit, replace(rep, policy=name), trace)
        return best[1], best[2], best[3]

    out, reports, traces = run_per_category(head, tune_category, jobs, order)
    return out, Report(variant, kind.value, reports, traces, {"uncertain": "greedy"})
