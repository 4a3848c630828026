"""Per-unit wall-clock timing of BP and GA fine-tuning on pseudo samples."""

from __future__ import annotations

import time
from dataclasses import replace

import numpy as np

from cft.bp import COCO_BP, finetune_unit_bp
from cft.cache import gather
from cft.ga import evolve, preset
from cft.head import LRUnit
from cft.labels import drop_labels, known_index
from cft.synthetic import SyntheticSpec, generate


def run_bench(
    n: int = 300_000,
    z: int = 512,
    known_frac: float = 0.1,
    epochs: int = 1000,
    generations: int = 1000,
    pop: int = 50,
    seed: int = 0,
) -> dict:
    """Time one unit's BP fine-tune and GA evolution on the same known rows."""
    cache, labels, _ = generate(SyntheticSpec(n, z, 1, seed=seed))
    labels = drop_labels(labels, known_frac, seed=seed)
    idx = known_index(labels, 0)
    x = gather(cache, idx)
    y = labels.values[idx, 0].astype(np.int64)
    t = (y == 1).astype(np.float64)
    rng = np.random.default_rng(seed)
    unit = LRUnit(rng.uniform(-1, 1, z) / np.sqrt(z), 0.0, 0)

    bp_cfg = replace(COCO_BP, epochs=epochs, early_stop_metric=None)
    start = time.perf_counter()
    finetune_unit_bp(unit, (x, t), None, bp_cfg, seed)
    bp_seconds = time.perf_counter() - start

    ga_cfg = preset("coco-ga", generations=generations, population=pop, n_parents=max(2, min(pop, 50)))
    start = time.perf_counter()
    evolve(unit, x, y, ga_cfg, seed)
    ga_seconds = time.perf_counter() - start

    return {
        "n": n,
        "z": z,
        "known_frac": known_frac,
        "n_known": int(idx.size),
        "epochs": epochs,
        "generations": generations,
        "population": pop,
        "bp_seconds_per_lr": bp_seconds,
        "ga_seconds_per_lr": ga_seconds,
    }
