"""Synthetic partial-label problems with a known logistic teacher.

Features are i.i.d. standard normal.  Each category has a unit-norm
teacher direction ``u_c``; its label is positive with probability
``sigmoid(sharpness * (u_c . z + b_c))``, where ``b_c`` is solved so the
expected positive fraction equals ``positive_rate``.  The returned oracle
head is ``(u_c, b_c)``: the teacher up to the sharpness scale, hence it
ranks samples exactly as the teacher does.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from cft.cache import FeatureCache
from cft.errors import ParameterError
from cft.head import ClassificationHead
from cft.labels import LabelMatrix


@dataclass(frozen=True)
class SyntheticSpec:
    n_samples: int
    dim_z: int
    n_categories: int
    positive_rate: float = 0.1
    label_noise: float = 0.0
    seed: int = 0
    sharpness: float = 6.0

    def __post_init__(self):
        if min(self.n_samples, self.dim_z, self.n_categories) < 1:
            raise ParameterError("counts must be positive")
        if not 0.0 < self.positive_rate < 1.0:
            raise ParameterError(f"positive_rate must be in (0, 1), got {self.positive_rate}")
        if not 0.0 <= self.label_noise < 1.0:
            raise ParameterError(f"label_noise must be in [0, 1), got {self.label_noise}")
        if self.sharpness <= 0:
            raise ParameterError("sharpness must be > 0")


_GH_NODES, _GH_WEIGHTS = np.polynomial.hermite_e.hermegauss(80)
_GH_WEIGHTS = _GH_WEIGHTS / _GH_WEIGHTS.sum()


def calibrate_bias(positive_rate: float, sharpness: float) -> float:
    """``b`` with ``E[sigmoid(sharpness * (g + b))] = positive_rate`` for ``g ~ N(0, 1)``."""

    def excess(b):
        return float(_GH_WEIGHTS @ expit(sharpness * (_GH_NODES + b))) - positive_rate

    return brentq(excess, -50.0, 50.0, xtol=1e-14)


def generate(spec: SyntheticSpec) -> tuple[FeatureCache, LabelMatrix, ClassificationHead]:
    rng = np.random.default_rng(spec.seed)
    n, z, c = spec.n_samples, spec.dim_z, spec.n_categories
    directions = rng.standard_normal((c, z))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    bias = np.full(c, calibrate_bias(spec.positive_rate, spec.sharpness))
    oracle = ClassificationHead(directions, bias)

    features = rng.standard_normal((n, z), dtype=np.float32)
    logits = features.astype(np.float64) @ directions.T + bias
    positive = expit(spec.sharpness * logits) > rng.uniform(size=(n, c))
    values = np.where(positive, 1, -1).astype(np.int8)

    n_flip = int(np.floor(spec.label_noise * values.size + 0.5))
    if n_flip:
        flat = values.reshape(-1)
        idx = rng.choice(flat.size, size=n_flip, replace=False)
        flat[idx] = -flat[idx]
    return FeatureCache(features), LabelMatrix(values), oracle
