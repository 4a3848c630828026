"""Asymmetric loss (ASL) on probabilities, and its derivative w.r.t. the logit.

For a soft target ``t`` the loss is ``t * L_pos(p) + (1 - t) * L_neg(p)``
with ``L_pos = -(1-p)^g+ log p`` and ``L_neg = -p_m^g- log(1 - p_m)``,
``p_m = max(p - m, 0)``.  ``g+ = g- = m = 0`` is plain binary cross-entropy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cft.errors import ParameterError

EPS = 1e-12


@dataclass(frozen=True)
class ASLParams:
    gamma_pos: float = 0.0
    gamma_neg: float = 4.0
    margin: float = 0.05

    def __post_init__(self):
        if self.gamma_pos < 0 or self.gamma_neg < 0:
            raise ParameterError("focusing exponents must be >= 0")
        if not 0.0 <= self.margin < 1.0:
            raise ParameterError(f"margin must be in [0, 1), got {self.margin}")


BCE = ASLParams(0.0, 0.0, 0.0)


def _prep(target, p):
    t = np.asarray(target, dtype=np.float64)
    if np.any(t < 0.0) or np.any(t > 1.0) or np.any(np.isnan(t)):
        raise ParameterError("targets must lie in [0, 1]")
    p = np.clip(np.asarray(p, dtype=np.float64), EPS, 1.0 - EPS)
    return t, p


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def asl_loss(target, p, params: ASLParams = BCE):
    """Elementwise nonnegative ASL.  ``p`` is clamped to ``[1e-12, 1 - 1e-12]``."""
    t, p = _prep(target, p)
    gp, gn, m = params.gamma_pos, params.gamma_neg, params.margin
    loss_pos = -((1.0 - p) ** gp) * np.log(p)
    pm = np.maximum(p - m, 0.0)
    loss_neg = -(pm**gn) * np.log1p(-pm)
    return _scalar(t * loss_pos + (1.0 - t) * loss_neg)


def asl_grad_logit(target, p, params: ASLParams = BCE):
    """d asl_loss / d logit, with ``p = sigmoid(logit)``.

    At ``p == m`` the one-sided derivative from above is returned.
    """
    t, p = _prep(target, p)
    gp, gn, m = params.gamma_pos, params.gamma_neg, params.margin
    dpds = p * (1.0 - p)

    # d L_pos / d logit = (1-p)^g+ * (g+ * p * log p - (1 - p))
    g_pos = (1.0 - p) ** gp * (gp * p * np.log(p) - (1.0 - p))

    pm = p - m
    upper = pm >= 0.0
    pm = np.where(upper, pm, 0.0)
    safe = np.where(pm > 0.0, pm, 1.0)
    # log(1 - pm) / pm, with its limit -1 at pm = 0
    ratio = np.where(pm > 0.0, np.log1p(-pm) / safe, -1.0)
    pm_g = pm**gn
    d_neg_dp = pm_g / (1.0 - pm) - gn * pm_g * ratio
    g_neg = np.where(upper, dpds * d_neg_dp, 0.0)

    return _scalar(t * g_pos + (1.0 - t) * g_neg)
