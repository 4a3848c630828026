"""Train a full classification head on cached features.

Stands in for the backbone-level training that produced the model to be
calibrated: it fits all units jointly on pseudo-labelled targets, so it
inherits whatever the pseudo-labels got wrong.
"""

from __future__ import annotations

import numpy as np

from cft.bp import BPConfig, Optimizer
from cft.cache import FeatureCache
from cft.errors import ParameterError
from cft.head import ClassificationHead, sigmoid
from cft.labels import TargetMatrix
from cft.losses import asl_grad_logit, asl_loss


def init_head(n_categories: int, dim_z: int, seed: int) -> ClassificationHead:
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(dim_z)
    return ClassificationHead(rng.uniform(-bound, bound, size=(n_categories, dim_z)), np.zeros(n_categories))


def _mean_loss_grad(w, b, x, t, live, n_live, asl):
    p = sigmoid(x @ w.T + b)
    loss = float(np.sum(np.where(live, asl_loss(t, p, asl), 0.0))) / n_live
    g = np.where(live, asl_grad_logit(t, p, asl), 0.0) / n_live
    return loss, g.T @ x, g.sum(axis=0)


def train_head(
    cache: FeatureCache,
    targets: TargetMatrix,
    config: BPConfig,
    seed: int = 0,
    return_losses: bool = False,
):
    """Full-batch training on the mean ASL over unmasked cells.

    Weights start uniform in ``+-1/sqrt(Z)``, biases at zero.  With
    ``return_losses`` the per-epoch training loss (length ``epochs + 1``)
    is returned alongside the head.
    """
    if targets.shape[0] != cache.n_samples:
        raise ParameterError(f"targets have {targets.shape[0]} rows, cache has {cache.n_samples}")
    live = ~targets.mask
    n_live = int(live.sum())
    if n_live == 0:
        raise ParameterError("every target cell is masked")
    head = init_head(targets.shape[1], cache.dim_z, seed)
    x = cache.data.astype(np.float64)
    t = targets.values
    w, b = np.array(head.weights), np.array(head.bias)
    mw, vw = np.zeros_like(w), np.zeros_like(w)
    mb, vb = np.zeros_like(b), np.zeros_like(b)
    b1, b2 = config.adam_betas
    lr = config.learning_rate
    losses = []
    for epoch in range(config.epochs + 1):
        loss, gw, gb = _mean_loss_grad(w, b, x, t, live, n_live, config.asl)
        losses.append(loss)
        if epoch == config.epochs:
            break
        if config.optimizer is Optimizer.GD:
            w, b = w - lr * gw, b - lr * gb
            continue
        k = epoch + 1
        mw = b1 * mw + (1 - b1) * gw
        vw = b2 * vw + (1 - b2) * gw * gw
        mb = b1 * mb + (1 - b1) * gb
        vb = b2 * vb + (1 - b2) * gb * gb
        w = w - lr * (mw / (1 - b1**k)) / (np.sqrt(vw / (1 - b2**k)) + config.adam_eps)
        b = b - lr * (mb / (1 - b1**k)) / (np.sqrt(vb / (1 - b2**k)) + config.adam_eps)
    trained = ClassificationHead(w, b)
    return (trained, np.array(losses)) if return_losses else trained
