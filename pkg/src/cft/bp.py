"""Category-wise fine-tuning by full-batch gradient descent on ASL.

Each unit is optimized on its own known labels and may early-stop at its
own best validation epoch.  :func:`ft_joint_baseline` updates all units
together and early-stops once, on the mean validation metric.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from cft.cache import FeatureCache
from cft.errors import ParameterError
from cft.head import ClassificationHead, LRUnit, decompose, reassemble, sigmoid
from cft.labels import Ignore, LabelMatrix, UncertainPolicy
from cft.losses import BCE, ASLParams, asl_grad_logit, asl_loss
from cft.metrics import MetricKind
from cft.common import (
    CategoryData,
    CategoryReport,
    Report,
    augment,
    category_data,
    category_seed,
    check_shapes,
    run_per_category,
    safe_metric,
    training_targets,
    unit_score,
)


class Optimizer(str, enum.Enum):
    GD = "gd"
    ADAM = "adam"


@dataclass(frozen=True)
class BPConfig:
    optimizer: Optimizer = Optimizer.ADAM
    learning_rate: float = 1e-4
    epochs: int = 5000
    asl: ASLParams = field(default_factory=ASLParams)
    early_stop_metric: Optional[MetricKind] = None
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "optimizer", Optimizer(self.optimizer))
        if self.early_stop_metric is not None:
            object.__setattr__(self, "early_stop_metric", MetricKind(self.early_stop_metric))
        if not self.learning_rate > 0:
            raise ParameterError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 0:
            raise ParameterError(f"epochs must be >= 0, got {self.epochs}")


# CheXpert ablation: BCE, plain full-batch GD, lr 1e-4, 500 epochs
CHEXPERT_BP = BPConfig(Optimizer.GD, 1e-4, 500, BCE, MetricKind.AUC)
# MS-COCO: ASL(g- = 4, g+ = 0, m = 0.05), full-batch Adam, lr 1e-4, 5000 epochs
COCO_BP = BPConfig(Optimizer.ADAM, 1e-4, 5000, ASLParams(0.0, 4.0, 0.05), MetricKind.AP)

BP_PRESETS = {"chexpert-bp": CHEXPERT_BP, "coco-bp": COCO_BP}


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    valid_metric: Optional[float] = None


@dataclass
class Trajectory:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def valid_metrics(self) -> list[Optional[float]]:
        return [r.valid_metric for r in self.records]

    def train_losses(self) -> np.ndarray:
        return np.array([r.train_loss for r in self.records])


class _Stepper:
    """One parameter vector's optimizer state."""

    def __init__(self, config: BPConfig, size: int):
        self.config = config
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        cfg = self.config
        if cfg.optimizer is Optimizer.GD:
            return theta - cfg.learning_rate * grad
        b1, b2 = cfg.adam_betas
        self.t += 1
        self.m = b1 * self.m + (1.0 - b1) * grad
        self.v = b2 * self.v + (1.0 - b2) * grad * grad
        m_hat = self.m / (1.0 - b1**self.t)
        v_hat = self.v / (1.0 - b2**self.t)
        return theta - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)


def _loss_grad_sum(theta, xa, t, asl: ASLParams):
    """Summed ASL and its gradient w.r.t. ``[w, b]`` over the rows of ``xa``."""
    p = sigmoid(xa @ theta)
    loss = float(np.sum(asl_loss(t, p, asl)))
    g = asl_grad_logit(t, p, asl)
    return loss, xa.T @ g


def _unit_theta(unit: LRUnit) -> np.ndarray:
    return np.append(unit.weight, unit.bias)


def _theta_unit(theta: np.ndarray, category: int) -> LRUnit:
    return LRUnit(theta[:-1], theta[-1], category)


def _valid_metric(theta, vxa, vy, kind):
    if kind is None or vxa is None:
        return None
    return safe_metric(kind, vy, sigmoid(vxa @ theta))


def finetune_unit_bp(
    unit: LRUnit,
    train: tuple[np.ndarray, np.ndarray],
    valid: Optional[tuple[np.ndarray, np.ndarray]] = None,
    config: BPConfig = COCO_BP,
    seed: int = 0,
) -> tuple[LRUnit, Trajectory]:
    """Fine-tune one unit on ``train = (features, soft targets)``.

    With ``valid = (features, labels in {-1, 1})`` and an early-stop metric,
    the parameters of the best validation epoch are returned (earliest on
    ties).  Full-batch updates are deterministic; ``seed`` is accepted for
    interface symmetry with the GA.
    """
    x, t = train
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if t.size == 0:
        return unit, Trajectory()
    xa = augment(x)
    vxa, vy = (augment(np.asarray(valid[0], dtype=np.float64)), valid[1]) if valid is not None else (None, None)
    kind = config.early_stop_metric
    n = t.size

    theta = _unit_theta(unit)
    stepper = _Stepper(config, theta.size)
    traj = Trajectory()
    best_theta, best_metric = theta, None
    for epoch in range(config.epochs + 1):
        loss_sum, grad_sum = _loss_grad_sum(theta, xa, t, config.asl)
        vm = _valid_metric(theta, vxa, vy, kind)
        traj.records.append(EpochRecord(epoch, loss_sum / n, vm))
        if vm is not None and (best_metric is None or vm > best_metric):
            best_metric, best_theta = vm, theta
        if epoch < config.epochs:
            theta = stepper.step(theta, grad_sum / n)
    final = best_theta if best_metric is not None else theta
    return _theta_unit(final, unit.category), traj


def _best_epoch(traj: Trajectory) -> Optional[int]:
    vals = traj.valid_metrics()
    if not traj.records or all(v is None for v in vals):
        return None
    best = max(v for v in vals if v is not None)
    return next(i for i, v in enumerate(vals) if v == best)


def cft_bp(
    head: ClassificationHead,
    cache: FeatureCache,
    labels: LabelMatrix,
    valid: Optional[tuple[FeatureCache, LabelMatrix]] = None,
    policy: UncertainPolicy = Ignore(),
    config: BPConfig = COCO_BP,
    seed: int = 0,
    jobs: int = 1,
    order=None,
) -> tuple[ClassificationHead, Report]:
    """Fine-tune every unit of ``head`` independently on its known labels."""
    check_shapes(head, cache, labels, valid)
    targets = training_targets(labels, policy, seed)
    kind = config.early_stop_metric or MetricKind.AUC

    def tune(unit, c):
        data = category_data(cache, labels, targets, valid, c)
        new_unit, traj, rep = tune_category_bp(unit, data, config, category_seed(seed, c), kind)
        return new_unit, rep, traj

    out, reports, traces = run_per_category(head, tune, jobs, order)
    return out, Report("bp", kind.value, reports, traces)


def tune_category_bp(unit: LRUnit, data: CategoryData, config: BPConfig, seed: int, kind: MetricKind):
    before, source = unit_score(unit, data, kind)
    if data.n_train == 0:
        rep = CategoryReport(unit.category, 0, data.n_valid, 0, None, before, before, source, skipped=True)
        return unit, Trajectory(), rep
    valid = (data.valid_x, data.valid_y) if data.n_valid else None
    new_unit, traj = finetune_unit_bp(unit, (data.train_x, data.train_t), valid, config, seed)
    after, _ = unit_score(new_unit, data, kind)
    rep = CategoryReport(
        unit.category, data.n_train, data.n_valid, len(traj) - 1, _best_epoch(traj), before, after, source
    )
    return new_unit, traj, rep


def ft_joint_baseline(
    head: ClassificationHead,
    cache: FeatureCache,
    labels: LabelMatrix,
    valid: Optional[tuple[FeatureCache, LabelMatrix]] = None,
    policy: UncertainPolicy = Ignore(),
    config: BPConfig = COCO_BP,
    seed: int = 0,
) -> tuple[ClassificationHead, Report]:
    """Fine-tune the whole head at once on the union of known labels.

    The loss is the mean over all known cells.  Early stopping picks a
    single epoch for every category: the one with the best mean validation
    metric.  ``report.traces`` holds the per-epoch, per-category validation
    metrics as an ``(epochs + 1) x C`` array (NaN where undefined).
    """
    check_shapes(head, cache, labels, valid)
    targets = training_targets(labels, policy, seed)
    kind = config.early_stop_metric
    report_kind = kind or MetricKind.AUC
    units = decompose(head)
    C = head.n_categories
    data = [category_data(cache, labels, targets, valid, c) for c in range(C)]
    total = sum(d.n_train for d in data)
    if total == 0:
        reps = []
        for u, d in zip(units, data):
            score, src = unit_score(u, d, report_kind)
            reps.append(CategoryReport(u.category, 0, d.n_valid, 0, None, score, score, src, skipped=True))
        return head, Report("ft-joint", report_kind.value, reps, {"valid": np.empty((0, C))})

    xas = [augment(d.train_x) if d.n_train else None for d in data]
    vxas = [augment(d.valid_x) if d.n_valid else None for d in data]
    thetas = [_unit_theta(u) for u in units]
    steppers = [_Stepper(config, th.size) for th in thetas]
    best_thetas, best_mean, best_epoch = list(thetas), None, None
    valid_hist = np.full((config.epochs + 1, C), np.nan)
    losses = []
    for epoch in range(config.epochs + 1):
        loss_total, grads = 0.0, []
        for c in range(C):
            if xas[c] is None:
                grads.append(None)
                continue
            loss_c, g_c = _loss_grad_sum(thetas[c], xas[c], data[c].train_t, config.asl)
            loss_total += loss_c
            grads.append(g_c)
        losses.append(loss_total / total)
        vms = [_valid_metric(thetas[c], vxas[c], data[c].valid_y, kind) for c in range(C)]
        defined = [v for v in vms if v is not None]
        for c, v in enumerate(vms):
            if v is not None:
                valid_hist[epoch, c] = v
        if defined:
            mean = float(np.mean(defined))
            if best_mean is None or mean > best_mean:
                best_mean, best_epoch, best_thetas = mean, epoch, list(thetas)
        if epoch < config.epochs:
            thetas = [
                th if g is None else st.step(th, g / total) for th, g, st in zip(thetas, grads, steppers)
            ]
    final = best_thetas if best_mean is not None else thetas
    new_units = [_theta_unit(th, c) for c, th in enumerate(final)]
    reps = []
    for u, nu, d in zip(units, new_units, data):
        before, src = unit_score(u, d, report_kind)
        after, _ = unit_score(nu, d, report_kind)
        reps.append(
            CategoryReport(u.category, d.n_train, d.n_valid, config.epochs, best_epoch, before, after, src,
                           skipped=d.n_train == 0)
        )
    report = Report("ft-joint", report_kind.value, reps, {"valid": valid_hist, "train_loss": np.array(losses)})
    return reassemble(new_units), report


def valid_matrix(report: Report) -> np.ndarray:
    """Per-epoch x per-category validation metrics recorded by :func:`cft_bp`."""
    trajs = [report.traces[c] for c in sorted(report.traces)]
    n = max((len(t) for t in trajs), default=0)
    out = np.full((n, len(trajs)), np.nan)
    for c, t in enumerate(trajs):
        for r in t.records:
            if r.valid_metric is not None:
                out[r.epoch, c] = r.valid_metric
    return out
