"""Category-wise fine-tuning by a genetic algorithm that maximizes AUC or AP.

An individual is the genome ``[w_1, ..., w_Z, b]`` of one logistic-regression
unit.  The population starts as copies of the trained unit and diverges by
mutation; elitism carries the best individuals forward unchanged.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np

from cft.cache import FeatureCache
from cft.common import (
    CategoryReport,
    Report,
    category_data,
    category_seed,
    check_shapes,
    run_per_category,
    training_targets,
    unit_score,
)
from cft.errors import ParameterError, UndefinedMetricError
from cft.head import ClassificationHead, LRUnit, predict_unit, sigmoid
from cft.labels import Ignore, LabelMatrix, UncertainPolicy
from cft.metrics import MetricKind, metric, metric_columns

ROULETTE_EPS = 1e-9


@dataclass(frozen=True)
class TwoPoint:
    prob: float = 0.8


@dataclass(frozen=True)
class SwapFraction:
    fraction: float = 0.2


Crossover = Union[TwoPoint, SwapFraction]


@dataclass(frozen=True)
class GAConfig:
    population: int = 50
    generations: int = 5000
    n_parents: int = 50
    elitism: int = 1
    crossover: Crossover = field(default_factory=SwapFraction)
    mutation_prob: float = 0.5
    mutation_fraction: float = 1.0
    mutation_range: tuple[float, float] = (-0.001, 0.001)
    fitness_metric: MetricKind = MetricKind.AP

    def __post_init__(self):
        object.__setattr__(self, "fitness_metric", MetricKind(self.fitness_metric))
        if self.population < 1 or self.generations < 0:
            raise ParameterError("population must be >= 1 and generations >= 0")
        if not 0 <= self.elitism <= self.population:
            raise ParameterError(f"elitism {self.elitism} must be within [0, population]")
        if self.n_parents < 2:
            raise ParameterError("n_parents must be >= 2")
        probs = [self.mutation_prob, self.mutation_fraction]
        probs.append(self.crossover.prob if isinstance(self.crossover, TwoPoint) else self.crossover.fraction)
        if not all(0.0 <= q <= 1.0 for q in probs):
            raise ParameterError("probabilities and fractions must lie in [0, 1]")
        lo, hi = self.mutation_range
        if lo > hi:
            raise ParameterError(f"mutation range ({lo}, {hi}) is reversed")


PRESETS = {
    "chexpert-ga": GAConfig(
        population=30,
        generations=500,
        n_parents=14,
        elitism=10,
        crossover=TwoPoint(0.8),
        mutation_prob=0.02,
        mutation_fraction=0.01,
        mutation_range=(-0.02, 0.02),
        fitness_metric=MetricKind.AUC,
    ),
    "coco-ga": GAConfig(
        population=50,
        generations=5000,
        n_parents=50,
        elitism=1,
        crossover=SwapFraction(0.2),
        mutation_prob=0.5,
        mutation_fraction=1.0,
        mutation_range=(-0.001, 0.001),
        fitness_metric=MetricKind.AP,
    ),
}


def preset(name: str, **overrides) -> GAConfig:
    try:
        cfg = PRESETS[name]
    except KeyError:
        raise ParameterError(f"unknown GA preset {name!r}; choose from {sorted(PRESETS)}") from None
    return replace(cfg, **overrides) if overrides else cfg


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


# --- encoding -----------------------------------------------------------------


def encode(unit: LRUnit) -> np.ndarray:
    return np.append(unit.weight, unit.bias)


def decode(genome, category: int, dim_z: Optional[int] = None) -> LRUnit:
    g = np.asarray(genome, dtype=np.float64)
    if g.ndim != 1 or g.size < 2:
        raise ParameterError(f"genome must be a vector of length Z + 1 >= 2, got shape {g.shape}")
    if dim_z is not None and g.size != dim_z + 1:
        raise ParameterError(f"genome length {g.size} != Z + 1 = {dim_z + 1}")
    return LRUnit(g[:-1], g[-1], category)


def fitness(genome, features, labels, kind: MetricKind | str = MetricKind.AP) -> float:
    """Metric of the decoded unit on ``(features, labels in {-1, 1})``."""
    features = np.asarray(features, dtype=np.float64)
    unit = decode(genome, 0, features.shape[1])
    return metric(kind, labels, predict_unit(unit, features))


def population_fitness(genomes: np.ndarray, features: np.ndarray, labels, kind: MetricKind) -> np.ndarray:
    """Fitness of each row of ``genomes``; one matrix product for the population."""
    logits = features @ genomes[:, :-1].T + genomes[:, -1]
    return metric_columns(kind, labels, sigmoid(logits))


# --- operators ----------------------------------------------------------------


def roulette_select(fitnesses, k: int, seed) -> np.ndarray:
    """``k`` indices drawn with replacement, proportional to ``f - min(f) + eps``."""
    f = np.asarray(fitnesses, dtype=np.float64)
    if f.size == 0:
        raise ParameterError("cannot select from an empty population")
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    w = f - f.min() + ROULETTE_EPS
    return _rng(seed).choice(f.size, size=k, replace=True, p=w / w.sum())


def _count(x: float, rounding) -> int:
    # guard against 0.1 * 30 = 3.0000000000000004 style artefacts
    return int(rounding(round(x, 9)))


def _random_subsets(rng: np.random.Generator, k: int, length: int, size: int) -> np.ndarray:
    """Boolean (k, length) mask with ``size`` uniformly chosen positions per row."""
    if size >= length:
        return np.ones((k, length), dtype=bool)
    if size <= 0:
        return np.zeros((k, length), dtype=bool)
    ranks = np.argsort(rng.random((k, length)), axis=1)
    mask = np.zeros((k, length), dtype=bool)
    np.put_along_axis(mask, ranks[:, :size], True, axis=1)
    return mask


def crossover_batch(parents_a, parents_b, kind: Crossover, rng: np.random.Generator) -> np.ndarray:
    """One child per row pair; see :func:`crossover`."""
    a = np.asarray(parents_a, dtype=np.float64)
    b = np.asarray(parents_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ParameterError(f"parent shapes differ: {a.shape} vs {b.shape}")
    k, length = a.shape
    if isinstance(kind, TwoPoint):
        do = rng.random(k) < kind.prob
        cuts = np.sort(np.argsort(rng.random((k, length + 1)), axis=1)[:, :2], axis=1)
        pos = np.arange(length)
        take_b = (pos >= cuts[:, :1]) & (pos < cuts[:, 1:]) & do[:, None]
    elif isinstance(kind, SwapFraction):
        take_b = _random_subsets(rng, k, length, _count(kind.fraction * length, math.floor))
    else:
        raise ParameterError(f"unknown crossover {kind!r}")
    return np.where(take_b, b, a)


def crossover(parent_a, parent_b, kind: Crossover, seed) -> np.ndarray:
    """Child of two genomes.

    ``TwoPoint(prob)``: with probability ``prob`` the slice between two
    uniformly drawn cut points comes from ``parent_b``; otherwise the child
    copies ``parent_a``.  ``SwapFraction(f)``: ``floor(f * L)`` uniformly
    chosen positions come from ``parent_b``, the rest from ``parent_a``.
    """
    a = np.asarray(parent_a, dtype=np.float64)
    b = np.asarray(parent_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ParameterError(f"parent lengths differ: {a.shape} vs {b.shape}")
    return crossover_batch(a[None], b[None], kind, _rng(seed))[0]


def mutate_batch(genomes, prob, fraction, value_range, rng: np.random.Generator) -> np.ndarray:
    g = np.asarray(genomes, dtype=np.float64)
    k, length = g.shape
    do = rng.random(k) < prob
    where = _random_subsets(rng, k, length, min(length, _count(fraction * length, math.ceil)))
    where &= do[:, None]
    delta = rng.uniform(value_range[0], value_range[1], size=(k, length))
    return np.where(where, g + delta, g)


def mutate(genome, prob: float, fraction: float, value_range: tuple[float, float], seed) -> np.ndarray:
    """With probability ``prob``, add a uniform draw from ``value_range`` to
    ``ceil(fraction * L)`` uniformly chosen positions."""
    g = np.asarray(genome, dtype=np.float64)
    return mutate_batch(g[None], prob, fraction, value_range, _rng(seed))[0]


# --- evolution ----------------------------------------------------------------


def evolve(
    unit: LRUnit,
    features,
    labels,
    config: GAConfig = PRESETS["coco-ga"],
    seed: int = 0,
) -> tuple[LRUnit, list[float]]:
    """Evolve ``unit`` to maximize its metric on ``(features, labels)``.

    Returns the best individual ever seen and the best-so-far fitness after
    each generation (index 0 is the initial population).  If the metric is
    undefined on the data the unit is returned unchanged with an empty
    history.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    kind = config.fitness_metric
    pop = np.tile(encode(unit), (config.population, 1))
    try:
        fit = population_fitness(pop, x, y, kind)
    except UndefinedMetricError:
        return unit, []
    best_i = int(np.argmax(fit))
    best_genome, best_fit = pop[best_i].copy(), float(fit[best_i])
    history = [best_fit]
    n_children = config.population - config.elitism
    for gen in range(1, config.generations + 1):
        rng = np.random.default_rng([seed, gen])
        ranked = np.argsort(-fit, kind="stable")
        elites = pop[ranked[: config.elitism]]
        children = np.empty((0, pop.shape[1]))
        if n_children:
            parents = pop[roulette_select(fit, config.n_parents, rng)]
            k = np.arange(n_children)
            children = crossover_batch(
                parents[k % config.n_parents], parents[(k + 1) % config.n_parents], config.crossover, rng
            )
            children = mutate_batch(
                children, config.mutation_prob, config.mutation_fraction, config.mutation_range, rng
            )
        pop = np.vstack([elites, children])
        fit = population_fitness(pop, x, y, kind)
        i = int(np.argmax(fit))
        if fit[i] > best_fit:
            best_fit, best_genome = float(fit[i]), pop[i].copy()
        history.append(best_fit)
    return decode(best_genome, unit.category, unit.dim_z), history


def write_history_csv(history, path) -> None:
    with Path(path).open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["generation", "best_fitness"])
        for g, v in enumerate(history):
            w.writerow([g, repr(float(v))])


def cft_ga(
    head: ClassificationHead,
    cache: FeatureCache,
    labels: LabelMatrix,
    valid: Optional[tuple[FeatureCache, LabelMatrix]] = None,
    policy: UncertainPolicy = Ignore(),
    config: GAConfig = PRESETS["coco-ga"],
    seed: int = 0,
    jobs: int = 1,
    order=None,
    fitness_source: str = "train",
) -> tuple[ClassificationHead, Report]:
    """Evolve every unit of ``head`` independently.

    Fitness is measured on each category's known training labels, or on the
    validation set with ``fitness_source="valid"``.
    """
    if fitness_source not in ("train", "valid"):
        raise ParameterError(f"fitness_source must be 'train' or 'valid', got {fitness_source!r}")
    if fitness_source == "valid" and valid is None:
        raise ParameterError("fitness_source='valid' needs a validation set")
    check_shapes(head, cache, labels, valid)
    targets = training_targets(labels, policy, seed)
    kind = config.fitness_metric

    def tune(unit, c):
        data = category_data(cache, labels, targets, valid, c)
        return tune_category_ga(unit, data, config, category_seed(seed, c), fitness_source)

    out, reports, traces = run_per_category(head, tune, jobs, order)
    return out, Report("ga", kind.value, reports, traces)


def tune_category_ga(unit: LRUnit, data, config: GAConfig, seed: int, fitness_source: str = "train"):
    kind = config.fitness_metric
    before, source = unit_score(unit, data, kind)
    if fitness_source == "valid":
        x, y = data.valid_x, data.valid_y
    else:
        x, y = data.train_x, data.train_y
    history: list[float] = []
    new_unit = unit
    if y is not None and y.size:
        new_unit, history = evolve(unit, x, y, config, seed)
    after, _ = unit_score(new_unit, data, kind)
    best_gen = int(np.argmax(history)) if history else None
    rep = CategoryReport(
        unit.category,
        data.n_train,
        data.n_valid,
        max(len(history) - 1, 0),
        best_gen,
        before,
        after,
        source,
        skipped=not history,
    )
    return new_unit, rep, history
