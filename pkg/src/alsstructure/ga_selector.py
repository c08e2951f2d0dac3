"""
Genetic-algorithm search for k-nn feature weights, k and g.

A chromosome holds one integer weight gene per feature (0 = unused), a gene
indexing k in ``K_VALUES`` and a gene indexing g on the grid 0.0, 0.1, ...,
3.0. Fitness is the leave-one-out error of the resulting k-nn model (lower
is better).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .prediction import KnnModel, cohen_kappa, error_matrix, loo_predict, overall_accuracy

__all__ = [
    "K_VALUES",
    "G_GRID",
    "W_MAX",
    "WORST_FITNESS",
    "Chromosome",
    "GaConfig",
    "GaResult",
    "fitness",
    "build_model",
    "run_ga",
]

K_VALUES = (3, 4, 5, 6)
G_GRID = tuple(round(0.1 * i, 1) for i in range(31))
W_MAX = 10
WORST_FITNESS = float("inf")


@dataclass(frozen=True)
class Chromosome:
    weights: tuple
    k_gene: int
    g_gene: int

    def __post_init__(self):
        w = tuple(int(v) for v in self.weights)
        if any(v < 0 or v > W_MAX for v in w):
            raise ValueError(f"weight genes must lie in 0..{W_MAX}")
        if not 0 <= self.k_gene < len(K_VALUES) or not 0 <= self.g_gene < len(G_GRID):
            raise ValueError("k or g gene out of range")
        object.__setattr__(self, "weights", w)

    @property
    def k(self) -> int:
        return K_VALUES[self.k_gene]

    @property
    def g(self) -> float:
        return G_GRID[self.g_gene]

    @property
    def selected(self) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.weights) > 0)

    def to_array(self) -> np.ndarray:
        return np.array([*self.weights, self.k_gene, self.g_gene], dtype=int)

    @classmethod
    def from_array(cls, a) -> "Chromosome":
        a = np.asarray(a, dtype=int)
        return cls(tuple(a[:-2]), int(a[-2]), int(a[-1]))

    def to_dict(self) -> dict:
        return {"weights": list(self.weights), "k": self.k, "g": self.g}


@dataclass(frozen=True)
class GaConfig:
    population: int = 50
    generations: int = 100
    mutation: float = 0.05
    crossover: float = 0.8
    elitism: int = 2
    init_select: float = 0.15
    seed: int = 0
    fitness_weights: tuple = (1.0, 1.0)
    threads: int = 1

    def __post_init__(self):
        if self.population < 4:
            raise ValueError("population must be at least 4")
        if self.generations < 1:
            raise ValueError("generations must be at least 1")
        for name in ("mutation", "crossover", "init_select"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must be a probability")
        if not 0 <= self.elitism < self.population:
            raise ValueError("elitism must be smaller than the population")


@dataclass
class GaResult:
    best: Chromosome
    best_fitness: float
    trace: list = field(default_factory=list)


def build_model(chrom: Chromosome, X, y, kind: str = "continuous") -> KnnModel:
    sel = chrom.selected
    return KnnModel(sel, np.asarray(chrom.weights, dtype=float)[sel], chrom.k, chrom.g, X, y, kind)


def fitness(chrom: Chromosome, X, y, kind: str = "continuous", fitness_weights=(1.0, 1.0)) -> float:
    """Leave-one-out fitness of a chromosome, lower is better.

    Continuous: ``a * RMSE / sd(y) + b * |bias| / sd(y)``.
    Categorical: ``a * (1 - OA) + b * (1 - kappa)``, with an undefined
    kappa counted as 0. A chromosome without features scores
    :data:`WORST_FITNESS`.
    """
    if chrom.selected.size == 0:
        return WORST_FITNESS
    a, b = fitness_weights
    model = build_model(chrom, X, y, kind)
    pred = loo_predict(model)
    if kind == "continuous":
        y = np.asarray(y, dtype=float)
        sd = y.std()
        if sd == 0:
            sd = 1.0
        err = pred - y
        return float(a * np.sqrt(np.mean(err**2)) / sd + b * abs(err.mean()) / sd)
    m = error_matrix(pred, np.asarray(y))
    oa = overall_accuracy(m)
    n = m.total
    pe = float(m.counts.sum(1) @ m.counts.sum(0)) / n**2
    kappa = 0.0 if np.isclose(pe, 1.0) else cohen_kappa(m)
    return float(a * (1 - oa) + b * (1 - kappa))


def _random_weights(rng, m: int, p: float, allowed: np.ndarray) -> np.ndarray:
    w = np.where(rng.uniform(size=m) < p, rng.integers(1, W_MAX + 1, size=m), 0)
    w[~allowed] = 0
    return w


def _repair(genes: np.ndarray, rng, allowed: np.ndarray) -> np.ndarray:
    m = genes.size - 2
    genes[:m][~allowed] = 0
    if not genes[:m].any():
        genes[rng.choice(np.flatnonzero(allowed))] = rng.integers(1, W_MAX + 1)
    return genes


def run_ga(config: GaConfig, X, y, kind: str = "continuous", allowed=None) -> GaResult:
    """Generational GA over feature weights, k and g.

    Binary tournaments pick parents, uniform crossover mixes them,
    every gene mutates with probability ``config.mutation`` (a mutated
    weight gene becomes 0 half the time, otherwise a uniform level), and
    the best ``config.elitism`` chromosomes survive unchanged. Random
    draws come from one generator seeded with ``config.seed``, so runs are
    reproducible regardless of ``config.threads``.

    Parameters
    ----------
    X : ndarray
        Standardized feature matrix (plots x features).
    y : array_like
        Responses.
    allowed : array_like of bool, optional
        Features that may be selected; degenerate columns should be False.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    n, m = X.shape
    if n < 2 or m < 1:
        raise ValueError("need at least 2 plots and 1 feature")
    allowed = np.ones(m, dtype=bool) if allowed is None else np.asarray(allowed, dtype=bool)
    if not allowed.any():
        raise ValueError("no selectable features")
    rng = np.random.default_rng(config.seed)
    cache: dict[bytes, float] = {}

    def evaluate_all(pop: np.ndarray) -> np.ndarray:
        keys = [row.tobytes() for row in pop]
        todo = {k: row for k, row in zip(keys, pop) if k not in cache}
        rows = list(todo.values())

        def f(row):
            return fitness(Chromosome.from_array(row), X, y, kind, config.fitness_weights)

        if config.threads > 1 and len(rows) > 1:
            with ThreadPoolExecutor(config.threads) as ex:
                vals = list(ex.map(f, rows))
        else:
            vals = [f(r) for r in rows]
        cache.update(zip(todo.keys(), vals))
        return np.array([cache[k] for k in keys])

    P = config.population
    pop = np.empty((P, m + 2), dtype=np.int64)
    for i in range(P):
        pop[i, :m] = _random_weights(rng, m, config.init_select, allowed)
        pop[i, m] = rng.integers(len(K_VALUES))
        pop[i, m + 1] = rng.integers(len(G_GRID))
        _repair(pop[i], rng, allowed)
    fit = evaluate_all(pop)

    best_i = int(np.argmin(fit))
    best, best_fit = pop[best_i].copy(), float(fit[best_i])
    trace = [best_fit]
    upper = np.array([W_MAX] * m + [len(K_VALUES) - 1, len(G_GRID) - 1])

    for _ in range(config.generations - 1):
        order = np.argsort(fit, kind="stable")
        children = [pop[i].copy() for i in order[: config.elitism]]
        while len(children) < P:
            parents = []
            for _ in range(2):
                a, b = rng.integers(P, size=2)
                parents.append(pop[a] if fit[a] <= fit[b] else pop[b])
            child = parents[0].copy()
            if rng.uniform() < config.crossover:
                take = rng.uniform(size=m + 2) < 0.5
                child[take] = parents[1][take]
            mutate = rng.uniform(size=m + 2) < config.mutation
            if mutate.any():
                new = rng.integers(0, upper + 1)
                zero = rng.uniform(size=m + 2) < 0.5
                new[:m] = np.where(zero[:m], 0, np.maximum(new[:m], 1))
                child[mutate] = new[mutate]
            children.append(_repair(child, rng, allowed))
        pop = np.array(children)
        fit = evaluate_all(pop)
        i = int(np.argmin(fit))
        if fit[i] < best_fit:
            best, best_fit = pop[i].copy(), float(fit[i])
        trace.append(best_fit)

    return GaResult(Chromosome.from_array(best), best_fit, trace)
