"""Hybrid tree-seed / genetic optimizer for the kernel parameters.

Each tree sprouts a handful of seeds per generation.  Per dimension, a seed
either follows the tree-seed pull toward the global best (search-tendency
gate ST) or is produced by genetic crossover-plus-mutation against a random
peer; the best seed replaces its tree when it improves.  Bandwidth-like
dimensions can be marked logarithmic so initialization and mutation act on
exponents rather than raw values.

The optimizer minimizes; fitness for kernel tuning is the SOC-estimation
RMSE in percentage points.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

DEFAULT_BOUNDS = ((1.2, 6.0), (1.2, 6.0), (1e-6, 1e-2), (1e-6, 1e-2))
DEFAULT_LOG_DIMS = (False, False, True, True)


class FitnessFailure(RuntimeError):
    """Fitness evaluation raised; carries the offending position."""

    def __init__(self, position: np.ndarray, cause: BaseException):
        super().__init__(f"fitness failed at position {position!r}: {cause}")
        self.position = position


@dataclass(frozen=True)
class TsgaConfig:
    """Controls for the hybrid optimizer.

    ``bounds`` is one (lo, hi) pair per dimension; ``log_dims`` marks the
    dimensions sampled and mutated in log space.  ``st`` is the search
    tendency: probability that a dimension update follows the tree-seed rule
    instead of the genetic operators.
    """

    population: int = 20
    max_iter: int = 100
    st: float = 0.6
    w_start: float = 0.9
    w_end: float = 0.4
    seed_frac_lo: float = 0.10
    seed_frac_hi: float = 0.25
    bounds: Sequence = DEFAULT_BOUNDS
    log_dims: Sequence = DEFAULT_LOG_DIMS
    crossover_rate: float = 0.9
    mutation_rate: float = 0.15
    mutation_sigma_frac: float = 0.1
    rng_seed: int = 0

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be at least 2")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not (0.0 <= self.st <= 1.0):
            raise ValueError("st must lie in [0, 1]")
        if not (0.0 < self.seed_frac_lo <= self.seed_frac_hi <= 1.0):
            raise ValueError("seed fractions must satisfy 0 < lo <= hi <= 1")
        # Zero-width (pinned) dimensions are allowed: the search degenerates
        # to the pinned value there.
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        if any(lo > hi for lo, hi in bounds):
            raise ValueError("each bound must satisfy lo <= hi")
        log_dims = tuple(bool(b) for b in self.log_dims)
        if len(log_dims) != len(bounds):
            raise ValueError("log_dims length must match bounds length")
        if any(log_dims[j] and bounds[j][0] <= 0.0 for j in range(len(bounds))):
            raise ValueError("log dimensions need strictly positive bounds")
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "log_dims", log_dims)

    @property
    def dim(self) -> int:
        return len(self.bounds)


@dataclass
class Individual:
    """Candidate kernel-parameter vector and its evaluated fitness."""

    position: np.ndarray
    fitness: Optional[float] = None

    def copy(self) -> "Individual":
        return Individual(position=self.position.copy(), fitness=self.fitness)


@dataclass
class OptimizationResult:
    best: Individual
    history: list
    evaluations: int
    tsa_calls: int
    ga_calls: int
    elapsed_s: float

    def __iter__(self):
        # allow `best, history = optimize(...)`
        return iter((self.best, self.history))


def _clamp(value: float, lo: float, hi: float) -> float:
    return min(max(value, lo), hi)


def init_population(cfg: TsgaConfig, rng: Optional[np.random.Generator] = None) -> list:
    """Uniform (log-uniform on flagged dims) positions inside the bounds."""
    rng = np.random.default_rng(cfg.rng_seed) if rng is None else rng
    pop = []
    for _ in range(cfg.population):
        pos = np.empty(cfg.dim)
        for j, (lo, hi) in enumerate(cfg.bounds):
            r = rng.random()
            if cfg.log_dims[j]:
                pos[j] = math.exp(math.log(lo) + r * (math.log(hi) - math.log(lo)))
            else:
                pos[j] = lo + r * (hi - lo)
        pop.append(Individual(position=pos))
    return pop


def tsa_seed_dim(
    current: Individual,
    best: Individual,
    peer: Individual,
    j: int,
    w: float,
    rng: np.random.Generator,
    bounds,
) -> float:
    """Tree-seed pull toward the best: w*R_ij + sigma*(B_j - R_rj), clamped."""
    sigma = rng.uniform(-1.0, 1.0)
    z = w * current.position[j] + sigma * (best.position[j] - peer.position[j])
    return _clamp(z, *bounds[j])


def tsa_seed_dim_exploratory(
    current: Individual,
    peer: Individual,
    j: int,
    w: float,
    rng: np.random.Generator,
    bounds,
) -> float:
    """Pure tree-seed exploration rule (peer difference); comparison mode only."""
    sigma = rng.uniform(-1.0, 1.0)
    z = w * current.position[j] + sigma * (current.position[j] - peer.position[j])
    return _clamp(z, *bounds[j])


def ga_offspring_dim(
    current: Individual,
    peer: Individual,
    j: int,
    cfg: TsgaConfig,
    rng: np.random.Generator,
) -> float:
    """Arithmetic crossover with a peer, then bounded Gaussian mutation.

    Mutation acts on the exponent for log-flagged dimensions so a fixed
    ``mutation_sigma_frac`` perturbs decades rather than raw magnitudes.
    """
    lo, hi = cfg.bounds[j]
    z = current.position[j]
    if rng.random() < cfg.crossover_rate:
        u = rng.random()
        z = u * current.position[j] + (1.0 - u) * peer.position[j]
    if rng.random() < cfg.mutation_rate:
        if cfg.log_dims[j]:
            span = math.log(hi) - math.log(lo)
            z = math.exp(math.log(max(z, lo)) + rng.normal(0.0, cfg.mutation_sigma_frac * span))
        else:
            z = z + rng.normal(0.0, cfg.mutation_sigma_frac * (hi - lo))
    return _clamp(z, lo, hi)


def _evaluate(fitness: Callable, position: np.ndarray) -> float:
    try:
        value = float(fitness(position))
    except Exception as exc:
        raise FitnessFailure(position, exc) from exc
    if math.isnan(value):
        raise FitnessFailure(position, ValueError("fitness returned NaN"))
    return value


def optimize(fitness: Callable[[np.ndarray], float], cfg: TsgaConfig) -> OptimizationResult:
    """Run the hybrid search and return the best individual plus history.

    Per generation each tree draws a seed count uniformly from
    [ceil(seed_frac_lo*N), ceil(seed_frac_hi*N)]; every seed dimension passes
    the ST gate to pick the tree-seed rule or the genetic operators, is
    clamped into the search box, and the best seed greedily replaces its
    tree.  ``history`` holds the global best fitness after each generation
    and is therefore non-increasing.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.rng_seed)
    pop = init_population(cfg, rng)
    for ind in pop:
        ind.fitness = _evaluate(fitness, ind.position)
    evaluations = len(pop)
    best = min(pop, key=lambda i: i.fitness).copy()

    n = cfg.population
    seeds_lo = max(1, math.ceil(cfg.seed_frac_lo * n))
    seeds_hi = max(seeds_lo, math.ceil(cfg.seed_frac_hi * n))
    tsa_calls = 0
    ga_calls = 0
    history = []

    for it in range(cfg.max_iter):
        if cfg.max_iter > 1:
            w = cfg.w_start + (cfg.w_end - cfg.w_start) * it / (cfg.max_iter - 1)
        else:
            w = cfg.w_start
        for i in range(n):
            tree = pop[i]
            n_seeds = int(rng.integers(seeds_lo, seeds_hi + 1))
            best_seed = None
            for _ in range(n_seeds):
                peer_idx = int(rng.integers(0, n - 1))
                if peer_idx >= i:
                    peer_idx += 1
                peer = pop[peer_idx]
                z = tree.position.copy()
                for j in range(cfg.dim):
                    if rng.random() < cfg.st:
                        z[j] = tsa_seed_dim(tree, best, peer, j, w, rng, cfg.bounds)
                        tsa_calls += 1
                    else:
                        z[j] = ga_offspring_dim(tree, peer, j, cfg, rng)
                        ga_calls += 1
                seed = Individual(position=z, fitness=_evaluate(fitness, z))
                evaluations += 1
                if best_seed is None or seed.fitness < best_seed.fitness:
                    best_seed = seed
            if best_seed is not None and best_seed.fitness < tree.fitness:
                pop[i] = best_seed
        gen_best = min(pop, key=lambda i: i.fitness)
        if gen_best.fitness < best.fitness:
            best = gen_best.copy()
        history.append(best.fitness)

    return OptimizationResult(
        best=best,
        history=history,
        evaluations=evaluations,
        tsa_calls=tsa_calls,
        ga_calls=ga_calls,
        elapsed_s=time.perf_counter() - t0,
    )
