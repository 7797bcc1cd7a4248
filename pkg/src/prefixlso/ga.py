"""Genetic algorithm over prefix-graph bitvectors.

Individuals start from ripple-carry or Sklansky with heavy random mutation;
each generation keeps the most-fit half and refills the population 40% by
mutation, 40% by uniform crossover, 10% by elites, 10% fresh. Fitness is
negative cost; all evaluation flows through the cached oracle so duplicates
never spend budget twice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import cost_oracle as co
from . import prefix_graph as pg


@dataclass(frozen=True)
class GaConfig:
    population_size: int = 100  # paper-scale runs use 1000
    init_mutations: int = 200
    max_mutations: int = 50
    survivor_fraction: float = 0.5
    mutation_fraction: float = 0.4
    crossover_fraction: float = 0.4
    elite_fraction: float = 0.1
    fresh_fraction: float = 0.1

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if self.init_mutations < 0 or self.max_mutations < 1:
            raise ValueError("init_mutations >= 0 and max_mutations >= 1 required")
        total = (self.mutation_fraction + self.crossover_fraction
                 + self.elite_fraction + self.fresh_fraction)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"breeding fractions must sum to 1, got {total}")
        if not 0 < self.survivor_fraction <= 1:
            raise ValueError("survivor_fraction must be in (0, 1]")

    def composition(self) -> tuple[int, int, int, int]:
        """(mutation, crossover, elite, fresh) child counts; round-half-up with
        the fresh slice absorbing the remainder."""
        p = self.population_size
        n_mut = math.floor(self.mutation_fraction * p + 0.5)
        n_cross = math.floor(self.crossover_fraction * p + 0.5)
        n_elite = math.floor(self.elite_fraction * p + 0.5)
        n_fresh = p - n_mut - n_cross - n_elite
        if n_fresh < 0:
            raise ValueError("breeding composition exceeds population size")
        return n_mut, n_cross, n_elite, n_fresh


@dataclass
class Individual:
    bits: np.ndarray
    cost: float | None = None

    @property
    def fitness(self) -> float:
        if self.cost is None:
            raise ValueError("individual not evaluated yet")
        return -self.cost


def _is_pow2(n: int) -> bool:
    return n & (n - 1) == 0


def ga_init(width: int, rng: np.random.Generator, config: GaConfig) -> Individual:
    """Random individual: ripple or Sklansky base (uniform draw) plus
    init_mutations slot flips. Non-power-of-two widths fall back to ripple
    since Sklansky is only defined for powers of two."""
    pick = int(rng.integers(2))
    base = ("ripple", "sklansky")[pick] if _is_pow2(width) else "ripple"
    return Individual(bits=pg.random_bits(width, rng, base, config.init_mutations))


def ga_mutate(bits: np.ndarray, rng: np.random.Generator, max_mutations: int) -> np.ndarray:
    """1..max_mutations single-slot flips, slots drawn with replacement."""
    if max_mutations < 1:
        raise ValueError("max_mutations must be >= 1")
    count = int(rng.integers(1, max_mutations + 1))
    slots = rng.integers(0, len(bits), size=count)
    flips = (np.bincount(slots, minlength=len(bits)) & 1).astype(bool)
    return bits ^ flips


def ga_crossover(p1: np.ndarray, p2: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Per-slot fair coin chooses the donor parent."""
    if len(p1) != len(p2):
        raise ValueError("parents must have equal widths")
    take_first = rng.integers(0, 2, size=len(p1)).astype(bool)
    return np.where(take_first, p1, p2)


def ga_next_generation(
    population: list[Individual], config: GaConfig, rng: np.random.Generator
) -> list[Individual]:
    """Elitist generational replacement. Survivors are the top half by fitness
    (ties broken by first-seen order); breeding happens in the fixed order
    mutation, crossover, elite, fresh for determinism."""
    if not population:
        raise ValueError("empty population")
    width = pg.width_from_slots(len(population[0].bits))
    for ind in population:
        if ind.cost is None:
            raise ValueError("ga_next_generation requires a fully evaluated population")
    ranked = sorted(population, key=lambda ind: ind.cost)  # stable: ties first-seen
    survivors = ranked[: math.ceil(config.survivor_fraction * len(population))]
    n_mut, n_cross, n_elite, n_fresh = config.composition()
    out: list[Individual] = []
    for _ in range(n_mut):
        parent = survivors[int(rng.integers(len(survivors)))]
        out.append(Individual(bits=ga_mutate(parent.bits, rng, config.max_mutations)))
    for _ in range(n_cross):
        i = int(rng.integers(len(survivors)))
        j = int(rng.integers(len(survivors) - 1)) if len(survivors) > 1 else 0
        if len(survivors) > 1 and j >= i:
            j += 1
        out.append(Individual(bits=ga_crossover(survivors[i].bits, survivors[j].bits, rng)))
    out.extend(Individual(bits=e.bits.copy(), cost=e.cost) for e in survivors[:n_elite])
    out.extend(ga_init(width, rng, config) for _ in range(n_fresh))
    return out


@dataclass
class GaEvaluation:
    bitvector: str  # legalized hex
    report: co.CostReport
    generation: int


@dataclass
class GaRunResult:
    populations: list[list[Individual]] = field(default_factory=list)
    history: list[GaEvaluation] = field(default_factory=list)
    exhausted: bool = False

    @property
    def best(self) -> GaEvaluation:
        return min(self.history, key=lambda e: e.report.cost)

    def best_so_far(self) -> list[float]:
        out, best = [], math.inf
        for ev in self.history:
            best = min(best, ev.report.cost)
            out.append(best)
        return out


def _evaluate_population(
    population: list[Individual],
    oracle: co.CachedCostOracle,
    generation: int,
    result: GaRunResult,
) -> bool:
    """Fill in costs via the cached oracle, appending fresh evaluations to the
    history. Returns False when the budget ran out mid-population."""
    pending = [ind for ind in population if ind.cost is None]
    try:
        outcomes = oracle.evaluate_batch([ind.bits for ind in pending])
        exhausted = False
    except co.BudgetExhausted as e:
        outcomes = e.outcomes
        exhausted = True
    for ind, outcome in zip(pending, outcomes):
        ind.cost = outcome.report.cost
        if outcome.fresh:
            result.history.append(
                GaEvaluation(outcome.report.legalized_bitvector, outcome.report, generation)
            )
    return not exhausted


def run_ga(
    width: int,
    ga_config: GaConfig,
    oracle: co.CachedCostOracle,
    rng: np.random.Generator,
    generations: int | None = None,
    max_stale_generations: int = 50,
) -> GaRunResult:
    """Evaluate the initial population, then `generations` replacement rounds
    (None runs until the oracle budget is exhausted). History records every
    fresh evaluation in order for dataset building and best-so-far curves.

    Open-ended runs also stop after max_stale_generations consecutive
    generations without a single fresh evaluation, which happens when a small
    design space is enumerated before the budget runs out.
    """
    if generations is None and oracle.budget.limit is None:
        raise ValueError("open-ended GA run requires an oracle budget limit")
    if generations is not None and generations < 0:
        raise ValueError("generations must be >= 0")
    result = GaRunResult()
    population = [ga_init(width, rng, ga_config) for _ in range(ga_config.population_size)]
    if not _evaluate_population(population, oracle, 0, result):
        result.exhausted = True
        result.populations.append(population)
        return result
    result.populations.append(population)
    g = 0
    stale = 0
    while generations is None or g < generations:
        g += 1
        seen = len(result.history)
        population = ga_next_generation(population, ga_config, rng)
        if not _evaluate_population(population, oracle, g, result):
            result.exhausted = True
            result.populations.append(population)
            return result
        result.populations.append(population)
        stale = stale + 1 if len(result.history) == seen else 0
        if generations is None and stale >= max_stale_generations:
            break
    return result
