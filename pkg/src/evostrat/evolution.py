"""Elitist genetic algorithm over search strategies.

Each generation the survivors are carried over unmutated and produce mutants:
the champion (best survivor) gets ``champion_mutants`` children, every other
survivor ``non_champion_mutants``. The merged pool is evaluated and the best
``survivors`` individuals move on. With ``algorithm1_mode`` every survivor
gets exactly one mutant instead.
"""

from __future__ import annotations

import csv
import dataclasses
import itertools
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import IO, Callable, Iterator, Optional, Sequence, Union

import numpy as np

from .errors import InvariantError
from .search import Budget, best_first_search
from .strategy import Kind, MutationConfig, Strategy, default_strategy, mutate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Fitness:
    solved: int
    rules_fired_total: int

    def rank_key(self) -> tuple[int, int]:
        """Ascending order of this key is best-first."""
        return (-self.solved, self.rules_fired_total)

    def better_than(self, other: "Fitness") -> bool:
        return self.rank_key() < other.rank_key()

    def at_least_as_good(self, other: "Fitness") -> bool:
        return self.rank_key() <= other.rank_key()


@dataclass(eq=False)
class Individual:
    strategy: Strategy
    fitness: Optional[Fitness] = None
    birth_generation: int = 0
    lineage_id: int = 0
    parent_id: Optional[int] = None

    def carried(self) -> "Individual":
        """Unmutated copy for the next pool; keeps identity and cached fitness."""
        return dataclasses.replace(self)


@dataclass(frozen=True)
class EvolutionConfig:
    generations: int = 40
    survivors: int = 20
    champion_mutants: int = 2
    non_champion_mutants: int = 1
    budget: Budget = Budget()
    mutation: MutationConfig = MutationConfig()
    kind: Kind = Kind.GENERAL
    master_seed: int = 0
    algorithm1_mode: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind.parse(self.kind))
        if self.survivors < 1:
            raise ValueError("survivors must be >= 1")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        if not self.champion_mutants >= self.non_champion_mutants >= 0:
            raise ValueError("need champion_mutants >= non_champion_mutants >= 0")
        if self.master_seed < 0:
            raise ValueError("master_seed must be non-negative")


def mutation_rng(master_seed: int, generation: int, index: int) -> np.random.Generator:
    return np.random.default_rng([master_seed, generation, index])


def evaluate_fitness(strategy: Strategy, problems: Sequence, budget: Budget = Budget()) -> Fitness:
    if not problems:
        raise ValueError("need at least one problem")
    solved = 0
    fired = 0
    for problem in problems:
        outcome = best_first_search(problem, strategy, budget)
        solved += outcome.solved
        fired += outcome.rules_fired
    return Fitness(solved, fired)


class FitnessCache:
    """Evaluates strategies on a fixed problem set, at most once per distinct strategy."""

    def __init__(self, problems: Sequence, budget: Budget, jobs: int = 1):
        if not problems:
            raise ValueError("need at least one problem")
        self.problems = tuple(problems)
        self.budget = budget
        self.jobs = max(1, jobs)
        self._memo: dict[tuple, Fitness] = {}
        self.evaluations = 0

    def __len__(self) -> int:
        return len(self._memo)

    def fill(self, individuals: Sequence[Individual]) -> None:
        pending: dict[tuple, Strategy] = {}
        for ind in individuals:
            if ind.fitness is None:
                key = ind.strategy.key()
                if key not in self._memo:
                    pending.setdefault(key, ind.strategy)
        if pending:
            keys = list(pending)
            strategies = [pending[k] for k in keys]
            if self.jobs > 1 and len(strategies) > 1:
                with ThreadPoolExecutor(self.jobs) as pool:
                    results = list(pool.map(self._evaluate, strategies))
            else:
                results = [self._evaluate(s) for s in strategies]
            self._memo.update(zip(keys, results))
            self.evaluations += len(results)
        for ind in individuals:
            if ind.fitness is None:
                ind.fitness = self._memo[ind.strategy.key()]

    def fitness_of(self, strategy: Strategy) -> Fitness:
        ind = Individual(strategy)
        self.fill([ind])
        return ind.fitness

    def _evaluate(self, strategy: Strategy) -> Fitness:
        return evaluate_fitness(strategy, self.problems, self.budget)


def select(pool: Sequence[Individual], survivors: int) -> list[Individual]:
    """Best ``survivors`` individuals, best first; equal fitness favours older lineage."""
    if not pool:
        raise ValueError("empty pool")
    for ind in pool:
        if ind.fitness is None:
            raise InvariantError(f"individual {ind.lineage_id} selected before evaluation")
    ranked = sorted(pool, key=lambda ind: (ind.fitness.rank_key(), ind.lineage_id))
    return ranked[:survivors]


def next_generation(
    survivors: Sequence[Individual], cfg: EvolutionConfig, generation: int,
    lineage: Iterator[int],
) -> list[Individual]:
    """Build the evaluation pool for ``generation`` from survivors sorted best-first.

    Mutant ``i`` of the pool draws from ``mutation_rng(cfg.master_seed,
    generation, i)``, so the pool does not depend on evaluation order.
    """
    if not survivors:
        raise ValueError("no survivors")

    def child(parent: Individual, index: int) -> Individual:
        rng = mutation_rng(cfg.master_seed, generation, index)
        return Individual(mutate(parent.strategy, cfg.mutation, rng), None, generation,
                          next(lineage), parent.lineage_id)

    pool: list[Individual] = []
    if cfg.algorithm1_mode:
        pool.extend(ind.carried() for ind in survivors)
        for parent in survivors:
            pool.append(child(parent, len(pool)))
        return pool

    for rank, parent in enumerate(survivors):
        pool.append(parent.carried())
        n_mutants = cfg.champion_mutants if rank == 0 else cfg.non_champion_mutants
        for _ in range(n_mutants):
            pool.append(child(parent, len(pool)))
    return pool


def initial_population(domain, cfg: EvolutionConfig, lineage: Iterator[int]) -> list[Individual]:
    base = default_strategy(domain, cfg.kind)
    population = [Individual(base, None, 0, next(lineage))]
    for index in range(1, cfg.survivors):
        rng = mutation_rng(cfg.master_seed, 0, index)
        population.append(Individual(mutate(base, cfg.mutation, rng), None, 0,
                                     next(lineage), population[0].lineage_id))
    return population


@dataclass
class GenerationRecord:
    generation: int
    best: Fitness
    champion_lineage_id: int
    champion: Strategy
    population: list[Fitness]
    pool_size: int
    survivor_count: int
    wall_time: float


@dataclass
class EvolutionTrace:
    records: list[GenerationRecord] = field(default_factory=list)
    best_strategy: Optional[Strategy] = None
    parents: dict[int, Optional[int]] = field(default_factory=dict)
    evaluations: int = 0

    def __len__(self) -> int:
        return len(self.records)

    def best_per_generation(self) -> list[Fitness]:
        return [r.best for r in self.records]


def evolve(
    problems: Sequence, cfg: EvolutionConfig = EvolutionConfig(), *, jobs: int = 1,
    on_generation: Optional[Callable[[GenerationRecord], None]] = None,
) -> tuple[EvolutionTrace, Strategy]:
    if not problems:
        raise ValueError("need at least one problem")
    domain = problems[0].domain
    cache = FitnessCache(problems, cfg.budget, jobs)
    lineage = itertools.count()
    trace = EvolutionTrace()

    def record(generation: int, pool: list[Individual], survivors: list[Individual], t0: float):
        for ind in pool:
            trace.parents.setdefault(ind.lineage_id, ind.parent_id)
        rec = GenerationRecord(
            generation, survivors[0].fitness, survivors[0].lineage_id, survivors[0].strategy,
            [ind.fitness for ind in pool], len(pool), len(survivors), time.perf_counter() - t0,
        )
        trace.records.append(rec)
        log.info("generation %d: solved=%d rules_fired=%d champion=%d",
                 generation, rec.best.solved, rec.best.rules_fired_total, rec.champion_lineage_id)
        if on_generation is not None:
            on_generation(rec)

    t0 = time.perf_counter()
    population = initial_population(domain, cfg, lineage)
    cache.fill(population)
    survivors = select(population, cfg.survivors)
    record(0, population, survivors, t0)

    for generation in range(1, cfg.generations + 1):
        t0 = time.perf_counter()
        pool = next_generation(survivors, cfg, generation, lineage)
        cache.fill(pool)
        survivors = select(pool, cfg.survivors)
        record(generation, pool, survivors, t0)

    trace.best_strategy = survivors[0].strategy
    trace.evaluations = cache.evaluations
    return trace, trace.best_strategy


TRACE_COLUMNS = ("generation", "best_solved", "best_rules_fired", "champion_lineage_id")


def write_trace_csv(trace: EvolutionTrace, sink: Union[str, IO[str]]) -> None:
    def write(fh):
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for r in trace.records:
            writer.writerow((r.generation, r.best.solved, r.best.rules_fired_total,
                             r.champion_lineage_id))

    if isinstance(sink, str):
        with open(sink, "w", encoding="utf-8", newline="") as fh:
            write(fh)
    else:
        write(sink)
