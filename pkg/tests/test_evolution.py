import dataclasses
import io
import itertools

import pytest

from evostrat.errors import InvariantError
from evostrat.evolution import (
    EvolutionConfig, Fitness, FitnessCache, Individual, evaluate_fitness, evolve,
    initial_population, mutation_rng, next_generation, select, write_trace_csv,
)
from evostrat.search import Budget, best_first_search, brute_force_solve
from evostrat.strategy import Kind, MutationConfig, default_strategy, mutate

from toy import ExplicitDomain

QUICK = Budget(1500)


def individuals(fitnesses, start=0):
    s = default_strategy(ExplicitDomain([0], {}))
    return [Individual(s, f, 0, start + i) for i, f in enumerate(fitnesses)]


def test_fitness_order():
    a, b = Fitness(3, 50), Fitness(3, 70)
    assert a.better_than(b) and not b.better_than(a)
    assert Fitness(4, 10_000).better_than(a)
    assert a.at_least_as_good(Fitness(3, 50)) and not a.better_than(Fitness(3, 50))


def test_pre_solved_roots():
    dom = ExplicitDomain([0, 0], {"root": {0: "a"}}, solved={"root"})
    problems = [dom.problem() for _ in range(4)]
    assert evaluate_fitness(default_strategy(dom), problems) == Fitness(4, 0)
    with pytest.raises(ValueError):
        evaluate_fitness(default_strategy(dom), [])


def test_failed_searches_count_towards_rules_fired(small_benchmark):
    s = default_strategy(small_benchmark.domain)
    outs = [best_first_search(p, s, QUICK) for p in small_benchmark.problems]
    assert any(not o.solved for o in outs)
    assert evaluate_fitness(s, small_benchmark.problems, QUICK) == Fitness(
        sum(o.solved for o in outs), sum(o.rules_fired for o in outs))


def test_golden_default_fitness(default_benchmark):
    s = default_strategy(default_benchmark.domain)
    fitness = evaluate_fitness(s, default_benchmark.problems)
    assert fitness == Fitness(54, 488204)


@pytest.mark.slow
def test_golden_fitness_matches_reference_engine(default_benchmark):
    s = default_strategy(default_benchmark.domain)
    solved = fired = 0
    for p in default_benchmark.problems:
        o = best_first_search(p, s, engine="python")
        solved += o.solved
        fired += o.rules_fired
        if o.solved:
            assert brute_force_solve(p, len(o.solution_path)).solved
    assert Fitness(solved, fired) == Fitness(54, 488204)


def test_select_examples():
    pool = individuals([Fitness(i % 7, 100 - i) for i in range(41)])
    chosen = select(pool, 20)
    assert len(chosen) == 20
    keys = [ind.fitness.rank_key() for ind in chosen]
    assert keys == sorted(keys)
    worst_kept = chosen[-1].fitness
    assert all(not ind.fitness.better_than(worst_kept) for ind in pool if ind not in chosen)

    same = individuals([Fitness(2, 5)] * 41)
    same.reverse()
    assert [ind.lineage_id for ind in select(same, 20)] == list(range(20))

    five = individuals([Fitness(1, 9), Fitness(2, 1), Fitness(1, 3), Fitness(0, 0), Fitness(2, 1)])
    assert [ind.lineage_id for ind in select(five, 20)] == [1, 4, 2, 0, 3]


def test_select_requires_fitness():
    pool = individuals([Fitness(1, 1), None])
    with pytest.raises(InvariantError):
        select(pool, 2)
    with pytest.raises(ValueError):
        select([], 3)


def survivors_for(cfg, n):
    s = default_strategy(ExplicitDomain([0, 0, 1], {}), cfg.kind)
    return [Individual(s, Fitness(n - i, i), 0, i) for i in range(n)]


def test_next_generation_default_pool():
    cfg = EvolutionConfig()
    pool = next_generation(survivors_for(cfg, 20), cfg, 1, itertools.count(100))
    assert len(pool) == 41
    assert sum(ind.fitness is not None for ind in pool) == 20
    # champion copy, two champion mutants, then copy + mutant per survivor
    assert [ind.parent_id for ind in pool[:3]] == [None, 0, 0]
    assert [ind.lineage_id for ind in pool[:3]] == [0, 100, 101]
    for rank in range(1, 20):
        copy, child = pool[1 + 2 * rank], pool[2 + 2 * rank]
        assert copy.lineage_id == rank and copy.fitness is not None
        assert child.parent_id == rank and child.fitness is None and child.birth_generation == 1


def test_next_generation_algorithm1_mode():
    cfg = EvolutionConfig(algorithm1_mode=True)
    pool = next_generation(survivors_for(cfg, 20), cfg, 1, itertools.count(100))
    assert len(pool) == 40
    assert all(ind.fitness is not None for ind in pool[:20])
    assert [ind.parent_id for ind in pool[20:]] == list(range(20))


def test_next_generation_single_survivor():
    cfg = EvolutionConfig(survivors=1)
    pool = next_generation(survivors_for(cfg, 1), cfg, 3, itertools.count(10))
    assert len(pool) == 1 + cfg.champion_mutants


def test_mutant_rng_depends_on_generation_and_index():
    cfg = EvolutionConfig()
    surv = survivors_for(cfg, 3)
    a = next_generation(surv, cfg, 4, itertools.count(50))
    b = next_generation(surv, cfg, 4, itertools.count(50))
    assert [x.strategy for x in a] == [y.strategy for y in b]
    expected = mutate(surv[0].strategy, cfg.mutation, mutation_rng(cfg.master_seed, 4, 1))
    assert a[1].strategy == expected


def test_config_validation():
    with pytest.raises(ValueError):
        EvolutionConfig(survivors=0)
    with pytest.raises(ValueError):
        EvolutionConfig(champion_mutants=0, non_champion_mutants=1)
    assert EvolutionConfig(kind="goal").kind is Kind.GOAL_SPECIFIC


def test_initial_population(small_benchmark):
    cfg = EvolutionConfig()
    pop = initial_population(small_benchmark.domain, cfg, itertools.count())
    assert len(pop) == 20
    assert pop[0].strategy == default_strategy(small_benchmark.domain, cfg.kind)
    assert all(ind.parent_id == 0 for ind in pop[1:])


def test_zero_generations(small_benchmark):
    cfg = EvolutionConfig(generations=0, budget=QUICK)
    trace, best = evolve(small_benchmark.problems, cfg)
    assert len(trace) == 1
    assert trace.records[0].pool_size == 20
    cache = FitnessCache(small_benchmark.problems, QUICK)
    pop = initial_population(small_benchmark.domain, cfg, itertools.count())
    cache.fill(pop)
    assert best == select(pop, 20)[0].strategy


@pytest.mark.parametrize("kind", list(Kind))
def test_disabled_mutation_is_stationary(small_benchmark, kind):
    cfg = EvolutionConfig(generations=3, budget=QUICK, kind=kind, mutation=MutationConfig.disabled())
    trace, best = evolve(small_benchmark.problems, cfg)
    assert len({r.best for r in trace.records}) == 1
    assert best == default_strategy(small_benchmark.domain, kind)
    assert trace.evaluations == 1


@pytest.mark.parametrize("algorithm1_mode", [False, True])
def test_elitism_and_bookkeeping(small_benchmark, algorithm1_mode):
    cfg = EvolutionConfig(generations=6, budget=QUICK, master_seed=3, algorithm1_mode=algorithm1_mode)
    trace, best = evolve(small_benchmark.problems, cfg)
    assert len(trace) == 7
    for prev, cur in zip(trace.records, trace.records[1:]):
        assert cur.best.at_least_as_good(prev.best)
        assert cur.pool_size == (40 if algorithm1_mode else 41)
        assert cur.survivor_count == 20
    assert best == trace.records[-1].champion
    # every non-founder has exactly one parent that existed before it
    for lineage, parent in trace.parents.items():
        if parent is not None:
            assert parent < lineage and parent in trace.parents


def test_each_strategy_evaluated_once(small_benchmark, monkeypatch):
    seen = []
    original = FitnessCache._evaluate

    def counting(self, strategy):
        seen.append(strategy.key())
        return original(self, strategy)

    monkeypatch.setattr(FitnessCache, "_evaluate", counting)
    cfg = EvolutionConfig(generations=4, budget=QUICK, kind="order", master_seed=2)
    trace, _ = evolve(small_benchmark.problems, cfg)
    assert len(seen) == len(set(seen)) == trace.evaluations
    # order-only mutants often coincide, so far fewer than 20 + 4 * 21
    assert trace.evaluations < 20 + 4 * 21


def test_parallel_evaluation_matches_sequential(small_benchmark):
    cfg = EvolutionConfig(generations=3, budget=QUICK, kind="goal", master_seed=8)
    a, _ = evolve(small_benchmark.problems, cfg, jobs=1)
    b, _ = evolve(small_benchmark.problems, cfg, jobs=4)
    assert [(r.best, r.champion_lineage_id, r.population) for r in a.records] == \
        [(r.best, r.champion_lineage_id, r.population) for r in b.records]


def test_fitness_cache_evaluates_once(small_benchmark):
    cache = FitnessCache(small_benchmark.problems, QUICK)
    s = default_strategy(small_benchmark.domain)
    first = cache.fitness_of(s)
    clone = dataclasses.replace(s)
    assert cache.fitness_of(clone) == first
    assert cache.evaluations == 1


def test_trace_csv(small_benchmark):
    cfg = EvolutionConfig(generations=2, budget=QUICK)
    trace, _ = evolve(small_benchmark.problems, cfg)
    buf = io.StringIO()
    write_trace_csv(trace, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "generation,best_solved,best_rules_fired,champion_lineage_id"
    assert len(lines) == 4
    r = trace.records[2]
    assert lines[3] == f"2,{r.best.solved},{r.best.rules_fired_total},{r.champion_lineage_id}"
