import io
import json
from collections import Counter

import pytest

from evostrat.benchmark import (
    DEFAULT_DOMAIN, GOLDEN, Benchmark, Category, DomainSpec, Problem, SplitMix64,
    benchmark_from_dict, benchmark_to_dict, expand, generate_benchmark, is_solved,
    load_benchmark, mix64, pack_payload, save_benchmark, unpack_payload,
)
from evostrat.errors import ParseError
from evostrat.search import best_first_search, brute_force_solve, replay
from evostrat.strategy import default_strategy


def test_mix64_reference_values():
    # published splitmix64 outputs for seed 0
    rng = SplitMix64(0)
    assert rng.next() == 0xE220A8397B1DCDAF
    assert rng.next() == 0x6E789E6AA1B965F4
    assert rng.next() == 0x06C45D188009454F
    assert mix64(GOLDEN) == 0xE220A8397B1DCDAF


def test_payload_packing_round_trip():
    p = pack_payload(5, 3, 2, 0x123456789AB)
    assert unpack_payload(p) == (5, 3, 2, 0x123456789AB)


def test_round_robin_category_sizes(default_benchmark):
    sizes = Counter(p.category for p in default_benchmark.problems)
    assert len(default_benchmark) == 65
    names = [c.name for c in DEFAULT_DOMAIN.categories]
    assert [sizes[n] for n in names] == [10, 10, 9, 9, 9, 9, 9]
    assert [p.category for p in default_benchmark.problems[:8]] == names + names[:1]


def test_generation_is_deterministic():
    a, b = generate_benchmark(99, count=20), generate_benchmark(99, count=20)
    assert a == b
    assert generate_benchmark(100, count=20) != a


def test_count_must_be_positive():
    with pytest.raises(ValueError):
        generate_benchmark(1, count=0)


def test_planted_paths_replay_to_solved_goals(default_benchmark):
    domain = default_benchmark.domain
    for p in default_benchmark.problems:
        assert 1 <= p.planted_depth <= domain.max_depth
        lo, hi = domain.category(p.category).depth_range
        assert lo <= p.planted_depth <= hi
        goal = replay(p, p.planted_rules)
        assert goal.depth == p.planted_depth and is_solved(goal, p)
        # planted rules honour gating
        for i, r in enumerate(p.planted_rules):
            gate = domain.gated_by[r]
            assert gate is None or gate not in p.planted_rules[:i]


def test_brute_force_finds_every_planted_solution(default_benchmark):
    for p in default_benchmark.problems:
        assert brute_force_solve(p, p.planted_depth).solved, p.problem_id


def test_expand_is_pure_and_stops_at_max_depth(small_benchmark):
    p = small_benchmark.problems[3]
    root = p.domain.root(p)
    assert [expand(root, r, p) for r in range(15)] == [expand(root, r, p) for r in range(15)]
    goal = root.__class__(root.domain_id, 12, p.domain.features(pack_payload(12, 0, 1, 77)),
                          pack_payload(12, 0, 1, 77))
    assert all(expand(goal, r, p) is None for r in range(15))
    with pytest.raises(ValueError):
        expand(root, 15, p)


def test_children_one_level_deeper_and_size_monotone(small_benchmark):
    for p in small_benchmark.problems:
        root = p.domain.root(p)
        frontier = [root]
        for _ in range(3):
            nxt = []
            for g in frontier:
                for r in range(15):
                    c = expand(g, r, p)
                    if c is None:
                        continue
                    d, size, _, _ = unpack_payload(c.payload)
                    assert d == g.depth + 1 == c.depth
                    assert size >= unpack_payload(g.payload)[1]
                    assert c.features == p.domain.features(c.payload)
                    nxt.append(c)
            frontier = nxt


def test_root_not_solved_without_background():
    domain = DomainSpec(categories=(Category("flat", 0.2, (3, 3), 0.0),))
    bench = generate_benchmark(5, count=10, domain=domain)
    for p in bench.problems:
        assert not is_solved(p.domain.root(p), p)
        assert is_solved(replay(p, p.planted_rules), p)


def test_solved_flag_fixture():
    # frozen values for the first problem of the pinned benchmark
    p = generate_benchmark(0xC0FFEE, count=1).problems[0]
    assert p.seed == mix64(0xC0FFEE) == 0xE6588447CC478205
    payloads = [pack_payload(d, 0, 1, i) for d in (1, 2) for i in range(20000)]
    solved = [k for k, payload in enumerate(payloads) if is_solved(p.domain.goal(payload), p)]
    assert len(solved) == 16
    assert solved[:5] == [187, 5289, 8288, 8555, 14575]


def test_round_trip_default_benchmark(default_benchmark, tmp_path):
    path = str(tmp_path / "b.json")
    save_benchmark(default_benchmark, path)
    assert load_benchmark(path) == default_benchmark
    buf = io.StringIO()
    save_benchmark(default_benchmark, buf)
    assert buf.getvalue() == open(path, encoding="utf-8").read()


def test_duplicate_problem_id_rejected(small_benchmark):
    obj = benchmark_to_dict(small_benchmark)
    obj["problems"][3]["problem_id"] = obj["problems"][1]["problem_id"]
    with pytest.raises(ParseError) as info:
        benchmark_from_dict(obj)
    assert obj["problems"][1]["problem_id"] in str(info.value)


def test_unknown_category_rejected(small_benchmark):
    obj = benchmark_to_dict(small_benchmark)
    obj["problems"][2]["category"] = "hash_maps"
    with pytest.raises(ParseError) as info:
        benchmark_from_dict(obj)
    assert obj["problems"][2]["problem_id"] in str(info.value)


def test_malformed_benchmark_files():
    with pytest.raises(ParseError):
        load_benchmark(io.StringIO("[1, 2"))
    with pytest.raises(ParseError):
        benchmark_from_dict({"name": "x"})
    with pytest.raises(ParseError):
        benchmark_from_dict([])


def test_domain_validation():
    with pytest.raises(ValueError):
        DomainSpec(gate_pairs=((1, 15),))
    with pytest.raises(ValueError):
        DomainSpec(group_count=16)
    with pytest.raises(ValueError):
        DomainSpec(categories=(Category("deep", 0.1, (3, 20), 0.0),))
    with pytest.raises(ValueError):
        Problem("x", "integers", 1, 0, DEFAULT_DOMAIN)
    rules = DEFAULT_DOMAIN.rules
    assert {r.group_id for r in rules} == set(range(10))
    assert DEFAULT_DOMAIN.gated_by[1] == 2


def test_domain_round_trips_through_json():
    domain = DomainSpec(max_depth=6, categories=(Category("a", 0.3, (2, 4), 0.01),), plant_skew=0.5)
    again = DomainSpec.from_dict(json.loads(json.dumps(domain.to_dict())))
    assert again == domain


def test_unique_problem_ids_enforced(small_benchmark):
    problems = small_benchmark.problems
    with pytest.raises(ValueError):
        Benchmark("dup", problems + problems[:1], 0, small_benchmark.domain)


def test_category_difficulty_is_monotone(default_benchmark):
    s = default_strategy(default_benchmark.domain)
    rates = []
    for category, problems in default_benchmark.by_category().items():
        solved = sum(best_first_search(p, s).solved for p in problems)
        rates.append(solved / len(problems))
    assert rates == sorted(rates, reverse=True)
    assert rates[0] == 1.0 and rates[-1] < 0.5
