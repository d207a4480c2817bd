"""The built-in "syntree" domain: seeded synthetic OR-trees with planted solutions.

Every tree node is a 64-bit descriptor::

    bits  0-5   depth
    bits  6-11  size counter (never decreases along an edge)
    bits 12-17  open-subgoal counter
    bits 18-63  node identity

All randomness comes from the splitmix64 finalizer :func:`mix64`, so a
benchmark file denotes the same trees on any platform:

* node key ``k = mix64(payload ^ seed)``; applicability word
  ``a_j = mix64(k + (j + 1) * APPLY_STEP)`` for ``j = rule // 4``. The edge
  exists iff ``depth < max_depth`` and either the 16-bit field
  ``(a_j >> 16 * (rule % 4)) & 0xFFFF`` is below
  ``round(branch_prob * 65536)`` or the edge lies on the planted path.
* edge hash ``h = mix64(k + (rule + 1) * GOLDEN)`` (all sums mod 2**64).
* child: depth + 1; size + 1 iff ``(h >> 16) & 3 == 0``; open subgoals move by
  ``(-1, 0, 0, +1)[(h >> 18) & 3]`` clamped to [0, 63]; identity ``h >> 20``.
* a goal is solved iff it is the planted goal, or
  ``mix64(payload ^ mix64(seed ^ SOLVE_SALT)) < solution_density * 2**64``.
* root: identity ``mix64(seed) >> 20``, depth 0, size 0, one open subgoal.
* planted rules are drawn from ``SplitMix64(seed ^ PLANT_SALT)``: each step
  takes ``u = (next() >> 11) * 2**-53`` and picks from the domain's rule
  preference order with weights ``plant_skew ** rank``, redrawing rules whose
  gating rule is already on the planted path.
* problem seed ``i`` of a benchmark is ``mix64(generator_seed + i * GOLDEN)``;
  planted depth is ``lo + mix64(seed ^ DEPTH_SALT) % (hi - lo + 1)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import IO, Any, Optional, Sequence, Union

import numpy as np

from .errors import ParseError
from .search import Budget, FeatureVector, Goal, RuleDescriptor, SearchOutcome

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
APPLY_STEP = 0xD1B54A32D192ED03
SOLVE_SALT = 0x5EED5011D5EED501
PLANT_SALT = 0x9A7C0FFEE0B1A5ED
DEPTH_SALT = 0xD3E97C1A2B4F6081
PREFERENCE_SALT = 0x7F4A7C159E3779B9

FIELD_BITS = 6
FIELD_MASK = (1 << FIELD_BITS) - 1


def mix64(z: int) -> int:
    """splitmix64 finalizer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        return mix64(self.state)

    def random(self) -> float:
        return (self.next() >> 11) * (1.0 / (1 << 53))


def node_key(seed: int, payload: int) -> int:
    return mix64(payload ^ seed)


def applicability_field(key: int, rule: int) -> int:
    word = mix64((key + (rule // 4 + 1) * APPLY_STEP) & MASK64)
    return (word >> (16 * (rule % 4))) & 0xFFFF


def edge_hash(seed: int, payload: int, rule: int) -> int:
    return mix64((node_key(seed, payload) + (rule + 1) * GOLDEN) & MASK64)


def pack_payload(depth: int, size: int, open_subgoals: int, identity: int) -> int:
    return (identity << 18) | (open_subgoals << 12) | (size << 6) | depth


def unpack_payload(payload: int) -> tuple[int, int, int, int]:
    """Returns ``(depth, size, open_subgoals, identity)``."""
    return (payload & FIELD_MASK, (payload >> 6) & FIELD_MASK,
            (payload >> 12) & FIELD_MASK, payload >> 18)


_OPEN_DELTA = (-1, 0, 0, 1)


def child_payload(payload: int, h: int) -> int:
    depth, size, open_subgoals, _ = unpack_payload(payload)
    if (h >> 16) & 3 == 0:
        size = min(size + 1, FIELD_MASK)
    open_subgoals = min(max(open_subgoals + _OPEN_DELTA[(h >> 18) & 3], 0), FIELD_MASK)
    return pack_payload(depth + 1, size, open_subgoals, h >> 20)


@dataclass(frozen=True)
class Category:
    name: str
    branch_prob: float
    depth_range: tuple[int, int]
    solution_density: float

    @cached_property
    def branch_threshold(self) -> int:
        return int(round(self.branch_prob * 65536))

    @cached_property
    def solve_threshold(self) -> int:
        return min(int(self.solution_density * 2.0**64), MASK64)


# Ordered from easiest to hardest; names follow the data-structure families of
# the original benchmark but carry no semantics.
DEFAULT_CATEGORIES: tuple[Category, ...] = (
    Category("integers", 0.14, (2, 5), 2.0**-12),
    Category("singly_linked_lists", 0.15, (4, 6), 2.0**-14),
    Category("sorted_lists", 0.16, (5, 7), 2.0**-15),
    Category("doubly_linked_lists", 0.17, (6, 8), 2.0**-16),
    Category("lists_of_lists", 0.18, (7, 9), 2.0**-17),
    Category("binary_trees", 0.19, (8, 10), 2.0**-18),
    Category("packed_trees", 0.20, (9, 10), 2.0**-20),
)


@dataclass(frozen=True)
class DomainSpec:
    """Parameters of a syntree domain; also the domain adapter used by search."""

    domain_id: str = "syntree"
    rule_count: int = 15
    group_count: int = 10
    gate_pairs: tuple[tuple[int, int], ...] = ((1, 2),)  # (gated rule, gating rule)
    max_depth: int = 12
    categories: tuple[Category, ...] = DEFAULT_CATEGORIES
    bucket_counts: tuple[int, int, int] = (4, 4, 4)
    plant_skew: float = 0.85

    def __post_init__(self):
        object.__setattr__(self, "gate_pairs", tuple(tuple(p) for p in self.gate_pairs))
        object.__setattr__(self, "bucket_counts", tuple(self.bucket_counts))
        object.__setattr__(self, "categories", tuple(self.categories))
        if not 1 <= self.group_count <= self.rule_count <= 63:
            raise ValueError("need 1 <= group_count <= rule_count <= 63")
        if not 1 <= self.max_depth <= FIELD_MASK:
            raise ValueError(f"max_depth must lie in [1, {FIELD_MASK}]")
        gated = set()
        for gated_rule, gating_rule in self.gate_pairs:
            if not (0 <= gated_rule < self.rule_count and 0 <= gating_rule < self.rule_count):
                raise ValueError(f"gate pair {(gated_rule, gating_rule)} references unknown rules")
            if gated_rule == gating_rule or gated_rule in gated:
                raise ValueError(f"invalid gate pair {(gated_rule, gating_rule)}")
            gated.add(gated_rule)
        if len(self.bucket_counts) != 3 or min(self.bucket_counts) < 1:
            raise ValueError("bucket_counts needs three positive integers")
        if not self.categories:
            raise ValueError("at least one category required")
        names = [c.name for c in self.categories]
        if len(set(names)) != len(names):
            raise ValueError("category names must be unique")
        for c in self.categories:
            lo, hi = c.depth_range
            if not 1 <= lo <= hi <= self.max_depth:
                raise ValueError(f"category {c.name}: depth range outside [1, max_depth]")
            if not 0.0 <= c.branch_prob <= 1.0 or not 0.0 <= c.solution_density <= 1.0:
                raise ValueError(f"category {c.name}: probabilities must lie in [0, 1]")
        if not self.plant_skew > 0:
            raise ValueError("plant_skew must be positive")

    # -- static structure ------------------------------------------------

    @cached_property
    def rules(self) -> tuple[RuleDescriptor, ...]:
        gates = dict(self.gate_pairs)
        return tuple(RuleDescriptor(r, r % self.group_count, gates.get(r))
                     for r in range(self.rule_count))

    @cached_property
    def gated_by(self) -> tuple[Optional[int], ...]:
        return tuple(rule.gated_by for rule in self.rules)

    @cached_property
    def preference_order(self) -> tuple[int, ...]:
        """Rules sorted from most to least likely on a planted path."""
        return tuple(sorted(range(self.rule_count),
                            key=lambda r: mix64(PREFERENCE_SALT ^ r)))

    def category(self, name: str) -> Category:
        for c in self.categories:
            if c.name == name:
                return c
        raise KeyError(name)

    # -- adapter surface -------------------------------------------------

    def features(self, payload: int) -> FeatureVector:
        depth, size, open_subgoals, _ = unpack_payload(payload)
        b_d, b_o, b_s = self.bucket_counts
        return FeatureVector(
            min(depth * b_d // (self.max_depth + 1), b_d - 1),
            min(open_subgoals, b_o - 1),
            min(size, b_s - 1),
        )

    def goal(self, payload: int) -> Goal:
        return Goal(self.domain_id, payload & FIELD_MASK, self.features(payload), payload)

    def root(self, problem: "Problem") -> Goal:
        return self.goal(problem.root_payload)

    def expand(self, goal: Goal, rule: int, problem: "Problem") -> Optional[Goal]:
        if not 0 <= rule < self.rule_count:
            raise ValueError(f"rule {rule} outside [0, {self.rule_count})")
        payload = goal.payload
        depth = payload & FIELD_MASK
        if depth >= self.max_depth:
            return None
        key = node_key(problem.seed, payload)
        planted = (depth < problem.planted_depth
                   and problem.planted_rules[depth] == rule
                   and problem.planted_payloads[depth] == payload)
        if not planted and applicability_field(key, rule) >= problem.category_spec.branch_threshold:
            return None
        return self.goal(child_payload(payload, mix64((key + (rule + 1) * GOLDEN) & MASK64)))

    def is_solved(self, goal: Goal, problem: "Problem") -> bool:
        if goal.payload == problem.planted_payloads[-1]:
            return True
        threshold = problem.category_spec.solve_threshold
        return threshold > 0 and mix64(goal.payload ^ problem.solve_key) < threshold

    def native_search(self, problem: "Problem", strategy: Any, budget: Budget) -> SearchOutcome:
        from . import _native

        return _native.search(problem, strategy, budget)

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "domain_id": self.domain_id,
            "rule_count": self.rule_count,
            "group_count": self.group_count,
            "gate_pairs": [list(p) for p in self.gate_pairs],
            "max_depth": self.max_depth,
            "bucket_counts": list(self.bucket_counts),
            "plant_skew": self.plant_skew,
            "categories": [
                {"name": c.name, "branch_prob": c.branch_prob,
                 "depth_range": list(c.depth_range), "solution_density": c.solution_density}
                for c in self.categories
            ],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "DomainSpec":
        try:
            categories = tuple(
                Category(str(c["name"]), float(c["branch_prob"]),
                         (int(c["depth_range"][0]), int(c["depth_range"][1])),
                         float(c["solution_density"]))
                for c in obj["categories"]
            )
            return cls(
                domain_id=str(obj["domain_id"]),
                rule_count=int(obj["rule_count"]),
                group_count=int(obj["group_count"]),
                gate_pairs=tuple((int(a), int(b)) for a, b in obj["gate_pairs"]),
                max_depth=int(obj["max_depth"]),
                categories=categories,
                bucket_counts=tuple(int(b) for b in obj["bucket_counts"]),
                plant_skew=float(obj["plant_skew"]),
            )
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise ParseError(f"invalid domain description: {exc}", "domain") from None


DEFAULT_DOMAIN = DomainSpec()


def expand(goal: Goal, rule: int, problem: "Problem") -> Optional[Goal]:
    return problem.domain.expand(goal, rule, problem)


def is_solved(goal: Goal, problem: "Problem") -> bool:
    return problem.domain.is_solved(goal, problem)


def _plant_rules(domain: DomainSpec, seed: int, depth: int) -> tuple[int, ...]:
    stream = SplitMix64(seed ^ PLANT_SALT)
    order = domain.preference_order
    weights = [domain.plant_skew**rank for rank in range(len(order))]
    total = sum(weights)
    gated_by = domain.gated_by
    rules: list[int] = []
    on_path: set[int] = set()
    while len(rules) < depth:
        target = stream.random() * total
        acc = 0.0
        pick = order[-1]
        for rule, w in zip(order, weights):
            acc += w
            if target < acc:
                pick = rule
                break
        gate = gated_by[pick]
        if gate is not None and gate in on_path:
            continue
        rules.append(pick)
        on_path.add(pick)
    return tuple(rules)


@dataclass(frozen=True)
class Problem:
    problem_id: str
    category: str
    seed: int
    planted_depth: int
    domain: DomainSpec = field(default=DEFAULT_DOMAIN, repr=False)

    def __post_init__(self):
        if not 0 <= self.seed <= MASK64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if not 1 <= self.planted_depth <= self.domain.max_depth:
            raise ValueError(f"planted_depth must lie in [1, {self.domain.max_depth}]")
        self.domain.category(self.category)

    @cached_property
    def category_spec(self) -> Category:
        return self.domain.category(self.category)

    @cached_property
    def root_payload(self) -> int:
        return pack_payload(0, 0, 1, mix64(self.seed) >> 20)

    @cached_property
    def solve_key(self) -> int:
        return mix64(self.seed ^ SOLVE_SALT)

    @cached_property
    def planted_rules(self) -> tuple[int, ...]:
        return _plant_rules(self.domain, self.seed, self.planted_depth)

    @cached_property
    def planted_payloads(self) -> tuple[int, ...]:
        """Payloads along the planted path, root first, planted goal last."""
        payloads = [self.root_payload]
        for rule in self.planted_rules:
            payloads.append(child_payload(payloads[-1], edge_hash(self.seed, payloads[-1], rule)))
        return tuple(payloads)

    def to_dict(self) -> dict:
        return {"problem_id": self.problem_id, "category": self.category,
                "seed": self.seed, "planted_depth": self.planted_depth}


@dataclass(frozen=True)
class Benchmark:
    name: str
    problems: tuple[Problem, ...]
    generator_seed: int
    domain: DomainSpec = DEFAULT_DOMAIN

    def __post_init__(self):
        object.__setattr__(self, "problems", tuple(self.problems))
        ids = [p.problem_id for p in self.problems]
        if len(set(ids)) != len(ids):
            raise ValueError("problem ids must be unique")

    def __len__(self) -> int:
        return len(self.problems)

    def __iter__(self):
        return iter(self.problems)

    def by_category(self) -> dict[str, list[Problem]]:
        groups: dict[str, list[Problem]] = {c.name: [] for c in self.domain.categories}
        for p in self.problems:
            groups[p.category].append(p)
        return groups


def generate_benchmark(
    generator_seed: int, count: int = 65, domain: DomainSpec = DEFAULT_DOMAIN,
    name: Optional[str] = None,
) -> Benchmark:
    """Generate ``count`` problems assigned round-robin to the domain's categories."""
    from .search import replay

    if count < 1:
        raise ValueError("count must be >= 1")
    generator_seed &= MASK64
    problems = []
    for i in range(count):
        category = domain.categories[i % len(domain.categories)]
        seed = mix64((generator_seed + i * GOLDEN) & MASK64)
        lo, hi = category.depth_range
        depth = lo + mix64(seed ^ DEPTH_SALT) % (hi - lo + 1)
        problem = Problem(f"{category.name}-{i:03d}", category.name, seed, depth, domain)
        goal = replay(problem, problem.planted_rules)
        if goal is None or goal.depth != depth or not domain.is_solved(goal, problem):
            raise AssertionError(f"planted path of {problem.problem_id} does not replay")
        problems.append(problem)
    return Benchmark(name or f"syntree-{generator_seed:#x}", tuple(problems), generator_seed, domain)


# -- file I/O --------------------------------------------------------------

def benchmark_to_dict(benchmark: Benchmark) -> dict:
    return {
        "name": benchmark.name,
        "generator_seed": benchmark.generator_seed,
        "domain": benchmark.domain.to_dict(),
        "problems": [p.to_dict() for p in benchmark.problems],
    }


def benchmark_from_dict(obj: Any) -> Benchmark:
    if not isinstance(obj, dict):
        raise ParseError("benchmark must be a JSON object")
    for key in ("name", "generator_seed", "domain", "problems"):
        if key not in obj:
            raise ParseError("missing field", key)
    domain = DomainSpec.from_dict(obj["domain"])
    known = {c.name for c in domain.categories}
    problems = []
    seen: set[str] = set()
    if not isinstance(obj["problems"], list):
        raise ParseError("expected a list", "problems")
    for i, raw in enumerate(obj["problems"]):
        where = f"problems[{i}]"
        if not isinstance(raw, dict) or "problem_id" not in raw:
            raise ParseError("missing problem_id", where)
        pid = raw["problem_id"]
        where = f"problems[{i}] ({pid})"
        if pid in seen:
            raise ParseError(f"duplicate problem_id {pid!r}", where)
        seen.add(pid)
        if raw.get("category") not in known:
            raise ParseError(f"unknown category {raw.get('category')!r}", where)
        try:
            problems.append(Problem(str(pid), raw["category"], int(raw["seed"]),
                                    int(raw["planted_depth"]), domain))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(str(exc), where) from None
    try:
        seed = int(obj["generator_seed"])
    except (TypeError, ValueError):
        raise ParseError("must be an integer", "generator_seed") from None
    return Benchmark(str(obj["name"]), tuple(problems), seed, domain)


def save_benchmark(benchmark: Benchmark, sink: Union[str, IO[str]]) -> None:
    text = json.dumps(benchmark_to_dict(benchmark), indent=1) + "\n"
    if isinstance(sink, str):
        with open(sink, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sink.write(text)


def load_benchmark(source: Union[str, IO[str]]) -> Benchmark:
    try:
        if isinstance(source, str):
            with open(source, encoding="utf-8") as fh:
                obj = json.load(fh)
        else:
            obj = json.load(source)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from None
    return benchmark_from_dict(obj)


def problem_arrays(problem: Problem) -> tuple[np.ndarray, np.ndarray]:
    """Planted payloads (uint64) and planted rules (int64) for the native kernel."""
    return (np.array(problem.planted_payloads, dtype=np.uint64),
            np.array(problem.planted_rules, dtype=np.int64))
