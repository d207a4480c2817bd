"""Best-first search over an OR-tree of synthesis goals.

Nodes are goals, edges are rule applications. A :class:`~evostrat.strategy.Strategy`
decides two things: the order in which applicable rules are tried at a node
(which also breaks ties between equal-cost nodes) and the per-rule weights
that make up the node cost.

Any problem domain can be searched as long as ``problem.domain`` satisfies
:class:`DomainAdapter`. Domains may additionally offer ``native_search`` with
the same signature as :func:`best_first_search`; it is used when available
and must return outcomes identical to the reference loop here.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Iterator, Optional, Protocol, Sequence

from .errors import ConfigurationError

if TYPE_CHECKING:
    from .strategy import Strategy


@dataclass(frozen=True)
class FeatureVector:
    depth_bucket: int
    open_subgoals_bucket: int
    size_bucket: int


@dataclass(frozen=True)
class Goal:
    domain_id: str
    depth: int
    features: FeatureVector
    payload: Any


@dataclass(frozen=True)
class RuleDescriptor:
    rule_id: int
    group_id: int
    gated_by: Optional[int] = None

    def __post_init__(self):
        if self.gated_by is not None and self.gated_by == self.rule_id:
            raise ConfigurationError(f"rule {self.rule_id} cannot gate itself")


@dataclass(frozen=True)
class Budget:
    """Search limits. ``wall_clock_ms`` is nondeterministic and off by default."""

    max_expansions: int = 10_000
    wall_clock_ms: Optional[float] = None


@dataclass(eq=False)
class SearchNode:
    goal: Goal
    parent: Optional["SearchNode"]
    applied_rule: Optional[int]
    path_rule_set: int  # bitset over rule ids
    path_cost: float
    tiebreak: tuple[int, int]  # (rule rank at parent, insertion counter)
    weight_sum: float = 0.0

    def rule_path(self) -> list[int]:
        rules = []
        node = self
        while node.parent is not None:
            rules.append(node.applied_rule)
            node = node.parent
        rules.reverse()
        return rules


@dataclass(frozen=True)
class SearchOutcome:
    solved: bool
    rules_fired: int
    nodes_expanded: int
    solution_path: tuple[int, ...]
    budget_exhausted: bool


class DomainAdapter(Protocol):
    """The surface a problem domain must provide to be searched."""

    domain_id: str
    rule_count: int
    group_count: int
    bucket_counts: tuple[int, int, int]
    gated_by: Sequence[Optional[int]]  # indexed by rule id

    @property
    def rules(self) -> Sequence[RuleDescriptor]: ...

    def root(self, problem: Any) -> Goal: ...

    def expand(self, goal: Goal, rule: int, problem: Any) -> Optional[Goal]: ...

    def is_solved(self, goal: Goal, problem: Any) -> bool: ...


def check_compatible(domain: DomainAdapter, strategy: "Strategy") -> None:
    if strategy.rule_count != domain.rule_count or strategy.group_count != domain.group_count:
        raise ConfigurationError(
            f"strategy for domain {strategy.domain_id!r} (R={strategy.rule_count}, "
            f"G={strategy.group_count}) does not fit domain {domain.domain_id!r} "
            f"(R={domain.rule_count}, G={domain.group_count})"
        )
    if strategy.weights.variant == "goal_specific" and strategy.weights.buckets != tuple(
        domain.bucket_counts
    ):
        raise ConfigurationError(
            f"strategy bucket grid {strategy.weights.buckets} does not match "
            f"domain bucket grid {tuple(domain.bucket_counts)}"
        )


def _children(
    domain: DomainAdapter, problem: Any, goal: Goal, path_set: int, strategy: "Strategy"
) -> Iterator[tuple[int, Goal]]:
    gated_by = domain.gated_by
    for rule in strategy.rule_order:
        gate = gated_by[rule]
        if gate is not None and path_set >> gate & 1:
            continue
        child = domain.expand(goal, rule, problem)
        if child is not None:
            yield rule, child


def applicable_rules(
    goal: Goal, node: SearchNode, strategy: "Strategy", problem: Any
) -> list[int]:
    """Rules producing a child at ``goal``, gated rules removed, in strategy order.

    Groups are visited in ascending group id; inside a group the strategy's
    permutation decides.
    """
    domain = problem.domain
    check_compatible(domain, strategy)
    return [rule for rule, _ in _children(domain, problem, goal, node.path_rule_set, strategy)]


def node_cost(node: SearchNode, strategy: "Strategy") -> float:
    """Sum of rule weights along the root-to-node path plus the size heuristic.

    Goal-specific weights are looked up with the features of the goal the
    rule was applied to (the parent). Summation runs root to node so the
    result matches the incremental cost used during search bit for bit.
    """
    chain = []
    current = node
    while current.parent is not None:
        chain.append((current.applied_rule, current.parent.goal.features))
        current = current.parent
    total = 0.0
    for rule, features in reversed(chain):
        total += strategy.weight(rule, features)
    return total + node.goal.features.size_bucket


def _solved_outcome(node: SearchNode, fired: int, expanded: int) -> SearchOutcome:
    return SearchOutcome(True, fired, expanded, tuple(node.rule_path()), False)


def best_first_search(
    problem: Any, strategy: "Strategy", budget: Budget = Budget(), *, engine: str = "auto"
) -> SearchOutcome:
    """Run one bounded best-first search.

    Nodes leave the queue in ascending ``(path_cost, rule_rank_at_parent,
    insertion_counter)`` order. A solved goal ends the search as soon as it
    is generated. ``engine`` is ``"auto"`` (domain's native search when it has
    one and no wall clock limit is set), ``"python"`` or ``"native"``.
    """
    if budget.max_expansions < 1:
        raise ValueError("budget.max_expansions must be >= 1")
    domain = problem.domain
    check_compatible(domain, strategy)

    if engine not in ("auto", "python", "native"):
        raise ValueError(f"unknown engine {engine!r}")
    native = getattr(domain, "native_search", None)
    if engine == "native" or (engine == "auto" and native is not None and budget.wall_clock_ms is None):
        if native is None:
            raise ConfigurationError(f"domain {domain.domain_id!r} has no native search")
        if budget.wall_clock_ms is not None:
            raise ConfigurationError("native search does not support a wall clock limit")
        return native(problem, strategy, budget)
    return _python_search(problem, strategy, budget)


def _python_search(problem: Any, strategy: "Strategy", budget: Budget) -> SearchOutcome:
    domain = problem.domain
    deadline = None
    if budget.wall_clock_ms is not None:
        deadline = time.monotonic() + budget.wall_clock_ms / 1000.0

    root_goal = domain.root(problem)
    root = SearchNode(root_goal, None, None, 0, float(root_goal.features.size_bucket), (0, 0))
    if domain.is_solved(root_goal, problem):
        return _solved_outcome(root, 0, 0)

    counter = 1
    queue = [(root.path_cost, 0, 0, root)]
    fired = 0
    expanded = 0
    while queue:
        if expanded >= budget.max_expansions:
            break
        if deadline is not None and time.monotonic() >= deadline:
            break
        _, _, _, node = heapq.heappop(queue)
        expanded += 1
        features = node.goal.features
        for rank, (rule, child_goal) in enumerate(
            _children(domain, problem, node.goal, node.path_rule_set, strategy)
        ):
            fired += 1
            weight_sum = node.weight_sum + strategy.weight(rule, features)
            cost = weight_sum + child_goal.features.size_bucket
            child = SearchNode(
                child_goal, node, rule, node.path_rule_set | (1 << rule), cost,
                (rank, counter), weight_sum,
            )
            if domain.is_solved(child_goal, problem):
                return _solved_outcome(child, fired, expanded)
            heapq.heappush(queue, (cost, rank, counter, child))
            counter += 1
    return SearchOutcome(False, fired, expanded, (), True)


def brute_force_solve(problem: Any, depth_limit: int) -> SearchOutcome:
    """Exhaustive pre-order DFS in ascending rule id order, honoring gating.

    Returns the lexicographically least solution path within ``depth_limit``
    edges. Counters report the work done by the enumeration itself.
    """
    if depth_limit < 0:
        raise ValueError("depth_limit must be >= 0")
    domain = problem.domain
    gated_by = domain.gated_by
    rules = range(domain.rule_count)
    fired = 0
    expanded = 0

    def visit(goal: Goal, path: list[int], path_set: int) -> Optional[list[int]]:
        nonlocal fired, expanded
        if domain.is_solved(goal, problem):
            return path
        if len(path) >= depth_limit:
            return None
        expanded += 1
        for rule in rules:
            gate = gated_by[rule]
            if gate is not None and path_set >> gate & 1:
                continue
            child = domain.expand(goal, rule, problem)
            if child is None:
                continue
            fired += 1
            found = visit(child, path + [rule], path_set | (1 << rule))
            if found is not None:
                return found
        return None

    found = visit(domain.root(problem), [], 0)
    if found is None:
        return SearchOutcome(False, fired, expanded, (), False)
    return SearchOutcome(True, fired, expanded, tuple(found), False)


def gated_tree_size(problem: Any, limit: Optional[int] = None) -> int:
    """Count nodes of the full gated OR-tree (stops early once ``limit`` is exceeded)."""
    domain = problem.domain
    gated_by = domain.gated_by
    count = 0
    stack = [(domain.root(problem), 0)]
    while stack:
        goal, path_set = stack.pop()
        count += 1
        if limit is not None and count > limit:
            return count
        for rule in range(domain.rule_count):
            gate = gated_by[rule]
            if gate is not None and path_set >> gate & 1:
                continue
            child = domain.expand(goal, rule, problem)
            if child is not None:
                stack.append((child, path_set | (1 << rule)))
    return count


def replay(problem: Any, path: Sequence[int]) -> Optional[Goal]:
    """Follow ``path`` from the root; ``None`` if an edge is absent or gated."""
    domain = problem.domain
    goal = domain.root(problem)
    path_set = 0
    for rule in path:
        gate = domain.gated_by[rule]
        if gate is not None and path_set >> gate & 1:
            return None
        goal = domain.expand(goal, rule, problem)
        if goal is None:
            return None
        path_set |= 1 << rule
    return goal
