"""Search strategies and the three mutation operators.

A strategy is a permutation of each rule group plus a weight table. The
ORDER_ONLY kind keeps unit weights forever; GENERAL has one weight per rule;
GOAL_SPECIFIC has one weight per (feature bucket of the goal, rule).

Strategy file format (UTF-8 JSON)::

    {
      "domain_id": "syntree",
      "kind": "order" | "general" | "goal",
      "group_perms": [[0, 10], [1, 11], ..., [9]],
      "weights": {"variant": "general", "data": [w_0, ..., w_{R-1}]}
    }

For goal-specific weights ``"variant"`` is ``"goal_specific"``, ``"data"``
holds one row of R weights per feature bucket (row-major bucket order, see
:func:`feature_bucket_index`) and ``"buckets"`` gives ``[B_d, B_o, B_s]``.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import IO, Any, Sequence, Union

import numpy as np

from .errors import ParseError
from .search import FeatureVector


class Kind(str, enum.Enum):
    ORDER_ONLY = "order"
    GENERAL = "general"
    GOAL_SPECIFIC = "goal"

    @classmethod
    def parse(cls, value: Union[str, "Kind"]) -> "Kind":
        if isinstance(value, Kind):
            return value
        aliases = {"order_only": "order", "goal_specific": "goal"}
        try:
            return cls(aliases.get(value.lower(), value.lower()))
        except ValueError:
            raise ValueError(f"unknown strategy kind {value!r} (order|general|goal)") from None


@dataclass(frozen=True)
class MutationConfig:
    p_move: float = 0.1
    weight_factor_lo: float = 0.8
    weight_factor_hi: float = 1.2

    def __post_init__(self):
        if not 0.0 <= self.p_move <= 1.0:
            raise ValueError(f"p_move must lie in [0, 1], got {self.p_move}")
        if not 0.0 < self.weight_factor_lo <= self.weight_factor_hi:
            raise ValueError("need 0 < weight_factor_lo <= weight_factor_hi")

    @classmethod
    def disabled(cls) -> "MutationConfig":
        return cls(p_move=0.0, weight_factor_lo=1.0, weight_factor_hi=1.0)


def feature_bucket_index(features: FeatureVector, buckets: Sequence[int] = (4, 4, 4)) -> int:
    _, b_o, b_s = buckets
    return (features.depth_bucket * (b_o * b_s)
            + features.open_subgoals_bucket * b_s
            + features.size_bucket)


@dataclass(frozen=True, eq=False)
class WeightTable:
    """Positive weights; shape ``(R,)`` for general, ``(B_d*B_o*B_s, R)`` for goal-specific."""

    variant: str
    data: np.ndarray
    buckets: tuple[int, int, int] = (1, 1, 1)

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        if self.variant == "general":
            if data.ndim != 1:
                raise ValueError("general weights must be one-dimensional")
        elif self.variant == "goal_specific":
            if data.ndim != 2 or data.shape[0] != math.prod(self.buckets):
                raise ValueError(
                    f"goal-specific weights need {math.prod(self.buckets)} bucket rows, "
                    f"got shape {data.shape}"
                )
        else:
            raise ValueError(f"unknown weight variant {self.variant!r}")
        if not (np.all(np.isfinite(data)) and np.all(data > 0)):
            raise ValueError("weights must be strictly positive and finite")

    @property
    def rule_count(self) -> int:
        return self.data.shape[-1]

    def replace_data(self, data: np.ndarray) -> "WeightTable":
        return WeightTable(self.variant, data, self.buckets)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, WeightTable):
            return NotImplemented
        return (self.variant == other.variant and self.buckets == other.buckets
                and self.data.shape == other.data.shape
                and bool(np.array_equal(self.data, other.data)))

    def __hash__(self) -> int:
        return hash((self.variant, self.buckets, self.data.tobytes()))


@dataclass(frozen=True, eq=False)
class Strategy:
    domain_id: str
    group_perms: tuple[tuple[int, ...], ...]
    weights: WeightTable
    kind: Kind

    def __post_init__(self):
        perms = tuple(tuple(int(r) for r in perm) for perm in self.group_perms)
        object.__setattr__(self, "group_perms", perms)
        object.__setattr__(self, "kind", Kind.parse(self.kind))
        seen = [r for perm in perms for r in perm]
        if sorted(seen) != list(range(len(seen))):
            raise ValueError("group permutations must partition the rule ids 0..R-1")
        if any(len(perm) == 0 for perm in perms):
            raise ValueError("every rule group needs at least one rule")
        if self.weights.rule_count != len(seen):
            raise ValueError(
                f"weight table covers {self.weights.rule_count} rules, strategy has {len(seen)}"
            )
        if self.kind is Kind.ORDER_ONLY and not np.all(self.weights.data == 1.0):
            raise ValueError("order-only strategies keep unit weights")

    @property
    def rule_count(self) -> int:
        return self.weights.rule_count

    @property
    def group_count(self) -> int:
        return len(self.group_perms)

    @cached_property
    def rule_order(self) -> tuple[int, ...]:
        return tuple(r for perm in self.group_perms for r in perm)

    @cached_property
    def _weight_rows(self) -> list[list[float]]:
        data = self.weights.data
        return [data.tolist()] if data.ndim == 1 else data.tolist()

    def weight(self, rule: int, features: FeatureVector) -> float:
        if self.weights.variant == "general":
            return self._weight_rows[0][rule]
        return self._weight_rows[feature_bucket_index(features, self.weights.buckets)][rule]

    def key(self) -> tuple:
        """Hashable identity; equal keys give equal search behaviour."""
        w = self.weights
        return (self.domain_id, self.kind.value, self.group_perms, w.variant, w.buckets,
                w.data.tobytes())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Strategy):
            return NotImplemented
        return (self.domain_id == other.domain_id and self.kind == other.kind
                and self.group_perms == other.group_perms and self.weights == other.weights)

    def __hash__(self) -> int:
        return hash(self.key())


def _groups_of(domain: Any) -> list[list[int]]:
    groups: list[list[int]] = [[] for _ in range(domain.group_count)]
    for rule in sorted(domain.rules, key=lambda r: r.rule_id):
        groups[rule.group_id].append(rule.rule_id)
    return groups


def default_strategy(domain: Any, kind: Union[Kind, str] = Kind.GENERAL) -> Strategy:
    """Identity permutations and unit weights."""
    kind = Kind.parse(kind)
    rule_count = domain.rule_count
    if kind is Kind.GOAL_SPECIFIC:
        buckets = tuple(domain.bucket_counts)
        weights = WeightTable("goal_specific", np.ones((math.prod(buckets), rule_count)), buckets)
    else:
        weights = WeightTable("general", np.ones(rule_count))
    perms = tuple(tuple(group) for group in _groups_of(domain))
    return Strategy(domain.domain_id, perms, weights, kind)


def _mutate_permutation_events(
    perm: Sequence[int], p_move: float, rng: np.random.Generator
) -> tuple[tuple[int, ...], list[int]]:
    # Two draws per position whether or not a move happens, so the stream
    # position after a call depends only on len(perm).
    # Decisions are taken per input position, so every element gets exactly
    # one chance to move wherever earlier moves have shifted it.
    items = list(perm)
    n = len(items)
    moved = []
    for element in perm:
        u = rng.random()
        target = int(rng.integers(n))
        if u < p_move:
            items.remove(element)
            items.insert(target, element)
            moved.append(element)
    return tuple(items), moved


def mutate_permutation(
    perm: Sequence[int], p_move: float, rng: np.random.Generator
) -> tuple[int, ...]:
    """Each element of ``perm``, with probability ``p_move``, is removed and
    reinserted at a uniformly chosen position."""
    return _mutate_permutation_events(perm, p_move, rng)[0]


_TINY = np.finfo(np.float64).tiny


def mutate_weights(table: WeightTable, cfg: MutationConfig, rng: np.random.Generator) -> WeightTable:
    factors = rng.uniform(cfg.weight_factor_lo, cfg.weight_factor_hi, size=table.data.shape)
    # Clamp keeps weights positive even after extreme numbers of shrinking steps.
    return table.replace_data(np.maximum(table.data * factors, _TINY))


def mutate(strategy: Strategy, cfg: MutationConfig, rng: np.random.Generator) -> Strategy:
    """Return a mutant; the permutations always mutate, weights unless ORDER_ONLY."""
    perms = tuple(mutate_permutation(perm, cfg.p_move, rng) for perm in strategy.group_perms)
    weights = strategy.weights
    if strategy.kind is not Kind.ORDER_ONLY:
        weights = mutate_weights(weights, cfg, rng)
    return Strategy(strategy.domain_id, perms, weights, strategy.kind)


# -- serialization ---------------------------------------------------------

def strategy_to_dict(strategy: Strategy) -> dict:
    weights: dict[str, Any] = {"variant": strategy.weights.variant,
                               "data": strategy.weights.data.tolist()}
    if strategy.weights.variant == "goal_specific":
        weights["buckets"] = list(strategy.weights.buckets)
    return {
        "domain_id": strategy.domain_id,
        "kind": strategy.kind.value,
        "group_perms": [list(perm) for perm in strategy.group_perms],
        "weights": weights,
    }


def _require(obj: dict, name: str, types, where: str):
    if not isinstance(obj, dict) or name not in obj:
        raise ParseError("missing field", f"{where}{name}")
    value = obj[name]
    if not isinstance(value, types) or isinstance(value, bool):
        raise ParseError(f"expected {types}, got {type(value).__name__}", f"{where}{name}")
    return value


def _positive_weight(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError("weight must be a number", where)
    value = float(value)
    if not (math.isfinite(value) and value > 0):
        raise ParseError(f"weight must be positive and finite, got {value}", where)
    return value


def strategy_from_dict(obj: Any) -> Strategy:
    if not isinstance(obj, dict):
        raise ParseError("strategy must be a JSON object")
    domain_id = _require(obj, "domain_id", str, "")
    try:
        kind = Kind.parse(_require(obj, "kind", str, ""))
    except ValueError as exc:
        raise ParseError(str(exc), "kind") from None

    raw_perms = _require(obj, "group_perms", list, "")
    perms = []
    seen: set[int] = set()
    for g, perm in enumerate(raw_perms):
        where = f"group_perms[{g}]"
        if not isinstance(perm, list) or not perm:
            raise ParseError("must be a non-empty list of rule ids", where)
        for r in perm:
            if isinstance(r, bool) or not isinstance(r, int) or r < 0:
                raise ParseError(f"invalid rule id {r!r}", where)
            if r in seen:
                raise ParseError(f"duplicate rule {r}", where)
            seen.add(r)
        perms.append(tuple(perm))
    if seen != set(range(len(seen))):
        raise ParseError("rule ids must be exactly 0..R-1", "group_perms")
    rule_count = len(seen)

    weights_obj = _require(obj, "weights", dict, "")
    variant = _require(weights_obj, "variant", str, "weights.")
    data = _require(weights_obj, "data", list, "weights.")
    if variant == "general":
        if len(data) != rule_count:
            raise ParseError(f"expected {rule_count} weights, got {len(data)}", "weights.data")
        values = [_positive_weight(w, f"weights.data[{i}]") for i, w in enumerate(data)]
        table = WeightTable("general", np.array(values))
    elif variant == "goal_specific":
        buckets = _require(weights_obj, "buckets", list, "weights.")
        if len(buckets) != 3 or not all(isinstance(b, int) and b >= 1 for b in buckets):
            raise ParseError("must be three positive integers", "weights.buckets")
        if len(data) != math.prod(buckets):
            raise ParseError(f"expected {math.prod(buckets)} bucket rows", "weights.data")
        rows = []
        for b, row in enumerate(data):
            if not isinstance(row, list) or len(row) != rule_count:
                raise ParseError(f"expected {rule_count} weights", f"weights.data[{b}]")
            rows.append([_positive_weight(w, f"weights.data[{b}][{i}]") for i, w in enumerate(row)])
        table = WeightTable("goal_specific", np.array(rows), tuple(buckets))
    else:
        raise ParseError(f"unknown variant {variant!r}", "weights.variant")

    if kind is Kind.GOAL_SPECIFIC and variant != "goal_specific":
        raise ParseError("goal kind needs goal_specific weights", "weights.variant")
    if kind is not Kind.GOAL_SPECIFIC and variant != "general":
        raise ParseError(f"{kind.value} kind needs general weights", "weights.variant")
    if kind is Kind.ORDER_ONLY and not np.all(table.data == 1.0):
        raise ParseError("order-only strategies must have unit weights", "weights.data")
    return Strategy(domain_id, tuple(perms), table, kind)


def save_strategy(strategy: Strategy, sink: Union[str, IO[str]]) -> None:
    text = json.dumps(strategy_to_dict(strategy), indent=1) + "\n"
    if isinstance(sink, str):
        with open(sink, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sink.write(text)


def load_strategy(source: Union[str, IO[str]]) -> Strategy:
    try:
        if isinstance(source, str):
            with open(source, encoding="utf-8") as fh:
                obj = json.load(fh)
        else:
            obj = json.load(source)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from None
    return strategy_from_dict(obj)
