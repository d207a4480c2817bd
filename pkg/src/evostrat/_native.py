"""Compiled best-first search for syntree problems.

Mirrors ``search._python_search`` step for step (same queue order, same
counters, same float summation order); tests check both engines agree.
The kernel releases the GIL so fitness evaluation can use threads.
"""

from __future__ import annotations

import threading

import numpy as np
from numba import njit

from .search import Budget, SearchOutcome

_U = np.uint64
_M1 = _U(0xBF58476D1CE4E5B9)
_M2 = _U(0x94D049BB133111EB)
_GOLDEN = _U(0x9E3779B97F4A7C15)
_APPLY_STEP = _U(0xD1B54A32D192ED03)
_LOW16 = _U(0xFFFF)
_FIELD = _U(63)
_NODE_MASK = np.int64((1 << 40) - 1)


@njit(inline="always")
def _mix64(z):
    z = (z ^ (z >> _U(30))) * _M1
    z = (z ^ (z >> _U(27))) * _M2
    return z ^ (z >> _U(31))


@njit(inline="always")
def _less(cost_a, key_a, cost_b, key_b):
    # key packs (rank << 40) | node index, so one integer compare breaks ties.
    return (cost_a < cost_b) | ((cost_a == cost_b) & (key_a < key_b))


@njit(inline="always")
def _solved(payload, planted_goal, solve_key, solve_thr):
    if payload == planted_goal:
        return True
    return solve_thr > _U(0) and _mix64(payload ^ solve_key) < solve_thr


@njit(nogil=True, cache=True)
def _search_kernel(seed, solve_key, solve_thr, branch_thr, max_depth,
                   planted_payloads, planted_rules,
                   gated_by, rule_order, weights, goal_specific,
                   b_d, b_o, b_s, max_expansions, ints, heap_keys, heap_costs):
    n_rules = rule_order.shape[0]
    n_words = (n_rules + 3) // 4
    words = np.empty(n_words, dtype=np.uint64)
    planted_depth = planted_rules.shape[0]
    planted_goal = planted_payloads[planted_depth]

    # Node records, one row each: payload, parent, rule, path set, weight sum.
    nodes = ints
    nodes_u = ints.view(np.uint64)
    nodes_f = ints.view(np.float64)
    heap_key = heap_keys
    heap_cost = heap_costs

    root = planted_payloads[0]
    nodes_u[0, 0] = root
    nodes[0, 1] = -1
    nodes[0, 2] = -1
    nodes[0, 3] = 0
    nodes_f[0, 4] = 0.0
    root_cost = float(min((root >> _U(6)) & _FIELD, _U(b_s - 1)))
    empty_path = np.empty(0, dtype=np.int64)
    if _solved(root, planted_goal, solve_key, solve_thr):
        return True, 0, 0, empty_path

    heap_cost[0] = root_cost
    heap_key[0] = 0
    heap_size = 1
    n_nodes = 1
    fired = 0
    expanded = 0
    found = -1
    weight_row = 0
    while heap_size > 0:
        if expanded >= max_expansions:
            break
        node = heap_key[0] & _NODE_MASK
        heap_size -= 1
        if heap_size > 0:
            # 4-ary heap. Walk the hole down to a leaf along minimal
            # children, then sift the last element up from there.
            last_cost = heap_cost[heap_size]
            last_key = heap_key[heap_size]
            i = 0
            while True:
                first = 4 * i + 1
                if first >= heap_size:
                    break
                best = first
                end = min(first + 4, heap_size)
                for child in range(first + 1, end):
                    if _less(heap_cost[child], heap_key[child], heap_cost[best], heap_key[best]):
                        best = child
                heap_cost[i] = heap_cost[best]
                heap_key[i] = heap_key[best]
                i = best
            while i > 0:
                up = (i - 1) >> 2
                if _less(last_cost, last_key, heap_cost[up], heap_key[up]):
                    heap_cost[i] = heap_cost[up]
                    heap_key[i] = heap_key[up]
                    i = up
                else:
                    break
            heap_cost[i] = last_cost
            heap_key[i] = last_key
        expanded += 1

        p = nodes_u[node, 0]
        depth = p & _FIELD
        if depth >= _U(max_depth):
            continue
        size = (p >> _U(6)) & _FIELD
        open_sub = (p >> _U(12)) & _FIELD
        if goal_specific:
            d_bucket = min(np.int64(depth) * b_d // (max_depth + 1), b_d - 1)
            o_bucket = min(np.int64(open_sub), b_o - 1)
            s_bucket = min(np.int64(size), b_s - 1)
            weight_row = d_bucket * (b_o * b_s) + o_bucket * b_s + s_bucket
        on_planted = (np.int64(depth) < planted_depth
                      and planted_payloads[np.int64(depth)] == p)
        pset = nodes[node, 3]
        parent_wsum = nodes_f[node, 4]
        base = _mix64(p ^ seed)
        for j in range(n_words):
            words[j] = _mix64(base + _U(j + 1) * _APPLY_STEP)
        child_rank = 0
        for k in range(n_rules):
            r = rule_order[k]
            gate = gated_by[r]
            if gate >= 0 and (pset >> gate) & 1:
                continue
            field = (words[r >> 2] >> _U(16 * (r & 3))) & _LOW16
            if field >= branch_thr:
                if not (on_planted and planted_rules[np.int64(depth)] == r):
                    continue
            h = _mix64(base + _U(r + 1) * _GOLDEN)
            c_size = size
            if (h >> _U(16)) & _U(3) == _U(0):
                c_size = min(size + _U(1), _FIELD)
            delta = (h >> _U(18)) & _U(3)
            c_open = open_sub
            if delta == _U(0):
                if c_open > _U(0):
                    c_open -= _U(1)
            elif delta == _U(3):
                c_open = min(c_open + _U(1), _FIELD)
            cp = ((h >> _U(20)) << _U(18)) | (c_open << _U(12)) | (c_size << _U(6)) | (depth + _U(1))

            c = n_nodes
            n_nodes += 1
            fired += 1
            w = parent_wsum + weights[weight_row, r]
            nodes_u[c, 0] = cp
            nodes[c, 1] = node
            nodes[c, 2] = r
            nodes[c, 3] = pset | (np.int64(1) << r)
            nodes_f[c, 4] = w
            c_cost = w + float(min(c_size, _U(b_s - 1)))
            c_key = (np.int64(child_rank) << 40) | c
            child_rank += 1
            if _solved(cp, planted_goal, solve_key, solve_thr):
                found = c
                break
            i = heap_size
            heap_size += 1
            while i > 0:
                up = (i - 1) >> 2
                if _less(c_cost, c_key, heap_cost[up], heap_key[up]):
                    heap_cost[i] = heap_cost[up]
                    heap_key[i] = heap_key[up]
                    i = up
                else:
                    break
            heap_cost[i] = c_cost
            heap_key[i] = c_key
        if found >= 0:
            break

    if found < 0:
        return False, fired, expanded, empty_path
    length = 0
    n = found
    while nodes[n, 1] >= 0:
        length += 1
        n = nodes[n, 1]
    path = np.empty(length, dtype=np.int64)
    n = found
    for j in range(length - 1, -1, -1):
        path[j] = nodes[n, 2]
        n = nodes[n, 1]
    return True, fired, expanded, path


def _problem_args(problem):
    cached = problem.__dict__.get("_native_args")
    if cached is None:
        domain = problem.domain
        category = problem.category_spec
        cached = (
            _U(problem.seed),
            _U(problem.solve_key),
            _U(category.solve_threshold),
            _U(category.branch_threshold),
            domain.max_depth,
            np.array(problem.planted_payloads, dtype=np.uint64),
            np.array(problem.planted_rules, dtype=np.int64),
            np.array([-1 if g is None else g for g in domain.gated_by], dtype=np.int64),
        )
        problem.__dict__["_native_args"] = cached
    return cached


def _strategy_args(strategy):
    cached = strategy.__dict__.get("_native_args")
    if cached is None:
        data = strategy.weights.data
        weights = np.ascontiguousarray(data if data.ndim == 2 else data[None, :], dtype=np.float64)
        cached = (np.array(strategy.rule_order, dtype=np.int64), weights,
                  strategy.weights.variant == "goal_specific")
        strategy.__dict__["_native_args"] = cached
    return cached


_workspace = threading.local()


def _buffers(capacity: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    buffers = getattr(_workspace, "buffers", None)
    if buffers is None or buffers[1].shape[0] < capacity:
        buffers = (np.empty((capacity, 8), dtype=np.int64),
                   np.empty(capacity, dtype=np.int64),
                   np.empty(capacity, dtype=np.float64))
        _workspace.buffers = buffers
    return buffers


def search(problem, strategy, budget: Budget) -> SearchOutcome:
    b_d, b_o, b_s = problem.domain.bucket_counts
    ints, heap_keys, heap_costs = _buffers(budget.max_expansions * strategy.rule_count + 1)
    rule_order, weights, goal_specific = _strategy_args(strategy)
    (seed, solve_key, solve_thr, branch_thr, max_depth,
     planted_payloads, planted_rules, gated_by) = _problem_args(problem)
    solved, fired, expanded, path = _search_kernel(
        seed, solve_key, solve_thr, branch_thr, max_depth,
        planted_payloads, planted_rules, gated_by, rule_order, weights, goal_specific,
        b_d, b_o, b_s, budget.max_expansions, ints, heap_keys, heap_costs,
    )
    solved = bool(solved)
    return SearchOutcome(solved, int(fired), int(expanded),
                         tuple(int(r) for r in path), not solved)
