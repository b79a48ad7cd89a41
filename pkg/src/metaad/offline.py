"""Exact offline optimum, weak-duality bound, and empirical ratio summaries."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import kernels
from .online import BUDGET_TOL, SKIP, run_greedy

BRUTE_FORCE_LIMIT = 50_000_000
CHUNK = 200_000


class LimitExceeded(RuntimeError):
    def __init__(self, result):
        self.result = result
        super().__init__(f"search stopped after {result.nodes_explored} nodes; incumbent {result.value}")


class UncertifiedDuals(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


class ZeroOpt(ValueError):
    pass


@dataclass(frozen=True)
class OptResult:
    value: float
    assignment: tuple
    exact: bool
    nodes_explored: int
    bound_used: float


def assignment_value(instance, assignment, flm):
    """Reward of an offline assignment, or None when it breaks a budget."""
    W = instance.bids
    B = instance.budget_array
    load = np.zeros(instance.U)
    for t, u in enumerate(assignment):
        if u == SKIP:
            continue
        if W[t, u] <= 0:
            return None
        load[u] += W[t, u]
    if flm:
        return float(np.minimum(load, B).sum())
    if np.any(load > B + BUDGET_TOL * max(1, instance.V)):
        return None
    return float(load.sum())


def _exact_value(instance, assignment, flm):
    # correctly rounded sums, so equal optima from different searches compare equal
    W = instance.bids
    B = instance.budget_array
    per_node = [[] for _ in range(instance.U)]
    for t, u in enumerate(assignment):
        if u != SKIP:
            per_node[u].append(W[t, u])
    loads = [math.fsum(x) for x in per_node]
    if flm:
        return math.fsum(min(x, b) for x, b in zip(loads, B))
    return math.fsum(loads)


def solve_exact(instance, flm=False, max_nodes=None, time_limit=None, raise_on_limit=False, strict=False):
    """Depth-first branch-and-bound over per-round choices.

    The incumbent starts from greedy.  When a limit stops the search the
    result has ``exact=False`` and ``bound_used`` is an upper bound on the
    optimum; with ``raise_on_limit`` a :class:`LimitExceeded` carries it.
    """
    tol = 0.0 if strict else BUDGET_TOL
    W = instance.bids
    g = run_greedy(instance, flm=flm, strict=strict)
    st = kernels.BnBState(W, instance.budget_array, flm, tol, g.total_reward, np.append(g.decisions, SKIP))
    start = time.monotonic()
    while not st.done:
        step = CHUNK if max_nodes is None else max(1, min(CHUNK, max_nodes - st.explored))
        st.step(step)
        if st.done:
            break
        over_nodes = max_nodes is not None and st.explored >= max_nodes
        over_time = time_limit is not None and time.monotonic() - start > time_limit
        if over_nodes or over_time:
            assignment = tuple(int(u) for u in st.best_node[: instance.V])
            res = OptResult(_exact_value(instance, assignment, flm), assignment, False, st.explored,
                            max(st.best, st.root_bound()))
            if raise_on_limit:
                raise LimitExceeded(res)
            return res
    assignment = tuple(int(u) for u in st.best_node[: instance.V])
    value = _exact_value(instance, assignment, flm)
    return OptResult(value, assignment, True, st.explored, value)


def brute_force(instance, flm=False, strict=False):
    """Enumerate every assignment; only for tiny instances."""
    total = (instance.U + 1) ** instance.V
    if total > BRUTE_FORCE_LIMIT:
        raise ValueError(f"{total} assignments is too many to enumerate")
    tol = 0.0 if strict else BUDGET_TOL
    best, digits = kernels.brute_force_search(np.ascontiguousarray(instance.bids), instance.budget_array, bool(flm), tol)
    assignment = tuple(SKIP if d == instance.U else int(d) for d in digits)
    value = _exact_value(instance, assignment, flm)
    return OptResult(value, assignment, True, total, value)


def dual_upper_bound(dual_trace):
    if not dual_trace.certified:
        raise UncertifiedDuals("run check_dual_feasibility first")
    return dual_trace.D


def _nearest_rank(sorted_desc, p):
    # rank ceil(p/100 * n) in descending order, so p=100 is the minimum
    n = len(sorted_desc)
    k = max(1, math.ceil(p / 100.0 * n))
    return float(sorted_desc[k - 1])


PERCENTILES = (50, 90, 95, 99, 100)


def empirical_cr(alg_rewards, opt_values, percentiles=PERCENTILES):
    r = np.asarray(alg_rewards, dtype=np.float64)
    o = np.asarray(opt_values, dtype=np.float64)
    if r.shape != o.shape:
        raise LengthMismatch(f"{r.size} rewards vs {o.size} optima")
    if r.size == 0:
        raise LengthMismatch("no data")
    if np.any(o <= 0):
        raise ZeroOpt(f"non-positive optimum at index {int(np.argmax(o <= 0))}")
    ratios = r / o
    desc = np.sort(ratios)[::-1]
    return {
        "min_ratio": float(ratios.min()),
        "mean_ratio": float(ratios.mean()),
        "percentiles": {p: _nearest_rank(desc, p) for p in percentiles},
        "ratios": ratios,
    }
