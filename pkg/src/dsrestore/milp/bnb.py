"""Best-bound branch and bound over the built-in simplex."""

from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from .model import (
    GAP_LIMIT,
    GAP_TOL,
    INFEASIBLE,
    INT_TOL,
    MAXIMIZE,
    NODE_LIMIT,
    NUMERICAL,
    OPTIMAL,
    TIME_LIMIT,
    UNBOUNDED,
    MilpProblem,
    MilpSolution,
)
from .simplex import solve_lp


@dataclass(frozen=True)
class SolveOptions:
    gap_tol: float = GAP_TOL
    node_limit: int = 100_000
    time_limit: float = math.inf
    int_tol: float = INT_TOL


def relative_gap(bound: float, incumbent: float) -> float:
    if not math.isfinite(incumbent):
        return math.inf
    return max(0.0, bound - incumbent) / max(1.0, abs(incumbent))


def _most_fractional(x: np.ndarray, integer: np.ndarray, tol: float) -> int:
    frac = np.abs(x - np.round(x))
    frac[~integer] = 0.0
    if frac.max(initial=0.0) <= tol:
        return -1
    # closest to one half; argmax returns the lowest index among ties
    score = np.where(frac > tol, 0.5 - np.abs(x - np.floor(x) - 0.5), -1.0)
    return int(np.argmax(np.round(score, 12)))


def _vector(problem: MilpProblem, sol: MilpSolution) -> np.ndarray:
    return np.array([sol.values[v.id] for v in problem.variables])


def solve_milp(problem: MilpProblem, opts: SolveOptions | None = None, trace: list | None = None) -> MilpSolution:
    """Maximise/minimise ``problem`` with binaries enforced.

    Nodes are explored best bound first; equal bounds are taken in creation
    order. If ``trace`` is a list, the incumbent objective is appended each
    time a node is processed (used to check monotonicity).
    """
    opts = opts or SolveOptions()
    a = problem.arrays()
    integer = a["integer"]
    sign = 1.0 if problem.sense == MAXIMIZE else -1.0
    start = time.perf_counter()

    root = solve_lp(problem)
    if root.status != OPTIMAL:
        return MilpSolution(root.status, nodes_explored=1, message=root.message)

    best_x: np.ndarray | None = None
    best_obj = -math.inf  # in maximisation form

    # rounding heuristic at the root
    xr = _vector(problem, root)
    if integer.any():
        lb, ub = a["lb"].copy(), a["ub"].copy()
        fixed = np.clip(np.round(xr[integer]), lb[integer], ub[integer])
        lb[integer] = fixed
        ub[integer] = fixed
        heur = solve_lp(problem, lb, ub)
        if heur.status == OPTIMAL:
            best_x = _vector(problem, heur)
            best_x[integer] = np.round(best_x[integer])
            best_obj = sign * heur.objective

    counter = itertools.count()
    heap = [(-sign * root.objective, next(counter), a["lb"].copy(), a["ub"].copy(), root)]
    nodes = 0
    status = OPTIMAL
    numerical = False
    while heap:
        neg_bound, _, lb, ub, sol = heap[0]
        bound = -neg_bound
        if best_x is not None and relative_gap(bound, best_obj) <= opts.gap_tol:
            break
        if nodes >= opts.node_limit:
            status = NODE_LIMIT
            break
        if time.perf_counter() - start > opts.time_limit:
            status = TIME_LIMIT
            break
        heapq.heappop(heap)
        nodes += 1
        x = _vector(problem, sol)
        j = _most_fractional(x, integer, opts.int_tol)
        if j < 0:
            if bound > best_obj:
                best_obj = bound
                best_x = x.copy()
                best_x[integer] = np.round(best_x[integer])
        else:
            for lo, hi in ((math.floor(x[j]), math.floor(x[j])), (math.ceil(x[j]), math.ceil(x[j]))):
                clb, cub = lb.copy(), ub.copy()
                clb[j], cub[j] = lo, hi
                child = solve_lp(problem, clb, cub)
                if child.status == UNBOUNDED:
                    return MilpSolution(UNBOUNDED, nodes_explored=nodes)
                if child.status == NUMERICAL:
                    numerical = True
                if child.status != OPTIMAL:
                    continue
                cb = sign * child.objective
                if best_x is not None and cb <= best_obj + opts.gap_tol * max(1.0, abs(best_obj)):
                    continue
                heapq.heappush(heap, (-cb, next(counter), clb, cub, child))
        if trace is not None:
            trace.append(best_obj)

    if numerical and status == OPTIMAL:
        status = NUMERICAL  # a pruned subtree could not be certified
    open_bound = max((-h[0] for h in heap), default=-math.inf)
    if best_x is None:
        if status == OPTIMAL:
            return MilpSolution(INFEASIBLE, nodes_explored=nodes)
        return MilpSolution(status, nodes_explored=nodes, dual_bound=sign * open_bound)
    dual = max(best_obj, open_bound)
    gap = relative_gap(dual, best_obj)
    if status == OPTIMAL and gap > opts.gap_tol:
        status = GAP_LIMIT
    values = {v.id: float(best_x[j]) for j, v in enumerate(problem.variables)}
    return MilpSolution(status, values, sign * best_obj, gap, nodes, sign * dual)
