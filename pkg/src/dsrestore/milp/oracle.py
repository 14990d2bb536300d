"""Exhaustive reference solvers and random instance generators for testing."""

from __future__ import annotations

import itertools
import math

import numpy as np

from .model import (
    BINARY,
    CONTINUOUS,
    EQ,
    GE,
    INFEASIBLE,
    LE,
    MAXIMIZE,
    OPTIMAL,
    UNBOUNDED,
    MilpProblem,
    MilpSolution,
    Variable,
    build_problem,
)
from .simplex import solve_lp

MAX_BRUTE_BINARIES = 20


class OracleLimitError(ValueError):
    pass


def brute_force_milp(problem: MilpProblem) -> MilpSolution:
    """Enumerate every binary assignment and solve the remaining LP."""
    a = problem.arrays()
    integer = np.flatnonzero(a["integer"])
    if integer.size > MAX_BRUTE_BINARIES:
        raise OracleLimitError(f"{integer.size} binaries exceeds the oracle limit {MAX_BRUTE_BINARIES}")
    sign = 1.0 if problem.sense == MAXIMIZE else -1.0
    best: MilpSolution | None = None
    count = 0
    for bits in itertools.product((0.0, 1.0), repeat=integer.size):
        lb, ub = a["lb"].copy(), a["ub"].copy()
        vals = np.array(bits)
        if np.any(vals < lb[integer]) or np.any(vals > ub[integer]):
            continue
        lb[integer] = vals
        ub[integer] = vals
        sol = solve_lp(problem, lb, ub)
        count += 1
        if sol.status == UNBOUNDED:
            return MilpSolution(UNBOUNDED, nodes_explored=count)
        if sol.status != OPTIMAL:
            continue
        if best is None or sign * sol.objective > sign * best.objective:
            best = sol
    if best is None:
        return MilpSolution(INFEASIBLE, nodes_explored=count)
    return MilpSolution(OPTIMAL, best.values, best.objective, 0.0, count, best.objective)


def vertex_enumeration_lp(c, A_ub, b_ub, maximize: bool = True) -> tuple[str, float, np.ndarray | None]:
    """Optimise ``c.x`` over ``{x >= 0 : A_ub x <= b_ub}`` by listing vertices.

    Every choice of n active constraints among the m rows and n sign bounds
    is solved at once with a batched linear solve; feasible points are kept.
    Only valid for bounded polyhedra, which the caller guarantees.
    """
    c = np.asarray(c, dtype=float)
    A = np.asarray(A_ub, dtype=float)
    b = np.asarray(b_ub, dtype=float)
    m, n = A.shape
    G = np.vstack([A, -np.eye(n)])
    h = np.concatenate([b, np.zeros(n)])
    combos = np.array(list(itertools.combinations(range(m + n), n)))
    Gs = G[combos]  # (k, n, n)
    hs = h[combos]
    det = np.linalg.det(Gs)
    ok = np.abs(det) > 1e-10
    if not ok.any():
        return INFEASIBLE, math.nan, None
    xs = np.linalg.solve(Gs[ok], hs[ok][..., None])[..., 0]
    feas = np.all(xs @ G.T <= h + 1e-9, axis=1)
    if not feas.any():
        return INFEASIBLE, math.nan, None
    pts = xs[feas]
    vals = pts @ c
    k = int(np.argmax(vals) if maximize else np.argmin(vals))
    return OPTIMAL, float(vals[k]), pts[k]


def random_lp(rng: np.random.Generator, n: int, m: int):
    """Bounded, feasible LP in inequality form: one dense positive row caps x."""
    A = rng.uniform(-1.0, 1.0, size=(m, n))
    A[0] = rng.uniform(0.2, 1.0, size=n)
    x0 = rng.uniform(0.0, 1.0, size=n)
    b = A @ x0 + rng.uniform(0.0, 1.0, size=m)
    c = rng.uniform(-1.0, 1.0, size=n)
    return c, A, b


def lp_problem(c, A, b, maximize: bool = True) -> MilpProblem:
    n = len(c)
    vars_ = [Variable(j, CONTINUOUS, 0.0, math.inf, f"x{j}") for j in range(n)]
    cons = [([(j, A[i, j]) for j in range(n)], LE, b[i], f"r{i}") for i in range(A.shape[0])]
    return build_problem(vars_, cons, [(j, c[j]) for j in range(n)], MAXIMIZE if maximize else "minimize")


def random_milp(
    rng: np.random.Generator,
    max_binaries: int = 12,
    max_continuous: int = 6,
    max_constraints: int = 15,
    infeasible: bool = False,
) -> MilpProblem:
    """Random mixed-binary program with bounded continuous variables.

    With ``infeasible=True`` a pair of contradictory rows is appended.
    """
    nb = int(rng.integers(1, max_binaries + 1))
    nc = int(rng.integers(0, max_continuous + 1))
    m = int(rng.integers(1, max_constraints + 1 - (2 if infeasible else 0)))
    vars_ = [Variable(j, BINARY, 0.0, 1.0, f"z{j}") for j in range(nb)]
    for j in range(nc):
        lo = float(rng.choice([0.0, -1.0]))
        vars_.append(Variable(nb + j, CONTINUOUS, lo, float(rng.uniform(1.0, 3.0)), f"y{j}"))
    n = nb + nc
    cons = []
    for i in range(m):
        k = int(rng.integers(1, n + 1))
        ids = rng.choice(n, size=k, replace=False)
        coefs = np.round(rng.uniform(-3.0, 3.0, size=k), 3)
        sense = [LE, LE, LE, GE, EQ][int(rng.integers(0, 5))] if nc else [LE, LE, GE][int(rng.integers(0, 3))]
        if sense == EQ and not any(int(v) >= nb for v in ids):
            sense = LE
        rhs = float(np.round(rng.uniform(-1.0, 3.0), 3))
        if sense == GE:
            rhs = float(np.round(rng.uniform(-3.0, 1.0), 3))
        cons.append(([(int(v), float(cf)) for v, cf in zip(ids, coefs)], sense, rhs, f"r{i}"))
    if infeasible:
        cons.append(([(0, 1.0)], GE, 0.75, "cut_lo"))
        cons.append(([(0, 1.0)], LE, 0.25, "cut_hi"))
    obj = [(j, float(np.round(rng.uniform(-2.0, 2.0), 3))) for j in range(n)]
    return build_problem(vars_, cons, obj, MAXIMIZE)
