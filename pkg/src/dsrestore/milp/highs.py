"""Backend that hands the array form to HiGHS through SciPy."""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from .bnb import SolveOptions
from .model import (
    INFEASIBLE,
    MAXIMIZE,
    NUMERICAL,
    OPTIMAL,
    TIME_LIMIT,
    UNBOUNDED,
    MilpProblem,
    MilpSolution,
)


def solve_highs(problem: MilpProblem, opts: SolveOptions | None = None) -> MilpSolution:
    opts = opts or SolveOptions()
    a = problem.arrays()
    sign = 1.0 if problem.sense == MAXIMIZE else -1.0
    options = {"mip_rel_gap": opts.gap_tol, "disp": False, "presolve": True}
    if math.isfinite(opts.time_limit):
        options["time_limit"] = opts.time_limit
    if opts.node_limit < 10**9:
        options["node_limit"] = int(opts.node_limit)
    cons = [LinearConstraint(a["A"], a["rlo"], a["rhi"])] if problem.n_cons else []
    res = milp(
        -sign * a["c"],
        constraints=cons,
        integrality=a["integer"].astype(int),
        bounds=Bounds(a["lb"], a["ub"]),
        options=options,
    )
    nodes = int(getattr(res, "mip_node_count", 0) or 0)
    if res.status == 2:
        return MilpSolution(INFEASIBLE, nodes_explored=nodes, message=res.message)
    if res.status == 3:
        return MilpSolution(UNBOUNDED, nodes_explored=nodes, message=res.message)
    if res.x is None:
        status = TIME_LIMIT if res.status == 1 else NUMERICAL
        return MilpSolution(status, nodes_explored=nodes, message=res.message)
    x = np.asarray(res.x, dtype=float).copy()
    x[a["integer"]] = np.round(x[a["integer"]])
    obj = float(a["c"] @ x)
    bound = getattr(res, "mip_dual_bound", None)
    dual = sign * -float(bound) if bound is not None and np.isfinite(bound) else obj
    gap = float(getattr(res, "mip_gap", 0.0) or 0.0)
    status = OPTIMAL if res.status == 0 else TIME_LIMIT
    values = {v.id: float(x[j]) for j, v in enumerate(problem.variables)}
    return MilpSolution(status, values, obj, gap, nodes, dual, message=res.message)


def solve(problem: MilpProblem, backend: str = "highs", opts: SolveOptions | None = None) -> MilpSolution:
    """Dispatch to a solver backend: ``"highs"`` or ``"builtin"``."""
    if backend == "highs":
        return solve_highs(problem, opts)
    if backend == "builtin":
        from .bnb import solve_milp

        return solve_milp(problem, opts)
    raise ValueError(f"unknown solver backend {backend!r}")
