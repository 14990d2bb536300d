"""Mixed-integer linear programming: containers, simplex, branch and bound."""

from .bnb import SolveOptions, solve_milp
from .model import (
    BINARY,
    CONTINUOUS,
    EQ,
    GE,
    LE,
    MAXIMIZE,
    MINIMIZE,
    LinearConstraint,
    MilpProblem,
    MilpSolution,
    ProblemError,
    Variable,
    build_problem,
    lagrangian_bound,
)
from .oracle import brute_force_milp
from .simplex import solve_lp

__all__ = [
    "BINARY",
    "CONTINUOUS",
    "EQ",
    "GE",
    "LE",
    "MAXIMIZE",
    "MINIMIZE",
    "LinearConstraint",
    "MilpProblem",
    "MilpSolution",
    "ProblemError",
    "SolveOptions",
    "Variable",
    "brute_force_milp",
    "build_problem",
    "lagrangian_bound",
    "solve_lp",
    "solve_milp",
]
