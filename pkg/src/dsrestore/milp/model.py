"""Generic MILP containers and conversion to array form."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

CONTINUOUS = "continuous"
BINARY = "binary"
LE, EQ, GE = "<=", "==", ">="
MAXIMIZE, MINIMIZE = "maximize", "minimize"

# solution statuses
OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
GAP_LIMIT = "gap-limit"
NODE_LIMIT = "node-limit"
TIME_LIMIT = "time-limit"
NUMERICAL = "numerical"

FEAS_TOL = 1e-7
INT_TOL = 1e-6
GAP_TOL = 1e-6


class ProblemError(ValueError):
    """Raised for malformed problems (dangling ids, non-finite data)."""


@dataclass(frozen=True)
class Variable:
    id: int
    kind: str = CONTINUOUS
    lower: float = 0.0
    upper: float = math.inf
    name: str = ""

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, BINARY):
            raise ProblemError(f"variable {self.id}: unknown kind {self.kind!r}")
        if math.isnan(self.lower) or math.isnan(self.upper):
            raise ProblemError(f"variable {self.id}: NaN bound")
        if self.lower > self.upper:
            raise ProblemError(f"variable {self.id}: lower {self.lower} > upper {self.upper}")
        if self.kind == BINARY and (self.lower < 0 or self.upper > 1):
            raise ProblemError(f"variable {self.id}: binary bounds must lie in [0, 1]")


@dataclass(frozen=True)
class LinearConstraint:
    coeffs: tuple[tuple[int, float], ...]
    sense: str
    rhs: float
    name: str = ""

    def __post_init__(self):
        if self.sense not in (LE, EQ, GE):
            raise ProblemError(f"constraint {self.name!r}: unknown sense {self.sense!r}")
        if not math.isfinite(self.rhs):
            raise ProblemError(f"constraint {self.name!r}: non-finite rhs")
        seen = set()
        for vid, c in self.coeffs:
            if vid in seen:
                raise ProblemError(f"constraint {self.name!r}: duplicate variable {vid}")
            if not math.isfinite(c):
                raise ProblemError(f"constraint {self.name!r}: non-finite coefficient")
            seen.add(vid)


def merge_terms(terms: Iterable[tuple[int, float]], where: str = "") -> tuple[tuple[int, float], ...]:
    """Sum duplicate ids, drop exact zeros, keep first-appearance order."""
    acc: dict[int, float] = {}
    for vid, c in terms:
        c = float(c)
        if not math.isfinite(c):
            raise ProblemError(f"{where}: non-finite coefficient for variable {vid}")
        acc[vid] = acc.get(vid, 0.0) + c
    return tuple((k, v) for k, v in acc.items() if v != 0.0)


@dataclass(frozen=True, eq=False)
class MilpProblem:
    variables: tuple[Variable, ...]
    constraints: tuple[LinearConstraint, ...]
    objective: tuple[tuple[int, float], ...]
    sense: str = MAXIMIZE
    _arrays: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def n_cons(self) -> int:
        return len(self.constraints)

    @property
    def binary_ids(self) -> list[int]:
        return [v.id for v in self.variables if v.kind == BINARY]

    def column(self, vid: int) -> int:
        return self.arrays()["col"][vid]

    def arrays(self) -> dict:
        """Array form: c, sparse A, row lower/upper, variable lb/ub, integrality."""
        if self._arrays:
            return self._arrays
        col = {v.id: j for j, v in enumerate(self.variables)}
        n = len(self.variables)
        c = np.zeros(n)
        for vid, coef in self.objective:
            c[col[vid]] += coef
        rows, cols, vals = [], [], []
        rlo = np.empty(len(self.constraints))
        rhi = np.empty(len(self.constraints))
        for i, con in enumerate(self.constraints):
            for vid, coef in con.coeffs:
                rows.append(i)
                cols.append(col[vid])
                vals.append(coef)
            rlo[i] = con.rhs if con.sense in (EQ, GE) else -np.inf
            rhi[i] = con.rhs if con.sense in (EQ, LE) else np.inf
        A = sp.csr_matrix((vals, (rows, cols)), shape=(len(self.constraints), n))
        self._arrays.update(
            col=col,
            c=c,
            A=A,
            rlo=rlo,
            rhi=rhi,
            lb=np.array([v.lower for v in self.variables], dtype=float),
            ub=np.array([v.upper for v in self.variables], dtype=float),
            integer=np.array([v.kind == BINARY for v in self.variables]),
        )
        return self._arrays

    def evaluate(self, values: Mapping[int, float]) -> float:
        return float(sum(c * values[v] for v, c in self.objective))

    def max_violation(self, values: Mapping[int, float]) -> float:
        """Largest bound or row violation of a candidate point."""
        a = self.arrays()
        x = np.array([values[v.id] for v in self.variables])
        worst = float(max(np.max(a["lb"] - x, initial=0.0), np.max(x - a["ub"], initial=0.0)))
        if self.constraints:
            ax = a["A"] @ x
            worst = max(worst, float(np.max(a["rlo"] - ax, initial=0.0)), float(np.max(ax - a["rhi"], initial=0.0)))
        return worst

    def relaxed(self) -> "MilpProblem":
        vars_ = tuple(
            Variable(v.id, CONTINUOUS, v.lower, v.upper, v.name) for v in self.variables
        )
        return MilpProblem(vars_, self.constraints, self.objective, self.sense)


@dataclass
class MilpSolution:
    status: str
    values: dict[int, float] = field(default_factory=dict)
    objective: float = math.nan
    gap: float = math.nan
    nodes_explored: int = 0
    dual_bound: float = math.nan
    duals: np.ndarray | None = None
    message: str = ""

    @property
    def has_point(self) -> bool:
        return bool(self.values)


def build_problem(
    variables: Sequence[Variable],
    constraints: Iterable[LinearConstraint | tuple],
    objective: Iterable[tuple[int, float]],
    sense: str = MAXIMIZE,
) -> MilpProblem:
    """Validate references and merge duplicate coefficients.

    Constraints may be given as ``LinearConstraint`` or ``(terms, sense, rhs[, name])``.
    """
    if sense not in (MAXIMIZE, MINIMIZE):
        raise ProblemError(f"unknown objective sense {sense!r}")
    ids = set()
    for v in variables:
        if v.id in ids:
            raise ProblemError(f"duplicate variable id {v.id}")
        ids.add(v.id)
    cons = []
    for k, raw in enumerate(constraints):
        if isinstance(raw, LinearConstraint):
            terms, s, rhs, name = raw.coeffs, raw.sense, raw.rhs, raw.name
        else:
            terms, s, rhs = raw[0], raw[1], raw[2]
            name = raw[3] if len(raw) > 3 else f"c{k}"
        merged = merge_terms(terms, name)
        for vid, _ in merged:
            if vid not in ids:
                raise ProblemError(f"constraint {name!r}: dangling variable reference {vid}")
        cons.append(LinearConstraint(merged, s, float(rhs), name))
    obj = merge_terms(objective, "objective")
    for vid, _ in obj:
        if vid not in ids:
            raise ProblemError(f"objective: dangling variable reference {vid}")
    return MilpProblem(tuple(variables), tuple(cons), obj, sense)


def lagrangian_bound(problem: MilpProblem, duals: np.ndarray, lb=None, ub=None) -> float:
    """Upper bound on a maximization LP from any sign-feasible row multipliers.

    L(y) = y.b + max_{lb<=x<=ub} (c - A^T y).x with y >= 0 on <= rows and
    y <= 0 on >= rows. For minimization the sign of the objective is flipped
    and the returned value is a lower bound.
    """
    a = problem.arrays()
    sign = 1.0 if problem.sense == MAXIMIZE else -1.0
    c = sign * a["c"]
    lb = a["lb"] if lb is None else lb
    ub = a["ub"] if ub is None else ub
    y = np.asarray(duals, dtype=float).copy()
    b = np.where(np.isfinite(a["rhi"]), a["rhi"], a["rlo"])
    y[np.isinf(a["rlo"]) & (y < 0)] = 0.0  # <= rows
    y[np.isinf(a["rhi"]) & (y > 0)] = 0.0  # >= rows
    d = c - a["A"].T @ y
    d[np.abs(d) < 1e-9 * max(1.0, float(np.abs(c).max(initial=0.0)))] = 0.0
    with np.errstate(invalid="ignore"):
        pos = np.where(d > 0, d * ub, 0.0)
        neg = np.where(d < 0, d * lb, 0.0)
    total = float(y @ b + np.sum(pos) + np.sum(neg))
    if math.isnan(total):
        total = math.inf
    return sign * total
