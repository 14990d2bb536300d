"""Dense two-phase tableau simplex for small and medium LPs.

Pricing is Dantzig's rule; after a run of degenerate pivots it switches to
Bland's rule, which cannot cycle. Ratio-test ties go to the lowest basic
column, so the pivot sequence is a pure function of the input arrays.
"""

from __future__ import annotations

import math

import numpy as np

from .model import (
    FEAS_TOL,
    INFEASIBLE,
    MAXIMIZE,
    NUMERICAL,
    OPTIMAL,
    UNBOUNDED,
    MilpProblem,
    MilpSolution,
    lagrangian_bound,
)

PIVOT_TOL = 1e-9
COST_TOL = 1e-9
DEGENERATE_SWITCH = 50


class _Tableau:
    """Row-major tableau with cost row at index -1 and rhs in the last column."""

    def __init__(self, T: np.ndarray, basis: list[int], allowed: np.ndarray):
        self.T = T
        self.basis = basis
        self.allowed = allowed  # columns permitted to enter

    def pivot(self, r: int, j: int):
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        self.basis[r] = j

    def run(self, max_iter: int) -> str:
        T = self.T
        m = T.shape[0] - 1
        degenerate = 0
        for _ in range(max_iter):
            rc = T[-1, :-1]
            cand = np.flatnonzero((rc < -COST_TOL) & self.allowed)
            if cand.size == 0:
                return OPTIMAL
            if degenerate >= DEGENERATE_SWITCH:
                j = int(cand[0])  # Bland
            else:
                j = int(cand[np.argmin(rc[cand])])
            colj = T[:m, j]
            pos = np.flatnonzero(colj > PIVOT_TOL)
            if pos.size == 0:
                return UNBOUNDED
            ratios = T[pos, -1] / colj[pos]
            best = ratios.min()
            ties = pos[ratios <= best + 1e-12 * max(1.0, abs(best))]
            r = int(min(ties, key=lambda i: self.basis[i]))
            degenerate = degenerate + 1 if best <= 1e-12 else 0
            self.pivot(r, j)
            if not np.isfinite(T[-1, -1]):
                return NUMERICAL
        return NUMERICAL


def solve_lp(
    problem: MilpProblem,
    lb: np.ndarray | None = None,
    ub: np.ndarray | None = None,
    max_iter: int | None = None,
) -> MilpSolution:
    """Solve the continuous relaxation of ``problem``.

    ``lb``/``ub`` override the declared variable bounds (used by branch and
    bound). Integrality marks are ignored.
    """
    if problem.n_vars == 0:
        raise ValueError("problem has no variables")
    a = problem.arrays()
    lb = a["lb"] if lb is None else np.asarray(lb, dtype=float)
    ub = a["ub"] if ub is None else np.asarray(ub, dtype=float)
    if np.any(lb > ub + FEAS_TOL):
        return MilpSolution(INFEASIBLE, message="crossed bounds")
    sign = 1.0 if problem.sense == MAXIMIZE else -1.0
    cmin = -sign * a["c"]  # internal form always minimizes
    A = a["A"].toarray()
    m0, n0 = A.shape
    rlo, rhi = a["rlo"], a["rhi"]

    # --- variable substitution x_j = off_j + sum_k S[j,k] x'_k, x' >= 0
    off = np.zeros(n0)
    cols_map = []  # (orig j, sign)
    upper_rows = []  # (std col, width)
    for j in range(n0):
        lo, hi = lb[j], ub[j]
        if math.isfinite(lo) and math.isfinite(hi) and hi - lo <= 0.0:
            off[j] = lo
        elif math.isfinite(lo):
            off[j] = lo
            cols_map.append((j, 1.0))
            if math.isfinite(hi):
                upper_rows.append((len(cols_map) - 1, hi - lo))
        elif math.isfinite(hi):
            off[j] = hi
            cols_map.append((j, -1.0))
        else:
            cols_map.append((j, 1.0))
            cols_map.append((j, -1.0))
    n = len(cols_map)
    idx = np.array([j for j, _ in cols_map], dtype=int)
    sgn = np.array([s for _, s in cols_map])
    As = A[:, idx] * sgn if n else np.zeros((m0, 0))
    cs = cmin[idx] * sgn if n else np.zeros(0)
    const = float(cmin @ off)

    # --- rows: (coefficients, sense, rhs) with sense in {-1: <=, 0: ==, 1: >=}
    shift = A @ off
    senses, rhs = [], []
    for i in range(m0):
        if rlo[i] == rhi[i]:
            senses.append(0)
            rhs.append(rlo[i] - shift[i])
        elif math.isfinite(rhi[i]):
            senses.append(-1)
            rhs.append(rhi[i] - shift[i])
        else:
            senses.append(1)
            rhs.append(rlo[i] - shift[i])
    rows = [As]
    if upper_rows:
        U = np.zeros((len(upper_rows), n))
        for r, (k, width) in enumerate(upper_rows):
            U[r, k] = 1.0
            senses.append(-1)
            rhs.append(width)
        rows.append(U)
    M = np.vstack(rows) if n else np.zeros((len(senses), 0))
    senses = np.array(senses, dtype=int)
    b = np.array(rhs, dtype=float)
    m = M.shape[0]

    if n == 0:
        # every variable fixed: just check feasibility
        ok = np.all(np.where(senses == 0, np.abs(b) <= FEAS_TOL, senses * b <= FEAS_TOL))
        if not ok:
            return MilpSolution(INFEASIBLE, message="fixed point violates a row")
        return _finish(problem, off, np.zeros(m0), lb, ub, sign)

    flip = np.where(b < 0, -1.0, 1.0)
    M = M * flip[:, None]
    b = b * flip
    senses = senses * flip.astype(int)

    # columns: structural | slack/surplus | artificial
    n_slack = int(np.sum(senses != 0))
    art_rows = np.flatnonzero(senses >= 0)
    n_art = art_rows.size
    width = n + n_slack + n_art
    T = np.zeros((m + 1, width + 1))
    T[:m, :n] = M
    T[:m, -1] = b
    basis = [-1] * m
    ident_col = np.empty(m, dtype=int)  # column holding +e_i, for duals
    k = n
    for i in range(m):
        if senses[i] != 0:
            T[i, k] = -float(senses[i])  # +1 slack for <=, -1 surplus for >=
            if senses[i] < 0:
                basis[i] = k
                ident_col[i] = k
            k += 1
    for r, i in enumerate(art_rows):
        T[i, n + n_slack + r] = 1.0
        basis[i] = n + n_slack + r
        ident_col[i] = n + n_slack + r

    limit = max_iter or 50 * (m + width) + 1000
    allowed = np.ones(width, dtype=bool)
    tab = _Tableau(T, basis, allowed)

    if n_art:
        # phase 1: minimise the sum of artificials
        T[-1, :] = 0.0
        T[-1, n + n_slack :width] = 1.0
        for i in art_rows:
            T[-1] -= T[i]
        status = tab.run(limit)
        if status == NUMERICAL:
            return MilpSolution(NUMERICAL, message="phase 1 iteration limit")
        if -T[-1, -1] > FEAS_TOL * max(1.0, np.abs(b).max(initial=0.0)):
            return MilpSolution(INFEASIBLE, message="phase 1 optimum positive")
        # drive zero-level artificials out of the basis
        keep = np.ones(m + 1, dtype=bool)
        for i in range(m):
            if basis[i] >= n + n_slack:
                row = T[i, : n + n_slack]
                nz = np.flatnonzero(np.abs(row) > 1e-7)
                if nz.size:
                    tab.pivot(i, int(nz[0]))
                else:
                    keep[i] = False  # redundant row
        allowed[n + n_slack :] = False
        if not keep.all():
            T = T[keep]
            tab.T = T
            tab.basis = [bcol for bcol, kk in zip(basis, keep[:m]) if kk]
            basis = tab.basis
            m = T.shape[0] - 1

    # phase 2 cost row: reduced costs c - c_B B^-1 A (artificial columns carry cost 0)
    cost = np.zeros(width)
    cost[:n] = cs
    T[-1, :-1] = cost
    T[-1, -1] = 0.0
    for i, bcol in enumerate(basis):
        if cost[bcol] != 0.0:
            T[-1] -= cost[bcol] * T[i]
    status = tab.run(limit)
    if status != OPTIMAL:
        return MilpSolution(status, message=f"phase 2 {status}")

    xs = np.zeros(width)
    for i, bcol in enumerate(basis):
        xs[bcol] = T[i, -1]
    x = off.copy()
    np.add.at(x, idx, sgn * xs[:n])

    # row multipliers y (minimisation form) from the identity columns
    # (identity columns survive the removal of redundant rows unchanged)
    y_std = -T[-1, :-1][ident_col]
    y_orig = (y_std * flip)[:m0]
    u = -y_orig  # multipliers for maximising sign*c
    return _finish(problem, x, u, lb, ub, sign)


def _finish(problem: MilpProblem, x: np.ndarray, u: np.ndarray, lb, ub, sign: float) -> MilpSolution:
    a = problem.arrays()
    obj = float(a["c"] @ x)
    values = {v.id: float(x[j]) for j, v in enumerate(problem.variables)}
    bound = lagrangian_bound(problem, u, lb, ub)
    return MilpSolution(OPTIMAL, values, obj, 0.0, 0, bound, u)
