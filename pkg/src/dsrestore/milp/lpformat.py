"""Writer for the CPLEX LP text format, for cross-checking with external solvers."""

from __future__ import annotations

import math

from .model import BINARY, EQ, GE, LE, MAXIMIZE, MilpProblem

_SENSE = {LE: "<=", GE: ">=", EQ: "="}


def _num(x: float) -> str:
    # repr round-trips exactly; LP readers accept the exponent form
    return repr(float(x))


def _terms(coeffs) -> str:
    if not coeffs:
        return "0 v0"
    out = []
    for k, (vid, c) in enumerate(coeffs):
        sign = "-" if c < 0 else "+"
        mag = _num(abs(c))
        if k == 0:
            out.append(f"{'-' if c < 0 else ''}{mag} v{vid}")
        else:
            out.append(f"{sign} {mag} v{vid}")
    return " ".join(out)


def write_lp(problem: MilpProblem) -> str:
    """Serialise ``problem``; variable ``id`` becomes ``v<id>``, rows keep their order."""
    lines = [f"\\ {problem.n_vars} variables, {problem.n_cons} constraints"]
    lines.append("Maximize" if problem.sense == MAXIMIZE else "Minimize")
    lines.append(f" obj: {_terms(problem.objective)}")
    lines.append("Subject To")
    for i, con in enumerate(problem.constraints):
        lines.append(f" r{i}: {_terms(con.coeffs)} {_SENSE[con.sense]} {_num(con.rhs)}")
    lines.append("Bounds")
    for v in problem.variables:
        if v.kind == BINARY:
            if (v.lower, v.upper) != (0.0, 1.0):
                lines.append(f" {_num(v.lower)} <= v{v.id} <= {_num(v.upper)}")
            continue
        lo = "-inf" if v.lower == -math.inf else _num(v.lower)
        hi = "+inf" if v.upper == math.inf else _num(v.upper)
        if v.lower == -math.inf and v.upper == math.inf:
            lines.append(f" v{v.id} free")
        else:
            lines.append(f" {lo} <= v{v.id} <= {hi}")
    bins = [f"v{v.id}" for v in problem.variables if v.kind == BINARY]
    if bins:
        lines.append("Binaries")
        for k in range(0, len(bins), 10):
            lines.append(" " + " ".join(bins[k : k + 10]))
    lines.append("End")
    return "\n".join(lines) + "\n"
