"""Per-stage rolling-horizon restoration MILP and its decoding."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

import numpy as np

from .milp.model import (
    BINARY,
    CONTINUOUS,
    EQ,
    GE,
    INT_TOL,
    LE,
    MAXIMIZE,
    MINIMIZE,
    OPTIMAL,
    GAP_LIMIT,
    MilpProblem,
    MilpSolution,
    Variable,
    build_problem,
)
from .network import (
    PHASES,
    NetworkModel,
    bus_sort_key,
    compute_bus_blocks,
    equivalent_impedance,
    partition_microgrids,
)

# variable kinds
XB, XK, XG, XL, XBK = "xB", "xK", "xG", "xL", "xBK"
PG, QG, PK, QK, U, MLS = "PG", "QG", "PK", "QK", "U", "MLS"
BINARY_KINDS = (XB, XK, XG, XL, XBK)


class StageInputError(ValueError):
    """Previous-stage data inconsistent with the network."""


@dataclass(frozen=True)
class MilpSettings:
    """Switches for optional rows of the stage model.

    ``load_step_rows`` adds, per microgrid and phase, the row
    sum_l P_l (x_l,t - x_l,t-1) <= MLS_t, so newly picked-up load is bounded
    even when grid-following units could otherwise absorb it.
    ``switch_tiebreak`` re-solves with the restored load pinned at its optimum
    and minimises closed switch-steps, which removes arbitrary closures that
    bring no load inside the horizon.
    """

    big_m_factor: float = 10.0
    frequency_constraints: bool = True
    load_step_rows: bool = True
    switch_tiebreak: bool = True


@dataclass
class StageInputs:
    stage: int
    horizon: int
    bus: dict[str, int]
    line: dict[str, int]
    load: dict[str, int]
    gen: dict[str, int]
    block: dict[int, int]
    dispatch_p: dict[tuple[str, str], float]
    mls_prev: dict[str, float | None]
    df_meas: dict[str, float]  # by forming generator id (its microgrid's drop)
    df_max: float = 0.5
    alpha: float = 0.1

    def validate(self, net: NetworkModel):
        if self.horizon < 1:
            raise StageInputError("horizon must be >= 1")
        if self.alpha < 0:
            raise StageInputError("alpha must be non-negative")
        if not self.df_max > 0:
            raise StageInputError("df_max must be positive")
        for name, d in (("bus", self.bus), ("line", self.line), ("load", self.load), ("gen", self.gen), ("block", self.block)):
            bad = [k for k, v in d.items() if v not in (0, 1)]
            if bad:
                raise StageInputError(f"{name} statuses must be 0/1: {bad[:5]}")
        for k, v in self.df_meas.items():
            if v < 0:
                raise StageInputError(f"negative frequency drop for {k}")
        for lid, on in self.line.items():
            if on and net.lines[lid].faulted:
                raise StageInputError(f"line {lid} is faulted but marked energized")


def initial_inputs(net: NetworkModel, horizon: int, alpha: float = 0.1, df_max: float = 0.5) -> StageInputs:
    """Statuses before the first stage: only grid-forming blocks are live."""
    blocks = compute_bus_blocks(net)
    forming_buses = {g.bus for g in net.generators.values() if g.forming}
    live_blocks = {b.id for b in blocks if forming_buses & set(b.buses)}
    live_buses = {bus for b in blocks if b.id in live_blocks for bus in b.buses}
    return StageInputs(
        stage=1,
        horizon=horizon,
        bus={b: int(b in live_buses) for b in net.buses},
        line={
            k: int(not ln.switchable and not ln.faulted and ln.from_bus in live_buses)
            for k, ln in net.lines.items()
        },
        load={k: 0 for k in net.loads},
        gen={k: int(g.forming) for k, g in net.generators.items()},
        block={b.id: int(b.id in live_blocks) for b in blocks},
        dispatch_p={(k, p): 0.0 for k, g in net.generators.items() for p in g.p_max},
        mls_prev={k: None for k, g in net.generators.items() if g.forming},
        df_meas={k: 0.0 for k, g in net.generators.items() if g.forming},
        df_max=df_max,
        alpha=alpha,
    )


@dataclass
class ModelIndex:
    """Bijection between variable ids and (kind, element, phase, step)."""

    keys: list[tuple] = field(default_factory=list)
    ids: dict[tuple, int] = field(default_factory=dict)
    buses: tuple[str, ...] = ()
    lines: tuple[str, ...] = ()
    loads: tuple[str, ...] = ()
    gens: tuple[str, ...] = ()
    blocks: tuple[int, ...] = ()
    horizon: int = 1
    load_objective: tuple[tuple[int, float], ...] = ()

    def add(self, key: tuple) -> int:
        vid = len(self.keys)
        self.keys.append(key)
        self.ids[key] = vid
        return vid

    def __getitem__(self, key: tuple) -> int:
        return self.ids[key]

    def get(self, key: tuple):
        return self.ids.get(key)

    def key(self, vid: int) -> tuple:
        return self.keys[vid]


@dataclass
class RestorationStage:
    stage: int
    x_bus: dict[str, int]
    x_line: dict[str, int]
    x_gen: dict[str, int]
    x_load: dict[str, int]
    x_block: dict[int, int]
    p_gen: dict[tuple[str, str], float]
    q_gen: dict[tuple[str, str], float]
    p_line: dict[tuple[str, str], float]
    q_line: dict[tuple[str, str], float]
    u_bus: dict[tuple[str, str], float]
    mls: dict[str, float]
    restored_kw: dict[str, float]
    objective: float
    solver_status: str = OPTIMAL
    nodes: int = 0

    def restored_p(self, net: NetworkModel, loads: Iterable[str] | None = None) -> float:
        ids = net.loads if loads is None else loads
        return float(sum(net.loads[k].total_p for k in ids if self.x_load.get(k, 0)))

    def restored_q(self, net: NetworkModel, loads: Iterable[str] | None = None) -> float:
        ids = net.loads if loads is None else loads
        return float(sum(sum(net.loads[k].q.values()) for k in ids if self.x_load.get(k, 0)))


# ----------------------------------------------------------------------------- builder


class _Rows:
    def __init__(self):
        self.rows = []

    def add(self, terms, sense, rhs, name):
        self.rows.append((terms, sense, float(rhs), name))


def big_m(net: NetworkModel, line_id: str, factor: float) -> float:
    """Voltage big-M for a line: ``factor * (U^M - U^m)``, raised if needed.

    Validity needs M >= max(U^M) at the two ends, since a de-energised line
    can sit between a live bus (U <= U^M) and a dead one (U = 0) while its
    flow is forced to zero.
    """
    ln = net.lines[line_id]
    bi, bj = net.buses[ln.from_bus], net.buses[ln.to_bus]
    span = max(bi.v_max_sq - bi.v_min_sq, bj.v_max_sq - bj.v_min_sq)
    need = max(bi.v_max_sq, bj.v_max_sq)
    return max(factor * span, need)


def build_stage_problem(
    net: NetworkModel,
    inputs: StageInputs,
    settings: MilpSettings | None = None,
    buses: Iterable[str] | None = None,
) -> tuple[MilpProblem, ModelIndex]:
    """Assemble the horizon-T model over ``buses`` (default: whole network)."""
    settings = settings or MilpSettings()
    inputs.validate(net)
    T = inputs.horizon
    bus_set = set(net.buses) if buses is None else set(buses)
    bus_ids = tuple(sorted(bus_set, key=bus_sort_key))
    line_ids = tuple(
        k for k, ln in net.lines.items() if ln.from_bus in bus_set and ln.to_bus in bus_set
    )
    load_ids = tuple(k for k, ld in net.loads.items() if ld.bus in bus_set)
    gen_ids = tuple(k for k, g in net.generators.items() if g.bus in bus_set)
    all_blocks = compute_bus_blocks(net)
    blocks = [b for b in all_blocks if b.buses[0] in bus_set]
    block_of = {bus: b.id for b in blocks for bus in b.buses}
    forming = [k for k in gen_ids if net.generators[k].forming]
    forming_blocks = {block_of[net.generators[k].bus] for k in forming}

    for k in line_ids:
        if net.lines[k].faulted and inputs.line.get(k, 0):
            raise StageInputError(f"line {k} is faulted but marked energized")

    idx = ModelIndex(
        buses=bus_ids, lines=line_ids, loads=load_ids, gens=gen_ids,
        blocks=tuple(b.id for b in blocks), horizon=T,
    )
    variables: list[Variable] = []

    def var(key, kind, lo, hi):
        vid = idx.add(key)
        variables.append(Variable(vid, kind, lo, hi, "_".join(str(x) for x in key)))
        return vid

    for t in range(1, T + 1):
        for i in bus_ids:
            var((XB, i, None, t), BINARY, 0.0, 1.0)
        for k in line_ids:
            hi = 0.0 if net.lines[k].faulted else 1.0
            ln = net.lines[k]
            if ln.switchable and block_of.get(ln.from_bus) == block_of.get(ln.to_bus):
                hi = 0.0  # would close a loop inside a block
            var((XK, k, None, t), BINARY, 0.0, hi)
        for g in gen_ids:
            if not net.generators[g].forming:
                var((XG, g, None, t), BINARY, 0.0, 1.0)
        for l in load_ids:
            var((XL, l, None, t), BINARY, 0.0, 1.0)
        for b in blocks:
            lo = 1.0 if b.id in forming_blocks else 0.0
            var((XBK, b.id, None, t), BINARY, lo, 1.0)
        for g in gen_ids:
            gen = net.generators[g]
            for p in gen.phases:
                var((PG, g, p, t), CONTINUOUS, 0.0, gen.p_max.get(p, 0.0))
                var((QG, g, p, t), CONTINUOUS, 0.0, gen.q_max.get(p, 0.0))
        for k in line_ids:
            ln = net.lines[k]
            for p in ln.phases:
                pm = 0.0 if ln.faulted else ln.p_max
                qm = 0.0 if ln.faulted else ln.q_max
                var((PK, k, p, t), CONTINUOUS, -pm, pm)
                var((QK, k, p, t), CONTINUOUS, -qm, qm)
        for i in bus_ids:
            for p in net.buses[i].phases:
                var((U, i, p, t), CONTINUOUS, 0.0, net.buses[i].v_max_sq)
        for g in forming:
            cap = max(net.generators[g].p_max.values(), default=0.0)
            var((MLS, g, None, t), CONTINUOUS, 0.0, cap)

    # forming buses are always live
    fixed_on = {net.generators[g].bus for g in forming}
    variables = [
        replace(v, lower=1.0) if idx.key(v.id)[0] == XB and idx.key(v.id)[1] in fixed_on else v
        for v in variables
    ]

    rows = _Rows()
    R = _Rows.add

    def prev_term(kind: str, elem, t: int, coef: float, terms: list) -> float:
        """Append coef * x_{t-1} to terms; return its constant contribution when t == 1."""
        if t > 1:
            terms.append((idx[(kind, elem, None, t - 1)], coef))
            return 0.0
        src = {XB: inputs.bus, XK: inputs.line, XG: inputs.gen, XL: inputs.load, XBK: inputs.block}[kind]
        return coef * src.get(elem, 0)

    out_lines = defaultdict(list)
    in_lines = defaultdict(list)
    for k in line_ids:
        out_lines[net.lines[k].from_bus].append(k)
        in_lines[net.lines[k].to_bus].append(k)
    loads_at = defaultdict(list)
    for l in load_ids:
        loads_at[net.loads[l].bus].append(l)
    gens_at = defaultdict(list)
    for g in gen_ids:
        gens_at[net.generators[g].bus].append(g)
    rx = {k: equivalent_impedance(net.lines[k].impedance) for k in line_ids}
    sw_of_block = defaultdict(list)
    for k in line_ids:
        ln = net.lines[k]
        if ln.switchable and not ln.faulted:
            bi, bj = block_of[ln.from_bus], block_of[ln.to_bus]
            if bi != bj:
                sw_of_block[bi].append(k)
                sw_of_block[bj].append(k)

    # microgrid membership for the load-step rows
    part = partition_microgrids(net)
    mg_forming = []
    for mg in part.microgrids:
        f = [g for g in mg.forming if g in forming]
        if f:
            mg_forming.append((f, [l for l in mg.loads if l in load_ids]))

    for t in range(1, T + 1):
        # nodal balance, per bus and phase present
        for i in bus_ids:
            for p in net.buses[i].phases:
                for flow, gen_v, qkey in ((PK, PG, "p"), (QK, QG, "q")):
                    terms = []
                    for k in out_lines[i]:
                        if p in net.lines[k].phases:
                            terms.append((idx[(flow, k, p, t)], 1.0))
                    for k in in_lines[i]:
                        if p in net.lines[k].phases:
                            terms.append((idx[(flow, k, p, t)], -1.0))
                    for g in gens_at[i]:
                        if p in net.generators[g].phases:
                            terms.append((idx[(gen_v, g, p, t)], -1.0))
                    for l in loads_at[i]:
                        demand = (net.loads[l].p if qkey == "p" else net.loads[l].q).get(p, 0.0)
                        if demand:
                            terms.append((idx[(XL, l, None, t)], demand))
                    R(rows, terms, EQ, 0.0, f"bal{qkey}[{i},{p},{t}]")
        # line flow limits scaled by status
        for k in line_ids:
            ln = net.lines[k]
            xk = idx[(XK, k, None, t)]
            for p in ln.phases:
                R(rows, [(idx[(PK, k, p, t)], 1.0), (xk, -ln.p_max)], LE, 0.0, f"pmax[{k},{p},{t}]")
                R(rows, [(idx[(PK, k, p, t)], 1.0), (xk, ln.p_max)], GE, 0.0, f"pmin[{k},{p},{t}]")
                R(rows, [(idx[(QK, k, p, t)], 1.0), (xk, -ln.q_max)], LE, 0.0, f"qmax[{k},{p},{t}]")
                R(rows, [(idx[(QK, k, p, t)], 1.0), (xk, ln.q_max)], GE, 0.0, f"qmin[{k},{p},{t}]")
        # grid-following capacity scaled by status
        for g in gen_ids:
            gen = net.generators[g]
            if gen.forming:
                continue
            xg = idx[(XG, g, None, t)]
            for p in gen.phases:
                R(rows, [(idx[(PG, g, p, t)], 1.0), (xg, -gen.p_max.get(p, 0.0))], LE, 0.0, f"pgf[{g},{p},{t}]")
                R(rows, [(idx[(QG, g, p, t)], 1.0), (xg, -gen.q_max.get(p, 0.0))], LE, 0.0, f"qgf[{g},{p},{t}]")
        # linearised voltage drop with big-M relaxation
        for k in line_ids:
            ln = net.lines[k]
            M = big_m(net, k, settings.big_m_factor)
            r_hat, x_hat = rx[k]
            xk = idx[(XK, k, None, t)]
            for p in ln.phases:
                a = PHASES.index(p)
                drop = []
                for q in ln.phases:
                    b = PHASES.index(q)
                    if r_hat[a, b]:
                        drop.append((idx[(PK, k, q, t)], -2.0 * r_hat[a, b]))
                    if x_hat[a, b]:
                        drop.append((idx[(QK, k, q, t)], -2.0 * x_hat[a, b]))
                base = [(idx[(U, ln.from_bus, p, t)], 1.0), (idx[(U, ln.to_bus, p, t)], -1.0)] + drop
                # U_i - U_j - 2(RP + XQ) >= (x - 1) M   and   <= (1 - x) M
                R(rows, base + [(xk, -M)], GE, -M, f"vlo[{k},{p},{t}]")
                R(rows, base + [(xk, M)], LE, M, f"vhi[{k},{p},{t}]")
        # voltage box
        for i in bus_ids:
            bus = net.buses[i]
            xb = idx[(XB, i, None, t)]
            for p in bus.phases:
                R(rows, [(idx[(U, i, p, t)], 1.0), (xb, -bus.v_min_sq)], GE, 0.0, f"umin[{i},{p},{t}]")
                R(rows, [(idx[(U, i, p, t)], 1.0), (xb, -bus.v_max_sq)], LE, 0.0, f"umax[{i},{p},{t}]")
        # connectivity between devices and buses
        for g in gen_ids:
            if not net.generators[g].forming:
                R(rows, [(idx[(XG, g, None, t)], 1.0), (idx[(XB, net.generators[g].bus, None, t)], -1.0)], LE, 0.0, f"gbus[{g},{t}]")
        for k in line_ids:
            ln = net.lines[k]
            xk = idx[(XK, k, None, t)]
            for end in (ln.from_bus, ln.to_bus):
                xb = idx[(XB, end, None, t)]
                if ln.switchable or ln.faulted:
                    R(rows, [(xk, 1.0), (xb, -1.0)], LE, 0.0, f"swend[{k},{end},{t}]")
                else:
                    R(rows, [(xk, 1.0), (xb, -1.0)], EQ, 0.0, f"nswend[{k},{end},{t}]")
        for l in load_ids:
            ld = net.loads[l]
            R(rows, [(idx[(XL, l, None, t)], 1.0), (idx[(XB, ld.bus, None, t)], -1.0)], LE if ld.switchable else EQ, 0.0, f"lbus[{l},{t}]")
        # no re-tripping of energised devices
        for g in gen_ids:
            if not net.generators[g].forming:
                terms = [(idx[(XG, g, None, t)], 1.0)]
                c = prev_term(XG, g, t, -1.0, terms)
                R(rows, terms, GE, -c, f"gmono[{g},{t}]")
        for k in line_ids:
            if net.lines[k].switchable and not net.lines[k].faulted:
                terms = [(idx[(XK, k, None, t)], 1.0)]
                c = prev_term(XK, k, t, -1.0, terms)
                R(rows, terms, GE, -c, f"kmono[{k},{t}]")
        for l in load_ids:
            if net.loads[l].switchable:
                terms = [(idx[(XL, l, None, t)], 1.0)]
                c = prev_term(XL, l, t, -1.0, terms)
                R(rows, terms, GE, -c, f"lmono[{l},{t}]")
        # bus and block status agree
        for b in blocks:
            for i in b.buses:
                R(rows, [(idx[(XB, i, None, t)], 1.0), (idx[(XBK, b.id, None, t)], -1.0)], EQ, 0.0, f"bblk[{i},{t}]")
        for k in line_ids:
            ln = net.lines[k]
            if not ln.switchable or ln.faulted:
                continue
            bi, bj = block_of[ln.from_bus], block_of[ln.to_bus]
            if bi == bj:
                continue
            # closing a switch must newly energise one of its end blocks (no loops)
            terms = [(idx[(XBK, bi, None, t)], 1.0), (idx[(XBK, bj, None, t)], 1.0), (idx[(XK, k, None, t)], -1.0)]
            c = prev_term(XBK, bi, t, -1.0, terms) + prev_term(XBK, bj, t, -1.0, terms) + prev_term(XK, k, t, 1.0, terms)
            R(rows, terms, GE, -c, f"loop[{k},{t}]")
            # a switch may close only next to a block live at the previous step
            terms = [(idx[(XK, k, None, t)], 1.0)]
            c = prev_term(XBK, bi, t, -1.0, terms) + prev_term(XBK, bj, t, -1.0, terms)
            R(rows, terms, LE, -c, f"seq[{k},{t}]")
        for b in blocks:
            sws = sw_of_block[b.id]
            if not sws:
                if b.id not in forming_blocks:
                    R(rows, [(idx[(XBK, b.id, None, t)], 1.0)], LE, 0.0, f"isolated[{b.id},{t}]")
                continue
            # a dead block is picked up through at most one switch per step
            terms = []
            c = 0.0
            for k in sws:
                terms.append((idx[(XK, k, None, t)], 1.0))
                c += prev_term(XK, k, t, -1.0, terms)
            c += prev_term(XBK, b.id, t, -float(len(sws)), terms)
            R(rows, terms, LE, 1.0 - c, f"pickup[{b.id},{t}]")
            if b.id not in forming_blocks:
                # a live block without its own source hangs off a closed switch
                terms = [(idx[(XBK, b.id, None, t)], 1.0)] + [(idx[(XK, k, None, t)], -1.0) for k in sws]
                R(rows, terms, LE, 0.0, f"feed[{b.id},{t}]")

        if settings.frequency_constraints:
            _add_frequency_rows(rows, idx, net, inputs, forming, mg_forming, t, settings)

    obj = []
    for t in range(1, T + 1):
        for l in load_ids:
            ld = net.loads[l]
            w = ld.priority * ld.total_p
            if w:
                obj.append((idx[(XL, l, None, t)], w))
    idx.load_objective = tuple(obj)
    problem = build_problem(variables, rows.rows, obj, MAXIMIZE)
    return problem, idx


def _add_frequency_rows(rows, idx, net, inputs, forming, mg_forming, t, settings):
    for g in forming:
        m = idx[(MLS, g, None, t)]
        if t == 1:
            prev = inputs.mls_prev.get(g)
            if prev is not None:
                bound = update_max_load_step(prev, inputs.alpha, inputs.df_max, inputs.df_meas.get(g, 0.0))
                rows.add([(m, 1.0)], LE, bound, f"mls[{g},{t}]")
        else:
            # the measured drop is held for the whole lookahead; a negative
            # increment is applied only at the stage boundary (floored there)
            inc = max(0.0, inputs.alpha * (inputs.df_max - inputs.df_meas.get(g, 0.0)))
            rows.add([(m, 1.0), (idx[(MLS, g, None, t - 1)], -1.0)], LE, inc, f"mls[{g},{t}]")
        for p in net.generators[g].phases:
            cur = idx[(PG, g, p, t)]
            if t > 1:
                prev_v = idx[(PG, g, p, t - 1)]
                rows.add([(cur, 1.0), (prev_v, -1.0), (m, -1.0)], LE, 0.0, f"ramp+[{g},{p},{t}]")
                rows.add([(cur, 1.0), (prev_v, -1.0), (m, 1.0)], GE, 0.0, f"ramp-[{g},{p},{t}]")
            else:
                p0 = inputs.dispatch_p.get((g, p), 0.0)
                rows.add([(cur, 1.0), (m, -1.0)], LE, p0, f"ramp+[{g},{p},{t}]")
                rows.add([(cur, 1.0), (m, 1.0)], GE, p0, f"ramp-[{g},{p},{t}]")
    if not settings.load_step_rows:
        return
    for gens, loads in mg_forming:
        for p in PHASES:
            terms = []
            const = 0.0
            for l in loads:
                d = net.loads[l].p.get(p, 0.0)
                if not d:
                    continue
                terms.append((idx[(XL, l, None, t)], d))
                if t > 1:
                    terms.append((idx[(XL, l, None, t - 1)], -d))
                else:
                    const += d * inputs.load.get(l, 0)
            if not terms:
                continue
            terms += [(idx[(MLS, g, None, t)], -1.0) for g in gens]
            rows.add(terms, LE, const, f"lstep[{gens[0]},{p},{t}]")


def update_max_load_step(prev: float, alpha: float, df_max: float, df_meas: float) -> float:
    """Next maximum load step: ``max(0, prev + alpha (df_max - df_meas))``."""
    return max(0.0, prev + alpha * (df_max - df_meas))


def add_frequency_constraints(net: NetworkModel, inputs: StageInputs, settings: MilpSettings | None = None,
                              buses: Iterable[str] | None = None) -> tuple[MilpProblem, ModelIndex]:
    """Stage model with the frequency rows switched on (validates alpha and df_max)."""
    if inputs.alpha < 0:
        raise StageInputError("alpha must be non-negative")
    if not inputs.df_max > 0:
        raise StageInputError("df_max must be positive")
    settings = replace(settings or MilpSettings(), frequency_constraints=True)
    return build_stage_problem(net, inputs, settings, buses)


# ----------------------------------------------------------------------------- decoding


def switch_tiebreak_problem(problem: MilpProblem, idx: ModelIndex, optimum: float, rel_tol: float = 1e-7) -> MilpProblem:
    """Same feasible set with restored load pinned near ``optimum``; minimise closed switch-steps."""
    floor = optimum - rel_tol * max(1.0, abs(optimum))
    rows = list(problem.constraints) + [
        (list(idx.load_objective), GE, floor, "load_floor"),
    ]
    obj = [(vid, 1.0) for vid, key in enumerate(idx.keys) if key[0] == XK and problem.variables[vid].upper > 0]
    return build_problem(problem.variables, rows, obj, MINIMIZE)


def _bin(v: float) -> int:
    if abs(v - round(v)) > INT_TOL:
        raise ValueError(f"binary value {v} outside integrality tolerance")
    return int(round(v))


def extract_stage(solution: MilpSolution, idx: ModelIndex, inputs: StageInputs, net: NetworkModel,
                  mg_of_load: Mapping[str, str] | None = None) -> RestorationStage:
    """Keep the first lookahead step of a solved horizon."""
    if solution.status not in (OPTIMAL, GAP_LIMIT) or not solution.values:
        raise ValueError(f"cannot decode a {solution.status} solution")
    vals = solution.values
    t = 1
    get = lambda kind, e, p=None: vals[idx[(kind, e, p, t)]]
    x_bus = {i: _bin(get(XB, i)) for i in idx.buses}
    x_line = {k: _bin(get(XK, k)) for k in idx.lines}
    x_gen = {g: (1 if net.generators[g].forming else _bin(get(XG, g))) for g in idx.gens}
    x_load = {l: _bin(get(XL, l)) for l in idx.loads}
    x_block = {b: _bin(get(XBK, b)) for b in idx.blocks}
    p_gen = {(g, p): get(PG, g, p) for g in idx.gens for p in net.generators[g].phases}
    q_gen = {(g, p): get(QG, g, p) for g in idx.gens for p in net.generators[g].phases}
    p_line = {(k, p): get(PK, k, p) for k in idx.lines for p in net.lines[k].phases}
    q_line = {(k, p): get(QK, k, p) for k in idx.lines for p in net.lines[k].phases}
    u_bus = {(i, p): get(U, i, p) for i in idx.buses for p in net.buses[i].phases}
    mls = {}
    for g in idx.gens:
        if net.generators[g].forming:
            mls[g] = realized_load_step(net, g, x_load, inputs, p_gen)
    restored = defaultdict(float)
    for l, on in x_load.items():
        if on:
            key = mg_of_load.get(l, "all") if mg_of_load else "all"
            restored[key] += net.kw(net.loads[l].total_p)
    obj = sum(net.loads[l].priority * net.loads[l].total_p for l, on in x_load.items() if on)
    return RestorationStage(
        stage=inputs.stage,
        x_bus=x_bus, x_line=x_line, x_gen=x_gen, x_load=x_load, x_block=x_block,
        p_gen=p_gen, q_gen=q_gen, p_line=p_line, q_line=q_line, u_bus=u_bus,
        mls=mls, restored_kw=dict(restored), objective=obj,
        solver_status=solution.status, nodes=solution.nodes_explored,
    )


def realized_load_step(net: NetworkModel, gen_id: str, x_load: Mapping[str, int], inputs: StageInputs,
                       p_gen: Mapping[tuple[str, str], float]) -> float:
    """Smallest maximum-load-step value the retained step needs for ``gen_id``.

    It is the larger of the forming unit's per-phase dispatch change and the
    per-phase load newly picked up in its microgrid.
    """
    gen = net.generators[gen_id]
    ramp = max((abs(p_gen[(gen_id, p)] - inputs.dispatch_p.get((gen_id, p), 0.0)) for p in gen.phases), default=0.0)
    part = partition_microgrids(net)
    loads = next((mg.loads for mg in part.microgrids if gen_id in mg.forming), ())
    step = {p: 0.0 for p in PHASES}
    for l in loads:
        if l in x_load and x_load[l] and not inputs.load.get(l, 0):
            for p, d in net.loads[l].p.items():
                step[p] += d
    return max(ramp, max(step.values()))


# ----------------------------------------------------------------------------- checks


def check_radiality(stage: RestorationStage, net: NetworkModel) -> tuple[bool, list[str]]:
    """Each microgrid's live part is one tree rooted at its grid-forming unit."""
    issues = []
    part = partition_microgrids(net)
    for mg in part.microgrids:
        live = [b for b in mg.buses if stage.x_bus.get(b, 0)]
        if not live:
            continue
        parent = {b: b for b in live}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for k in mg.lines:
            if not stage.x_line.get(k, 0):
                continue
            ln = net.lines[k]
            if ln.from_bus not in parent or ln.to_bus not in parent:
                issues.append(f"{mg.id}: line {k} live with a dead end bus")
                continue
            ra, rb = find(ln.from_bus), find(ln.to_bus)
            if ra == rb:
                issues.append(f"{mg.id}: cycle closed by line {k}")
            else:
                parent[ra] = rb
        roots = {find(b) for b in live}
        if len(roots) > 1:
            issues.append(f"{mg.id}: live buses form {len(roots)} disconnected pieces")
    return not issues, issues


def power_balance_residuals(stage: RestorationStage, net: NetworkModel) -> dict[tuple[str, str, str], float]:
    res = {}
    for i, bus in net.buses.items():
        if i not in stage.x_bus:
            continue
        for p in bus.phases:
            for kind, flows, gens, attr in (("p", stage.p_line, stage.p_gen, "p"), ("q", stage.q_line, stage.q_gen, "q")):
                r = 0.0
                for k, ln in net.lines.items():
                    if (k, p) not in flows:
                        continue
                    if ln.from_bus == i:
                        r += flows[(k, p)]
                    elif ln.to_bus == i:
                        r -= flows[(k, p)]
                for g in net.generators.values():
                    if g.bus == i and (g.id, p) in gens:
                        r -= gens[(g.id, p)]
                for ld in net.loads.values():
                    if ld.bus == i and stage.x_load.get(ld.id, 0):
                        r += getattr(ld, attr).get(p, 0.0)
                res[(i, p, kind)] = r
    return res


def check_power_balance(stage: RestorationStage, net: NetworkModel, tol: float = 1e-6) -> tuple[bool, float]:
    """Largest nodal residual |out - in - generation + restored load|."""
    res = power_balance_residuals(stage, net)
    worst = max((abs(v) for v in res.values()), default=0.0)
    return worst <= tol, worst


def check_voltage_box(stage: RestorationStage, net: NetworkModel, tol: float = 1e-6) -> list[str]:
    issues = []
    for (i, p), u in stage.u_bus.items():
        bus = net.buses[i]
        if stage.x_bus.get(i, 0):
            if not bus.v_min_sq - tol <= u <= bus.v_max_sq + tol:
                issues.append(f"bus {i}{p}: U={u:.6f} outside [{bus.v_min_sq:.4f}, {bus.v_max_sq:.4f}]")
        elif abs(u) > tol:
            issues.append(f"bus {i}{p}: dead bus with U={u:.3e}")
    return issues


def check_transition(prev: RestorationStage | None, stage: RestorationStage, net: NetworkModel,
                     inputs_prev: StageInputs | None = None) -> list[str]:
    """Device/bus consistency and switching-sequence rules between two retained states."""
    issues = []
    blocks = compute_bus_blocks(net)
    block_of = {b: blk.id for blk in blocks for b in blk.buses}
    if prev is None:
        if inputs_prev is None:
            return issues
        p_line, p_load, p_gen, p_block = inputs_prev.line, inputs_prev.load, inputs_prev.gen, inputs_prev.block
    else:
        p_line, p_load, p_gen, p_block = prev.x_line, prev.x_load, prev.x_gen, prev.x_block
    for k, on in stage.x_line.items():
        ln = net.lines[k]
        a, b = stage.x_bus.get(ln.from_bus, 0), stage.x_bus.get(ln.to_bus, 0)
        if ln.faulted and on:
            issues.append(f"faulted line {k} energised")
        if ln.switchable and on and not (a and b):
            issues.append(f"switch {k} closed with a dead end bus")
        if not ln.switchable and not ln.faulted and not (on == a == b):
            issues.append(f"line {k} status differs from its end buses")
        if ln.switchable and p_line.get(k, 0) and not on:
            issues.append(f"switch {k} reopened")
        if ln.switchable and on and not p_line.get(k, 0):
            bi, bj = block_of[ln.from_bus], block_of[ln.to_bus]
            if not (p_block.get(bi, 0) or p_block.get(bj, 0)):
                issues.append(f"switch {k} closed with neither end block live before")
            if p_block.get(bi, 0) and p_block.get(bj, 0):
                issues.append(f"switch {k} closed between two live blocks (loop)")
    for l, on in stage.x_load.items():
        ld = net.loads[l]
        if on and not stage.x_bus.get(ld.bus, 0):
            issues.append(f"load {l} on a dead bus")
        if not ld.switchable and on != stage.x_bus.get(ld.bus, 0):
            issues.append(f"non-switchable load {l} differs from its bus")
        if p_load.get(l, 0) and not on:
            issues.append(f"load {l} tripped after restoration")
    for g, on in stage.x_gen.items():
        gen = net.generators[g]
        if on and not stage.x_bus.get(gen.bus, 0):
            issues.append(f"generator {g} on a dead bus")
        if p_gen.get(g, 0) and not on:
            issues.append(f"generator {g} tripped")
    for b, on in stage.x_block.items():
        blk = blocks[b]
        if any(stage.x_bus.get(i, 0) != on for i in blk.buses if i in stage.x_bus):
            issues.append(f"block {b} status differs from its buses")
    return issues
