import json
from collections import Counter
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsrestore.formulation import (
    MLS,
    PK,
    QK,
    U,
    XB,
    XK,
    XL,
    MilpSettings,
    StageInputError,
    _bin,
    add_frequency_constraints,
    big_m,
    build_stage_problem,
    check_power_balance,
    check_radiality,
    check_transition,
    check_voltage_box,
    extract_stage,
    initial_inputs,
    update_max_load_step,
)
from dsrestore.milp.highs import solve
from dsrestore.milp.model import OPTIMAL, MilpSolution
from dsrestore.network import parse_feeder, partition_microgrids

from conftest import chain, chain_doc


def solved(net, inputs, settings=None):
    problem, idx = build_stage_problem(net, inputs, settings)
    sol = solve(problem)
    assert sol.status == OPTIMAL
    return problem, idx, sol


def mg_loads(net):
    return {l: mg.id for mg in partition_microgrids(net).microgrids for l in mg.loads}


# ----------------------------------------------------------------------------- sizes


def test_toy_variable_count(toy3):
    problem, idx = build_stage_problem(toy3, initial_inputs(toy3, 2))
    # per step: 3 xB + 2 xK + 0 xG + 2 xL + 3 xBK, then 1 DG x 3 phases x (P,Q),
    # 2 lines x 3 phases x (P,Q), 3 buses x 3 phases of U, 1 MLS
    per_step = (3 + 2 + 0 + 2 + 3) + (1 * 3 * 2 + 2 * 3 * 2 + 3 * 3 + 1)
    assert per_step == 38
    assert problem.n_vars == 2 * per_step
    kinds = Counter(k[0] for k in idx.keys)
    assert kinds == {"xB": 6, "xK": 4, "xL": 4, "xBK": 6, "PG": 6, "QG": 6, "PK": 12, "QK": 12, "U": 18, "MLS": 2}


def test_toy_constraint_count(toy3):
    problem, _ = build_stage_problem(toy3, initial_inputs(toy3, 2))
    T, buses, lines, phases, loads, blocks = 2, 3, 2, 3, 2, 3
    per_step = {
        "balp": buses * phases, "balq": buses * phases,
        "pmax": lines * phases, "pmin": lines * phases, "qmax": lines * phases, "qmin": lines * phases,
        "vlo": lines * phases, "vhi": lines * phases,
        "umin": buses * phases, "umax": buses * phases,
        "swend": 2 * lines, "lbus": loads, "kmono": lines, "lmono": loads,
        "bblk": buses, "loop": lines, "seq": lines,
        # block {1} has one switch; {2} two; {3} one. The two non-forming blocks also get a feed row.
        "pickup": blocks, "feed": blocks - 1,
        "ramp+": phases, "ramp-": phases, "lstep": phases,
    }
    want = Counter({k: v * T for k, v in per_step.items()})
    want["mls"] = 1  # only the lookahead step t=2 at stage 1
    got = Counter(c.name.split("[")[0] for c in problem.constraints)
    assert got == want
    assert problem.n_cons == sum(want.values()) == 207
    off, _ = build_stage_problem(toy3, initial_inputs(toy3, 2), MilpSettings(frequency_constraints=False))
    assert off.n_cons == 207 - 2 * 3 * 3 - 1


# ----------------------------------------------------------------------------- structure


def test_faulted_line_fixed_open():
    net = chain(n=4, faults=["2-3"])
    problem, idx, sol = solved(net, initial_inputs(net, 3))
    for t in (1, 2, 3):
        v = problem.variables[idx[(XK, "2-3", None, t)]]
        assert v.upper == 0.0
        for p in "abc":
            assert sol.values[idx[(PK, "2-3", p, t)]] == pytest.approx(0.0, abs=1e-9)
            assert sol.values[idx[(QK, "2-3", p, t)]] == pytest.approx(0.0, abs=1e-9)


def test_non_switchable_load_follows_bus():
    doc = chain_doc(n=3)
    doc["loads"][0]["switchable"] = False
    net = parse_feeder(json.dumps(doc))
    _, idx, sol = solved(net, initial_inputs(net, 2))
    for t in (1, 2):
        assert round(sol.values[idx[(XL, "L2", None, t)]]) == round(sol.values[idx[(XB, "2", None, t)]])
    names = [c.name for c in build_stage_problem(net, initial_inputs(net, 2))[0].constraints]
    assert any(n.startswith("lbus[L2,") for n in names)


def test_faulted_but_energized_input_rejected():
    net = chain(n=3, faults=["1-2"])
    inputs = initial_inputs(net, 2)
    inputs.line["1-2"] = 1
    with pytest.raises(StageInputError, match="faulted"):
        build_stage_problem(net, inputs)


def test_input_validation():
    net = chain(n=3)
    bad = initial_inputs(net, 2)
    bad.load["L2"] = 2
    with pytest.raises(StageInputError):
        build_stage_problem(net, bad)
    with pytest.raises(StageInputError):
        build_stage_problem(net, replace(initial_inputs(net, 2), df_meas={"GF1": -0.1}))


def test_big_m_valid_at_box_corners(ieee13):
    # with the line open and zero flow, both relaxed rows must hold at every corner
    for k, ln in ieee13.lines.items():
        M = big_m(ieee13, k, 10.0)
        bi, bj = ieee13.buses[ln.from_bus], ieee13.buses[ln.to_bus]
        for ui in (0.0, bi.v_min_sq, bi.v_max_sq):
            for uj in (0.0, bj.v_min_sq, bj.v_max_sq):
                diff = ui - uj
                assert -M <= diff <= M


def test_objective_matches_decoded_loads(toy3):
    problem, idx, sol = solved(toy3, initial_inputs(toy3, 3))
    recomputed = sum(
        toy3.loads[l].priority * toy3.loads[l].total_p * round(sol.values[idx[(XL, l, None, t)]])
        for l in toy3.loads for t in (1, 2, 3)
    )
    assert sol.objective == pytest.approx(recomputed, abs=1e-6)


# ----------------------------------------------------------------------------- frequency rows


def test_update_rule_examples():
    assert update_max_load_step(0.1, 0.1, 0.5, 0.5) == 0.1
    assert update_max_load_step(0.1, 0.1, 0.5, 0.3) == pytest.approx(0.12)
    assert update_max_load_step(0.01, 0.1, 0.5, 2.0) == 0.0


def _stage2_inputs(net, prev_mls, df_meas, horizon=2):
    inp = initial_inputs(net, horizon)
    inp.stage = 2
    inp.mls_prev = {"GF1": prev_mls}
    inp.df_meas = {"GF1": df_meas}
    return inp


def test_mls_row_at_stage_boundary():
    net = chain(n=3)
    problem, _ = build_stage_problem(net, _stage2_inputs(net, 0.1, 0.3))
    row = next(c for c in problem.constraints if c.name == "mls[GF1,1]")
    # 100 kW + 0.1 * (0.5 - 0.3) pu = 120 kW on a 1 MVA base
    assert net.kw(row.rhs) == pytest.approx(120.0)
    problem, _ = build_stage_problem(net, _stage2_inputs(net, 0.1, 0.5))
    assert next(c for c in problem.constraints if c.name == "mls[GF1,1]").rhs == pytest.approx(0.1)


def test_stage_one_bounded_by_capacity_only(toy3):
    problem, idx = build_stage_problem(toy3, initial_inputs(toy3, 2))
    assert not any(c.name == "mls[GF1,1]" for c in problem.constraints)
    assert problem.variables[idx[(MLS, "GF1", None, 1)]].upper == pytest.approx(0.1)


def test_add_frequency_constraints_validation(toy3):
    inp = initial_inputs(toy3, 2)
    with pytest.raises(StageInputError):
        add_frequency_constraints(toy3, replace(inp, alpha=-0.1))
    with pytest.raises(StageInputError):
        add_frequency_constraints(toy3, replace(inp, df_max=0.0))
    p, _ = add_frequency_constraints(toy3, inp, MilpSettings(frequency_constraints=False))
    assert any(c.name.startswith("ramp+") for c in p.constraints)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.0, 1.5), st.floats(0.0, 1.5))
def test_larger_drop_never_restores_more(d1, d2):
    net = chain(n=4, forming_kw=60.0)
    lo, hi = sorted((d1, d2))
    a = solve(build_stage_problem(net, _stage2_inputs(net, 0.01, lo))[0])
    b = solve(build_stage_problem(net, _stage2_inputs(net, 0.01, hi))[0])
    assert b.objective <= a.objective + 1e-9


# ----------------------------------------------------------------------------- decoding


def test_extract_keeps_first_step(ieee13):
    inputs = initial_inputs(ieee13, 4)
    problem, idx, sol = solved(ieee13, inputs)
    stage = extract_stage(sol, idx, inputs, ieee13, mg_loads(ieee13))
    for l, v in stage.x_load.items():
        assert v == round(sol.values[idx[(XL, l, None, 1)]])
    for (i, p), u in stage.u_bus.items():
        assert u == sol.values[idx[(U, i, p, 1)]]
    again = extract_stage(solve(problem), idx, inputs, ieee13, mg_loads(ieee13))
    assert again == stage


def test_binary_decoding_tolerance():
    assert _bin(0.9999999) == 1 and _bin(1e-7) == 0
    with pytest.raises(ValueError):
        _bin(0.5)
    with pytest.raises(ValueError):
        extract_stage(MilpSolution("infeasible"), None, None, None)


def test_restored_load_bounded_by_capacity(ieee13):
    inputs = initial_inputs(ieee13, 3)
    _, idx, sol = solved(ieee13, inputs)
    stage = extract_stage(sol, idx, inputs, ieee13, mg_loads(ieee13))
    for mg in partition_microgrids(ieee13).microgrids:
        cap = sum(ieee13.kw(ieee13.generators[g].total_p) for g in mg.generators)
        assert stage.restored_kw.get(mg.id, 0.0) <= cap + 1e-6
        assert stage.restored_kw.get(mg.id, 0.0) == pytest.approx(
            sum(ieee13.kw(ieee13.loads[l].total_p) for l in mg.loads if stage.x_load[l]))


# ----------------------------------------------------------------------------- checks


def _toy_stage(toy3):
    inputs = initial_inputs(toy3, 2)
    _, idx, sol = solved(toy3, inputs)
    return extract_stage(sol, idx, inputs, toy3, mg_loads(toy3)), inputs


def test_checks_pass_on_solution(toy3):
    stage, inputs = _toy_stage(toy3)
    assert check_radiality(stage, toy3) == (True, [])
    ok, worst = check_power_balance(stage, toy3)
    assert ok and worst <= 1e-6
    assert check_voltage_box(stage, toy3) == []
    assert check_transition(None, stage, toy3, inputs) == []


def test_balance_detects_perturbed_flow(toy3):
    stage, _ = _toy_stage(toy3)
    stage.p_line[("1-2", "a")] += 1e-3
    ok, worst = check_power_balance(stage, toy3)
    assert not ok and worst == pytest.approx(1e-3, rel=1e-6)


def test_dead_island_balances():
    net = chain(n=3, faults=["1-2"])
    inputs = initial_inputs(net, 2)
    _, idx, sol = solved(net, inputs)
    stage = extract_stage(sol, idx, inputs, net, mg_loads(net))
    assert stage.x_bus["2"] == stage.x_bus["3"] == 0
    assert all(v == 0.0 for (k, _), v in stage.p_line.items() if k == "2-3")
    assert check_power_balance(stage, net)[0]


def test_radiality_reports_cycle():
    doc = chain_doc(n=3)
    doc["lines"].append(dict(doc["lines"][0], id="1-3", to="3", switchable=True))
    net = parse_feeder(json.dumps(doc))
    inputs = initial_inputs(net, 1)
    _, idx, sol = solved(net, inputs)
    stage = extract_stage(sol, idx, inputs, net, mg_loads(net))
    assert check_radiality(stage, net)[0]
    for k in ("1-2", "2-3", "1-3"):
        stage.x_line[k] = 1
    for b in ("1", "2", "3"):
        stage.x_bus[b] = 1
    ok, issues = check_radiality(stage, net)
    assert not ok and any("cycle" in m for m in issues)


def test_transition_flags_tripped_load_and_reopened_switch(toy3):
    stage, _ = _toy_stage(toy3)
    later = replace(stage, x_load={**stage.x_load}, x_line={**stage.x_line})
    on_load = next(l for l, v in stage.x_load.items() if v)
    on_line = next(k for k, v in stage.x_line.items() if v)
    later.x_load[on_load] = 0
    later.x_line[on_line] = 0
    issues = check_transition(stage, later, toy3)
    assert any("tripped" in m for m in issues) and any("reopened" in m for m in issues)
