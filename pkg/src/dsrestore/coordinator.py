"""Stage loop: solve each microgrid's horizon model, simulate the step, feed the nadir back."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

from .formulation import (
    MilpSettings,
    RestorationStage,
    StageInputs,
    build_stage_problem,
    check_power_balance,
    check_radiality,
    check_transition,
    extract_stage,
    initial_inputs,
    switch_tiebreak_problem,
    update_max_load_step,
)
from .milp.bnb import SolveOptions
from .milp.highs import solve
from .milp.model import GAP_LIMIT, OPTIMAL
from .network import MicrogridPartition, NetworkModel, partition_microgrids
from .transient import (
    F0,
    FrequencyTrace,
    InverterParams,
    SimOptions,
    equilibrium_state,
    simulate_load_step,
)

log = logging.getLogger(__name__)

MLS_CARRY = ("realized", "bound")


class RestorationInfeasible(RuntimeError):
    def __init__(self, stage: int, microgrid: str, status: str):
        super().__init__(f"stage {stage}: {microgrid} model returned {status}")
        self.stage, self.microgrid, self.status = stage, microgrid, status


class TransientInstability(RuntimeError):
    def __init__(self, stage: int, microgrid: str):
        super().__init__(f"stage {stage}: {microgrid} left the frequency band after its load step")
        self.stage, self.microgrid = stage, microgrid


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything a restoration run needs besides the feeder."""

    horizon: int = 4
    alpha: float = 0.1  # pu per Hz
    df_max: float = 0.5  # Hz
    max_stages: int = 20
    frequency_constraints: bool = True
    load_step_rows: bool = True
    switch_tiebreak: bool = True
    mls_carry: str = "realized"
    backend: str = "highs"
    gap_tol: float = 1e-6
    time_limit: float = 60.0
    big_m_factor: float = 10.0
    inverter: InverterParams = field(default_factory=InverterParams)
    sim: SimOptions = field(default_factory=SimOptions)
    check_invariants: bool = True
    sim_f0: float = F0
    mg_inverters: tuple[tuple[str, InverterParams], ...] = ()  # per-microgrid overrides

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if not self.df_max > 0:
            raise ValueError("df_max must be positive")
        if self.max_stages < 1:
            raise ValueError("max_stages must be >= 1")
        if self.mls_carry not in MLS_CARRY:
            raise ValueError(f"mls_carry must be one of {MLS_CARRY}")
        if self.backend not in ("highs", "builtin"):
            raise ValueError(f"unknown backend {self.backend!r}")

    def inverter_for(self, mg_id: str) -> InverterParams:
        return dict(self.mg_inverters).get(mg_id, self.inverter)

    @property
    def f_min(self) -> float:
        return self.sim_f0 - self.df_max

    @property
    def milp_settings(self) -> MilpSettings:
        return MilpSettings(self.big_m_factor, self.frequency_constraints, self.load_step_rows, self.switch_tiebreak)

    @property
    def solve_options(self) -> SolveOptions:
        return SolveOptions(gap_tol=self.gap_tol, time_limit=self.time_limit)


SATURATED, MAX_STAGES, INFEASIBLE, INSTABILITY = "saturated", "max_stages", "infeasible", "instability"


@dataclass
class StageResult:
    stage: int
    restored_kw: dict[str, float]  # cumulative per microgrid after this stage
    step_kw: dict[str, float]  # newly restored this stage
    nadir_hz: dict[str, float]
    delta_f: dict[str, float]
    mls_kw: dict[str, float]  # value carried into the next stage, per microgrid
    mls_bound_kw: dict[str, float | None]  # bound imposed on this stage's first step (None at stage 1)
    new_blocks: dict[str, int]  # blocks energised this stage, per microgrid
    objective: float
    status: dict[str, str]
    solve_seconds: float
    step_pu: dict[str, tuple[float, float]] = field(default_factory=dict)  # (P, Q) load step sent to the simulator
    traces: dict[str, FrequencyTrace | None] = field(default_factory=dict)
    state: RestorationStage | None = None

    @property
    def total_kw(self) -> float:
        return float(sum(self.restored_kw.values()))

    @property
    def restored_load(self) -> bool:
        return any(v > 1e-9 for v in self.step_kw.values())

    @property
    def progressed(self) -> bool:
        return self.restored_load or any(self.new_blocks.values())


@dataclass
class RestorationRun:
    config: ScenarioConfig
    stages: list[StageResult]
    partition: MicrogridPartition
    total_load_kw: float
    termination: str = SATURATED
    message: str = ""
    wall_seconds: float = 0.0

    @property
    def final_kw(self) -> float:
        return self.stages[-1].total_kw if self.stages else 0.0

    @property
    def stages_to_completion(self) -> int:
        """Last stage that restored load (0 if none did)."""
        done = [s.stage for s in self.stages if s.restored_load]
        return done[-1] if done else 0

    def restored_series(self) -> list[float]:
        return [s.total_kw for s in self.stages]

    def nadirs(self, microgrid: str) -> list[float]:
        return [s.nadir_hz[microgrid] for s in self.stages]


def restorable_kw(net: NetworkModel, mg) -> float:
    """min(total load, total generation capacity) of a microgrid, in kW."""
    load = sum(net.loads[l].total_p for l in mg.loads)
    cap = sum(net.generators[g].total_p for g in mg.generators)
    return net.kw(min(load, cap))


def stopping_criterion(history: list[StageResult], max_stages: int | None = None,
                       targets_kw: dict[str, float] | None = None, tol_kw: float = 1e-6) -> str | None:
    """Termination reason after the latest stage, or ``None`` to continue.

    Saturated when every microgrid sits at its restorable maximum or the last
    stage neither restored load nor energised a block.
    """
    if not history:
        raise ValueError("stopping criterion needs at least one completed stage")
    last = history[-1]
    if targets_kw is not None and all(last.restored_kw.get(k, 0.0) >= v - tol_kw for k, v in targets_kw.items()):
        return SATURATED
    if not last.progressed:
        return SATURATED
    if max_stages is not None and len(history) >= max_stages:
        return MAX_STAGES
    return None


def _merge(stages: list[RestorationStage], stage_no: int) -> RestorationStage:
    out = RestorationStage(stage_no, {}, {}, {}, {}, {}, {}, {}, {}, {}, {}, {}, {}, 0.0)
    for s in stages:
        for name in ("x_bus", "x_line", "x_gen", "x_load", "x_block", "p_gen", "q_gen", "p_line", "q_line",
                     "u_bus", "mls", "restored_kw"):
            getattr(out, name).update(getattr(s, name))
        out.objective += s.objective
        out.nodes += s.nodes
        if s.solver_status != OPTIMAL:
            out.solver_status = s.solver_status
    return out


def next_inputs(prev: StageInputs, state: RestorationStage, df_meas: dict[str, float],
                carry: str = "realized", bounds: dict[str, float | None] | None = None) -> StageInputs:
    """Inputs of the following stage from the retained step of this one."""
    mls_prev = {}
    for g in prev.mls_prev:
        if carry == "realized" or bounds is None or bounds.get(g) is None:
            mls_prev[g] = state.mls.get(g, 0.0)
        else:
            mls_prev[g] = bounds[g]
    return replace(
        prev,
        stage=prev.stage + 1,
        bus={**prev.bus, **state.x_bus},
        line={**prev.line, **state.x_line},
        load={**prev.load, **state.x_load},
        gen={**prev.gen, **state.x_gen},
        block={**prev.block, **state.x_block},
        dispatch_p={**prev.dispatch_p, **state.p_gen},
        mls_prev=mls_prev,
        df_meas={**prev.df_meas, **df_meas},
    )


def _solve_microgrid(net, inputs, mg, cfg: ScenarioConfig, mg_of_load):
    problem, idx = build_stage_problem(net, inputs, cfg.milp_settings, mg.buses)
    sol = solve(problem, cfg.backend, cfg.solve_options)
    if sol.status not in (OPTIMAL, GAP_LIMIT) or not sol.values:
        raise RestorationInfeasible(inputs.stage, mg.id, sol.status)
    if cfg.switch_tiebreak:
        tb = solve(switch_tiebreak_problem(problem, idx, sol.objective), cfg.backend, cfg.solve_options)
        if tb.status in (OPTIMAL, GAP_LIMIT) and tb.values:
            sol = replace(tb, objective=sol.objective)
    return extract_stage(sol, idx, inputs, net, mg_of_load)


def simulate_microgrid_step(params: InverterParams, p_prev: float, q_prev: float, p_new: float, q_new: float,
                            opts: SimOptions, f0: float = F0):
    """Frequency response of one microgrid to its restored-load step (pu on the feeder base)."""
    if abs(p_new - p_prev) < 1e-12 and abs(q_new - q_prev) < 1e-12:
        return None
    s0 = equilibrium_state(params, p_prev, q_prev)
    return simulate_load_step(s0, params, p_new, q_new, opts, f0)


def run_sequential_restoration(net: NetworkModel, cfg: ScenarioConfig | None = None,
                               partition: MicrogridPartition | None = None,
                               keep_states: bool = False, keep_traces: bool = True,
                               initial: StageInputs | None = None) -> RestorationRun:
    """Alternate the per-microgrid horizon models with the frequency simulation."""
    cfg = cfg or ScenarioConfig()
    wall = time.perf_counter()
    part = partition or partition_microgrids(net)
    mgs = [mg for mg in part.microgrids if mg.forming]
    mg_of_load = {l: mg.id for mg in mgs for l in mg.loads}
    total_kw = sum(net.kw(net.loads[l].total_p) for l in mg_of_load)
    targets = {mg.id: restorable_kw(net, mg) for mg in mgs}
    if initial is None:
        inputs = initial_inputs(net, cfg.horizon, cfg.alpha, cfg.df_max)
    else:
        inputs = replace(initial, horizon=cfg.horizon, alpha=cfg.alpha, df_max=cfg.df_max)
    # loads already live before restoration starts (none on a faulted feeder)
    served_pq = {
        mg.id: (sum(net.loads[l].total_p for l in mg.loads if inputs.load.get(l, 0)),
                sum(sum(net.loads[l].q.values()) for l in mg.loads if inputs.load.get(l, 0)))
        for mg in mgs
    }
    restored = {mg.id: net.kw(served_pq[mg.id][0]) for mg in mgs}
    history: list[StageResult] = []
    prev_state: RestorationStage | None = None
    run = RestorationRun(cfg, history, part, total_kw)

    while True:
        t0 = time.perf_counter()
        parts = []
        bounds = {}
        try:
            for mg in mgs:
                for g in mg.forming:
                    prev = inputs.mls_prev.get(g)
                    bounds[g] = None if prev is None else update_max_load_step(
                        prev, cfg.alpha, cfg.df_max, inputs.df_meas.get(g, 0.0))
                parts.append(_solve_microgrid(net, inputs, mg, cfg, mg_of_load))
        except RestorationInfeasible as exc:
            run.termination, run.message = INFEASIBLE, str(exc)
            break
        state = _merge(parts, inputs.stage)
        elapsed = time.perf_counter() - t0

        if cfg.check_invariants:
            ok, issues = check_radiality(state, net)
            bal_ok, worst = check_power_balance(state, net)
            trans = check_transition(prev_state, state, net, inputs if prev_state is None else None)
            if not ok or not bal_ok or trans:
                raise AssertionError(f"stage {inputs.stage}: invariants broken: {issues} {trans} balance={worst:.2e}")

        nadir, dfm, step, step_pu, traces, new_blocks = {}, {}, {}, {}, {}, {}
        unstable = None
        for mg in mgs:
            p_new = sum(net.loads[l].total_p for l in mg.loads if state.x_load.get(l, 0))
            q_new = sum(sum(net.loads[l].q.values()) for l in mg.loads if state.x_load.get(l, 0))
            p_old, q_old = served_pq[mg.id]
            step_pu[mg.id] = (p_new - p_old, q_new - q_old)
            trace = simulate_microgrid_step(cfg.inverter_for(mg.id), p_old, q_old, p_new, q_new, cfg.sim, cfg.sim_f0)
            traces[mg.id] = trace if keep_traces else None
            if trace is None:
                nadir[mg.id], dfm[mg.id] = cfg.sim_f0, 0.0
            else:
                nadir[mg.id], dfm[mg.id] = trace.f_nadir, trace.delta_f_meas
                if not trace.stable and unstable is None:
                    unstable = mg.id
            served_pq[mg.id] = (p_new, q_new)
            kw = state.restored_kw.get(mg.id, 0.0)
            step[mg.id] = kw - restored[mg.id]
            restored[mg.id] = kw
            new_blocks[mg.id] = sum(1 for b in mg.blocks if state.x_block.get(b, 0) and not inputs.block.get(b, 0))

        df_by_gen = {g: dfm[mg.id] for mg in mgs for g in mg.forming}
        mls_kw = {mg.id: net.kw(sum(state.mls.get(g, 0.0) for g in mg.forming)) for mg in mgs}
        bound_kw = {mg.id: (None if any(bounds[g] is None for g in mg.forming)
                            else net.kw(sum(bounds[g] for g in mg.forming))) for mg in mgs}
        res = StageResult(
            stage=inputs.stage,
            restored_kw=dict(restored),
            step_kw=step,
            nadir_hz=nadir,
            delta_f=dfm,
            mls_kw=mls_kw,
            mls_bound_kw=bound_kw,
            new_blocks=new_blocks,
            objective=state.objective,
            status={mg.id: p.solver_status for mg, p in zip(mgs, parts)},
            solve_seconds=elapsed,
            step_pu=step_pu,
            traces=traces,
            state=state if keep_states else None,
        )
        history.append(res)
        log.info("stage %d: restored %.1f kW (step %s), nadir %s", res.stage, res.total_kw,
                 {k: round(v, 1) for k, v in step.items()}, {k: round(v, 4) for k, v in nadir.items()})
        if unstable is not None:
            run.termination = INSTABILITY
            run.message = str(TransientInstability(res.stage, unstable))
            break
        reason = stopping_criterion(history, cfg.max_stages, targets)
        if reason is not None:
            run.termination = reason
            break
        inputs = next_inputs(inputs, state, df_by_gen, cfg.mls_carry, bounds if cfg.mls_carry == "bound" else None)
        if cfg.mls_carry == "bound":
            # the first stage has no bound; carry the forming unit's per-phase capacity
            inputs.mls_prev.update({g: (bounds[g] if bounds[g] is not None
                                        else max(net.generators[g].p_max.values()))
                                    for g in inputs.mls_prev})
        prev_state = state

    run.wall_seconds = time.perf_counter() - wall
    return run


def compare_alpha_sweep(net: NetworkModel, alphas, cfg: ScenarioConfig | None = None) -> dict[float, RestorationRun]:
    cfg = cfg or ScenarioConfig()
    return {a: run_sequential_restoration(net, replace(cfg, alpha=a)) for a in alphas}


def horizon_sweep(net: NetworkModel, horizons, cfg: ScenarioConfig | None = None) -> dict[int, RestorationRun]:
    cfg = cfg or ScenarioConfig()
    return {h: run_sequential_restoration(net, replace(cfg, horizon=h)) for h in horizons}


def worst_nadir(run: RestorationRun, from_stage: int = 1) -> float:
    vals = [f for s in run.stages if s.stage >= from_stage for f in s.nadir_hz.values()]
    return min(vals) if vals else math.nan
