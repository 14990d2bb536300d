"""Command-line entry point: ``dsrestore run|simulate|validate|oracle-check|sweep``.

Exit codes: 0 ok, 1 usage or I/O error, 2 restoration infeasible, 3 transient
instability, 4 validation failure, 5 solver/oracle mismatch.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io as artifacts
from .config import ConfigError, inverter_from_si, load_config
from .coordinator import (
    INFEASIBLE,
    INSTABILITY,
    ScenarioConfig,
    compare_alpha_sweep,
    horizon_sweep,
    run_sequential_restoration,
    worst_nadir,
)
from .formulation import check_power_balance, check_radiality, check_transition, check_voltage_box
from .milp.highs import solve
from .milp.lpformat import write_lp
from .milp.model import INFEASIBLE as MILP_INFEASIBLE
from .milp.model import OPTIMAL
from .milp.oracle import brute_force_milp, random_milp
from .network import FeederError, load_feeder, parse_feeder, partition_microgrids
from .plots import alpha_comparison_svg, restored_load_svg, write_plots
from .transient import EquilibriumError, SimOptions, equilibrium_state, simulate_load_step

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_UNSTABLE, EXIT_INVALID, EXIT_MISMATCH = range(6)
BUNDLED = ("toy3", "ieee13", "ieee123")
MAX_ORACLE_BINARIES = 12
NADIR_SLACK_HZ = 0.05

log = logging.getLogger("dsrestore")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def data_path(name: str) -> Path:
    return Path(__file__).resolve().parent / "data" / f"{name}.json"


def resolve_feeder(spec: str) -> Path:
    p = Path(spec)
    if p.exists():
        return p
    if spec in BUNDLED:
        return data_path(spec)
    raise UsageError(f"feeder {spec!r} is neither a file nor one of {', '.join(BUNDLED)}")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _scenario(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    kw = {}
    if getattr(args, "alpha", None) is not None:
        kw["alpha"] = args.alpha
    if getattr(args, "horizon", None) is not None:
        kw["horizon"] = args.horizon
    if getattr(args, "max_stages", None) is not None:
        kw["max_stages"] = args.max_stages
    if getattr(args, "backend", None):
        kw["backend"] = args.backend
    if getattr(args, "no_freq_constraints", False):
        kw["frequency_constraints"] = False
    if getattr(args, "dp", None) is not None:
        # rad/s per W on a 1 MVA base, same as the config file
        d_p = args.dp * 1e6
        kw["inverter"] = replace(cfg.inverter, d_p=d_p)
        kw["mg_inverters"] = tuple((mg, replace(p, d_p=d_p)) for mg, p in cfg.mg_inverters)
    try:
        return replace(cfg, **kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


# ----------------------------------------------------------------------------- run


def cmd_run(args) -> int:
    net = load_feeder(resolve_feeder(args.feeder))
    cfg = _scenario(args)
    run = run_sequential_restoration(net, cfg, keep_states=True)
    out = Path(args.out)
    artifacts.write_run(run, net, out, trace_stride=args.trace_stride)
    if args.plots:
        write_plots(run, out, cfg.f_min if cfg.frequency_constraints else None)
    print(artifacts.summary_text(run), end="")
    print(f"outputs written to {out}")
    if run.termination == INFEASIBLE:
        print(f"error: {run.message}", file=sys.stderr)
        return EXIT_INFEASIBLE
    if run.termination == INSTABILITY:
        print(f"error: {run.message}", file=sys.stderr)
        return EXIT_UNSTABLE
    return EXIT_OK


# ----------------------------------------------------------------------------- simulate


def cmd_simulate(args) -> int:
    cfg = load_config(args.params) if args.params else ScenarioConfig()
    params = cfg.inverter
    if args.dp is not None:
        params = inverter_from_si({"d_p": args.dp}, params)
    opts = SimOptions(dt=args.dt if args.dt is not None else cfg.sim.dt,
                      duration=args.duration if args.duration is not None else cfg.sim.duration,
                      omega_band=cfg.sim.omega_band)
    try:
        opts.validate(params)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    try:
        s0 = equilibrium_state(params, args.p0, args.q0)
    except EquilibriumError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    trace = simulate_load_step(s0, params, args.p0 + args.pstep, args.q0 + args.qstep, opts, cfg.sim_f0)
    if args.out:
        artifacts.write_single_trace_csv(trace.t, trace.f, args.out)
    print(f"nadir_hz={trace.f_nadir!r} t_nadir_s={trace.t_nadir!r} delta_f_hz={trace.delta_f_meas!r} "
          f"stable={trace.stable}")
    return EXIT_OK if trace.stable else EXIT_UNSTABLE


# ----------------------------------------------------------------------------- validate


def validate_solution(doc: dict) -> list[str]:
    """Re-check every retained stage of a solution file against its embedded feeder."""
    issues = []
    net = parse_feeder(json.dumps(doc["feeder"]))
    # same numeric slack as the coordinator's feedback-safety check
    f_min = doc["config"]["scenario"]["f0"] - doc["config"]["scenario"]["df_max"] - NADIR_SLACK_HZ
    freq_on = doc["config"]["scenario"]["frequency_constraints"]
    prev = None
    last_kw = -math.inf
    for rec in doc["stages"]:
        n = rec["stage"]
        total = sum(m["restored_kw"] for m in rec["microgrids"].values())
        if total < last_kw - 1e-6:
            issues.append(f"stage {n}: restored load fell from {last_kw:.3f} to {total:.3f} kW")
        last_kw = total
        if freq_on:
            for mg, m in rec["microgrids"].items():
                if m["nadir_hz"] < f_min and n > 1:
                    issues.append(f"stage {n}: {mg} nadir {m['nadir_hz']:.4f} Hz below {f_min:.4f} Hz")
        if "state" not in rec:
            continue
        st = artifacts.stage_from_dict(rec["state"])
        ok, rad = check_radiality(st, net)
        issues += [f"stage {n}: {m}" for m in rad] if not ok else []
        bal_ok, worst = check_power_balance(st, net)
        if not bal_ok:
            issues.append(f"stage {n}: power balance residual {worst:.3e}")
        issues += [f"stage {n}: {m}" for m in check_voltage_box(st, net)]
        if prev is not None:
            issues += [f"stage {n}: {m}" for m in check_transition(prev, st, net)]
        prev = st
    return issues


def cmd_validate(args) -> int:
    if args.feeder:
        try:
            net = load_feeder(resolve_feeder(args.feeder))
        except FeederError as exc:
            print(f"invalid feeder: {exc}", file=sys.stderr)
            return EXIT_INVALID
        part = partition_microgrids(net)
        print(f"feeder ok: {len(net.buses)} buses, {len(net.lines)} lines, {len(net.loads)} loads, "
              f"{len(net.generators)} generators, {len(part.blocks)} blocks")
        for mg in part.microgrids:
            kw = net.kw(sum(net.loads[l].total_p for l in mg.loads))
            print(f"  {mg.id}: forming {','.join(mg.forming) or '-'}; {len(mg.buses)} buses; {kw:.1f} kW of load")
        for note in part.notes:
            print(f"  note: {note}")
        return EXIT_OK
    path = Path(args.run)
    if path.is_dir():
        path = path / "solution.json"
    try:
        doc = artifacts.read_solution(path)
        issues = validate_solution(doc)
    except (artifacts.ArtifactError, FeederError, KeyError, TypeError) as exc:
        print(f"invalid solution file: {exc}", file=sys.stderr)
        return EXIT_INVALID
    for m in issues:
        print(m)
    print(f"{len(doc['stages'])} stage(s) checked: {'ok' if not issues else f'{len(issues)} issue(s)'}")
    return EXIT_OK if not issues else EXIT_INVALID


# ----------------------------------------------------------------------------- oracle-check


def _agree(ref, sol, tol=1e-6) -> bool:
    if ref.status != sol.status:
        return False
    if ref.status != OPTIMAL:
        return True
    return abs(ref.objective - sol.objective) <= tol * max(1.0, abs(ref.objective))


def cmd_oracle_check(args) -> int:
    if not 1 <= args.max_binaries <= MAX_ORACLE_BINARIES:
        raise UsageError(f"--max-binaries must be in [1, {MAX_ORACLE_BINARIES}] for enumeration")
    rng = np.random.default_rng(args.seed)
    counts = {OPTIMAL: 0, MILP_INFEASIBLE: 0}
    for i in range(args.instances):
        infeasible = args.family == "infeasible" or (args.family == "mixed" and i % 5 == 4)
        prob = random_milp(rng, max_binaries=args.max_binaries, infeasible=infeasible)
        ref = brute_force_milp(prob)
        counts[ref.status] = counts.get(ref.status, 0) + 1
        for backend in args.backends:
            sol = solve(prob, backend)
            if not _agree(ref, sol):
                print(f"instance {i} [{backend}]: oracle {ref.status} {ref.objective!r}, "
                      f"solver {sol.status} {sol.objective!r}")
                print(write_lp(prob), end="")
                return EXIT_MISMATCH
    print(f"{args.instances} instance(s), {counts.get(OPTIMAL, 0)} optimal, {counts.get(MILP_INFEASIBLE, 0)} "
          f"infeasible; backends {','.join(args.backends)}; all agree")
    return EXIT_OK


# ----------------------------------------------------------------------------- sweep


def cmd_sweep(args) -> int:
    net = load_feeder(resolve_feeder(args.feeder))
    cfg = _scenario(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.param == "alpha":
        runs = compare_alpha_sweep(net, args.values, cfg)
    else:
        if any(v != int(v) or v < 1 for v in args.values):
            raise UsageError("horizon values must be positive integers")
        runs = horizon_sweep(net, [int(v) for v in args.values], cfg)
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("param", "value", "stage", "total_kw", "worst_nadir_hz", "termination"))
        for v, run in runs.items():
            for s in run.stages:
                w.writerow((args.param, v, s.stage, repr(s.total_kw), repr(min(s.nadir_hz.values())), run.termination))
    for v, run in runs.items():
        print(f"{args.param}={v:g}: {run.final_kw:.1f} kW in {len(run.stages)} stage(s), "
              f"last load at stage {run.stages_to_completion}, worst nadir {worst_nadir(run):.4f} Hz "
              f"[{run.termination}]")
    if args.param == "alpha":
        (out / "alpha_comparison.svg").write_text(alpha_comparison_svg(runs), encoding="utf-8")
    else:
        for v, run in runs.items():
            (out / f"restored_load_T{int(v)}.svg").write_text(restored_load_svg(run), encoding="utf-8")
    bad = [r.termination for r in runs.values() if r.termination in (INFEASIBLE, INSTABILITY)]
    if INFEASIBLE in bad:
        return EXIT_INFEASIBLE
    if INSTABILITY in bad:
        return EXIT_UNSTABLE
    return EXIT_OK


# ----------------------------------------------------------------------------- parser


def _scenario_flags(p, horizon_flag=True):
    p.add_argument("--feeder", default="ieee123", help="feeder JSON path or bundled name (%(default)s)")
    p.add_argument("--config", help="scenario TOML file")
    p.add_argument("--alpha", type=float, help="MLS update gain")
    if horizon_flag:
        p.add_argument("--horizon", type=int, help="steps per stage model")
    p.add_argument("--max-stages", type=int)
    p.add_argument("--backend", choices=("highs", "builtin"))
    p.add_argument("--no-freq-constraints", action="store_true", help="drop the load-step/frequency rows")
    p.add_argument("--dp", type=float, help="frequency droop in rad/s per W (1 MVA base)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="dsrestore", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="sequential restoration of a feeder")
    _scenario_flags(p)
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--plots", action="store_true", help="also write SVG charts")
    p.add_argument("--trace-stride", type=int, default=10, help="keep every n-th trace sample")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("simulate", help="single load step on one inverter")
    p.add_argument("--params", help="TOML file; its [inverter] and [simulation] tables are used")
    p.add_argument("--pstep", type=float, required=True, help="active load step, pu")
    p.add_argument("--qstep", type=float, default=0.0, help="reactive load step, pu")
    p.add_argument("--p0", type=float, default=0.0, help="pre-step active load, pu")
    p.add_argument("--q0", type=float, default=0.0, help="pre-step reactive load, pu")
    p.add_argument("--dp", type=float, help="frequency droop in rad/s per W (1 MVA base)")
    p.add_argument("--duration", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--out", help="write t_s,f_hz CSV here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", help="check a feeder file or a run's solution.json")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--feeder")
    g.add_argument("--run", help="output directory (or its solution.json) written by 'run'")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("oracle-check", help="compare the MILP solvers with brute-force enumeration")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--max-binaries", type=int, default=10)
    p.add_argument("--family", choices=("feasible", "infeasible", "mixed"), default="mixed")
    p.add_argument("--backends", type=lambda s: s.split(","), default=["builtin", "highs"])
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("sweep", help="repeat a run over alpha or horizon values")
    p.add_argument("param", choices=("alpha", "horizon"))
    p.add_argument("--values", type=_floats, required=True, help="comma-separated values")
    _scenario_flags(p, horizon_flag=False)
    p.add_argument("--horizon", type=int, help="steps per stage model (alpha sweeps)")
    p.add_argument("--out", default="sweep")
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("DSRESTORE_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # --help or a usage error
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    if args.command == "oracle-check" and args.backends:
        unknown = set(args.backends) - {"highs", "builtin"}
        if unknown:
            print(f"dsrestore: error: unknown backend(s) {sorted(unknown)}", file=sys.stderr)
            return EXIT_USAGE
    if args.command == "sweep" and args.param == "horizon" and args.horizon is not None:
        print("dsrestore: error: --horizon conflicts with a horizon sweep", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"dsrestore: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FeederError as exc:
        print(f"dsrestore: invalid feeder: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except AssertionError as exc:
        print(f"dsrestore: validation failed: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"dsrestore: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
