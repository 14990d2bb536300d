"""Run artifacts: solution JSON, stage and trace CSVs, text summary.

Floats are written with ``repr`` so every file is a write/read/write fixpoint.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from .config import config_to_dict
from .coordinator import RestorationRun
from .formulation import RestorationStage
from .network import NetworkModel, feeder_to_dict

FORMAT = "dsrestore-run/1"
STAGE_COLUMNS = ("stage", "mg_id", "restored_kw", "step_kw", "nadir_hz", "delta_f_hz", "mls_kw", "mls_bound_kw",
                 "new_blocks", "status")
TRACE_COLUMNS = ("mg_id", "stage", "t_s", "f_hz")
_PHASED = ("p_gen", "q_gen", "p_line", "q_line", "u_bus")
_FLAGS = ("x_bus", "x_line", "x_gen", "x_load", "x_block")


class ArtifactError(ValueError):
    pass


def _num(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_num(s: str):
    if s == "":
        return None
    try:
        return int(s)
    except ValueError:
        return float(s)


# ----------------------------------------------------------------------------- stage state


def stage_to_dict(st: RestorationStage) -> dict:
    out = {"stage": st.stage, "objective": st.objective, "solver_status": st.solver_status, "nodes": st.nodes}
    for name in _FLAGS:
        out[name] = {str(k): int(v) for k, v in getattr(st, name).items()}
    for name in _PHASED:
        out[name] = {f"{k}/{p}": float(v) for (k, p), v in getattr(st, name).items()}
    out["mls"] = {k: float(v) for k, v in st.mls.items()}
    out["restored_kw"] = {k: float(v) for k, v in st.restored_kw.items()}
    return out


def stage_from_dict(d: dict) -> RestorationStage:
    def split(m):
        res = {}
        for key, v in m.items():
            elem, _, phase = key.rpartition("/")
            res[(elem, phase)] = float(v)
        return res

    try:
        return RestorationStage(
            stage=int(d["stage"]),
            x_bus={k: int(v) for k, v in d["x_bus"].items()},
            x_line={k: int(v) for k, v in d["x_line"].items()},
            x_gen={k: int(v) for k, v in d["x_gen"].items()},
            x_load={k: int(v) for k, v in d["x_load"].items()},
            x_block={int(k): int(v) for k, v in d["x_block"].items()},
            p_gen=split(d["p_gen"]), q_gen=split(d["q_gen"]),
            p_line=split(d["p_line"]), q_line=split(d["q_line"]),
            u_bus=split(d["u_bus"]),
            mls={k: float(v) for k, v in d["mls"].items()},
            restored_kw={k: float(v) for k, v in d["restored_kw"].items()},
            objective=float(d["objective"]),
            solver_status=d.get("solver_status", "optimal"),
            nodes=int(d.get("nodes", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ArtifactError(f"malformed stage record: {exc}") from exc


# ----------------------------------------------------------------------------- solution.json


def run_to_dict(run: RestorationRun, net: NetworkModel) -> dict:
    stages = []
    for s in run.stages:
        mgs = {
            mg: {
                "restored_kw": s.restored_kw[mg],
                "step_kw": s.step_kw[mg],
                "nadir_hz": s.nadir_hz[mg],
                "delta_f_hz": s.delta_f[mg],
                "mls_kw": s.mls_kw[mg],
                "mls_bound_kw": s.mls_bound_kw[mg],
                "new_blocks": s.new_blocks[mg],
                "status": s.status[mg],
            }
            for mg in s.restored_kw
        }
        rec = {"stage": s.stage, "total_kw": s.total_kw, "solve_seconds": s.solve_seconds, "microgrids": mgs}
        if s.state is not None:
            rec["state"] = stage_to_dict(s.state)
        stages.append(rec)
    return {
        "format": FORMAT,
        "summary": run_summary(run, net),
        "termination": run.termination,
        "message": run.message,
        "total_load_kw": run.total_load_kw,
        "final_kw": run.final_kw,
        "stages_to_completion": run.stages_to_completion,
        "wall_seconds": run.wall_seconds,
        "config": config_to_dict(run.config),
        "microgrids": {mg.id: {"forming": list(mg.forming), "buses": list(mg.buses)}
                       for mg in run.partition.microgrids},
        "stages": stages,
        "feeder": feeder_to_dict(net),
    }


def run_summary(run: RestorationRun, net: NetworkModel) -> list[dict]:
    """Flat per-stage, per-microgrid records."""
    return [
        {
            "stage": s.stage, "mg_id": mg, "restored_kw": s.step_kw[mg], "cumulative_kw": s.restored_kw[mg],
            "f_nadir_hz": s.nadir_hz[mg], "mls_pu": net.pu(s.mls_kw[mg]), "solver_status": s.status[mg],
            "nodes": s.state.nodes if s.state is not None else 0, "wall_ms": 1000.0 * s.solve_seconds,
        }
        for s in run.stages
        for mg in s.restored_kw
    ]


def write_json(doc: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(doc, indent=1, allow_nan=False) + "\n", encoding="utf-8")


def read_json(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"{path}: {exc}") from exc


def read_solution(path: str | Path) -> dict:
    doc = read_json(path)
    if doc.get("format") != FORMAT:
        raise ArtifactError(f"{path}: not a {FORMAT} file")
    return doc


# ----------------------------------------------------------------------------- CSVs


def stage_rows(run: RestorationRun) -> list[dict]:
    rows = []
    for s in run.stages:
        for mg in s.restored_kw:
            rows.append({
                "stage": s.stage, "mg_id": mg, "restored_kw": s.restored_kw[mg], "step_kw": s.step_kw[mg],
                "nadir_hz": s.nadir_hz[mg], "delta_f_hz": s.delta_f[mg], "mls_kw": s.mls_kw[mg],
                "mls_bound_kw": s.mls_bound_kw[mg], "new_blocks": s.new_blocks[mg], "status": s.status[mg],
            })
    return rows


def write_stages_csv(rows: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STAGE_COLUMNS)
        for r in rows:
            w.writerow([r[c] if c in ("mg_id", "status") else _num(r[c]) for c in STAGE_COLUMNS])


def read_stages_csv(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rd = csv.reader(fh)
        header = next(rd, None)
        if tuple(header or ()) != STAGE_COLUMNS:
            raise ArtifactError(f"{path}: unexpected header {header}")
        rows = []
        for rec in rd:
            row = {c: (v if c in ("mg_id", "status") else _parse_num(v)) for c, v in zip(STAGE_COLUMNS, rec)}
            for c in ("restored_kw", "step_kw", "nadir_hz", "delta_f_hz", "mls_kw", "mls_bound_kw"):
                if isinstance(row[c], int):
                    row[c] = float(row[c])
            rows.append(row)
        return rows


def trace_rows(run: RestorationRun, stride: int = 1):
    """Yield (mg_id, stage, t, f); stages without a step contribute one flat sample at f0."""
    for s in run.stages:
        for mg in s.restored_kw:
            tr = s.traces.get(mg)
            if tr is None:
                yield mg, s.stage, 0.0, s.nadir_hz[mg]
                continue
            for k in range(0, len(tr.t), stride):
                yield mg, s.stage, float(tr.t[k]), float(tr.f[k])


def write_traces_csv(rows, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for mg, stage, t, f in rows:
            w.writerow([mg, stage, repr(float(t)), repr(float(f))])


def read_traces_csv(path: str | Path) -> list[tuple[str, int, float, float]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rd = csv.reader(fh)
        header = next(rd, None)
        if tuple(header or ()) != TRACE_COLUMNS:
            raise ArtifactError(f"{path}: unexpected header {header}")
        return [(mg, int(st), float(t), float(f)) for mg, st, t, f in rd]


def write_single_trace_csv(t, f, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t_s", "f_hz"))
        for a, b in zip(t, f):
            w.writerow((repr(float(a)), repr(float(b))))


def summary_text(run: RestorationRun) -> str:
    lines = [
        f"termination: {run.termination}" + (f" ({run.message})" if run.message else ""),
        f"total load: {run.total_load_kw:.1f} kW",
        f"restored: {run.final_kw:.1f} kW after {len(run.stages)} stage(s); "
        f"last stage with new load: {run.stages_to_completion}",
        f"wall time: {run.wall_seconds:.1f} s",
        "",
        "stage  " + "  ".join(f"{mg:>20}" for mg in (run.stages[0].restored_kw if run.stages else {})),
    ]
    for s in run.stages:
        cells = [f"{s.restored_kw[mg]:8.1f}kW {s.nadir_hz[mg]:7.4f}Hz" for mg in s.restored_kw]
        lines.append(f"{s.stage:5d}  " + "  ".join(cells))
    nadirs = [f for s in run.stages for f in s.nadir_hz.values()]
    if nadirs:
        lines.append("")
        lines.append(f"worst nadir: {min(nadirs):.4f} Hz")
    return "\n".join(lines) + "\n"


def write_run(run: RestorationRun, net: NetworkModel, out_dir: str | Path, trace_stride: int = 1) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "solution": out / "solution.json",
        "stages": out / "stages.csv",
        "traces": out / "traces.csv",
        "summary": out / "summary.txt",
    }
    write_json(run_to_dict(run, net), paths["solution"])
    write_stages_csv(stage_rows(run), paths["stages"])
    write_traces_csv(trace_rows(run, trace_stride), paths["traces"])
    paths["summary"].write_text(summary_text(run), encoding="utf-8")
    return paths


def finite_or_none(x: float | None) -> float | None:
    return None if x is None or not math.isfinite(x) else x
