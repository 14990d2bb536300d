"""TOML scenario files mapped onto :class:`ScenarioConfig`."""

from __future__ import annotations

import math
import sys
from dataclasses import fields, replace
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .coordinator import ScenarioConfig
from .transient import InverterParams, SimOptions

SECTIONS = ("scenario", "milp", "inverter", "simulation")

_SCENARIO_KEYS = {
    "horizon": int, "alpha": float, "df_max": float, "f0": float, "max_stages": int,
    "frequency_constraints": bool, "load_step_rows": bool, "switch_tiebreak": bool, "mls_carry": str,
}
_MILP_KEYS = {"backend": str, "gap_tol": float, "time_limit": float, "big_m_factor": float}
_SIM_KEYS = {"dt": float, "duration": float, "omega_band": float}
# inverter keys: droops in SI (rad/s per W, V per var) plus the base they convert on
_INV_KEYS = {
    "d_p": float, "d_q": float, "base_mva": float, "base_kv": float, "omega_c_hz": float,
    "r": float, "l": float, "v_set": float, "v_bus": float, "droop_gain": float, "dq_convention": str,
}


class ConfigError(ValueError):
    pass


def _typed(section: str, raw: dict, schema: dict) -> dict:
    out = {}
    for key, val in raw.items():
        if key not in schema:
            raise ConfigError(f"[{section}] unknown key {key!r}")
        want = schema[key]
        if want is float and isinstance(val, int) and not isinstance(val, bool):
            val = float(val)
        if want is bool and not isinstance(val, bool) or want is not bool and isinstance(val, bool):
            raise ConfigError(f"[{section}] {key} must be {want.__name__}")
        if not isinstance(val, want):
            raise ConfigError(f"[{section}] {key} must be {want.__name__}, got {type(val).__name__}")
        out[key] = val
    return out


def inverter_from_si(raw: dict, base: InverterParams | None = None) -> InverterParams:
    """Build inverter parameters from a ``[inverter]``-style table."""
    vals = _typed("inverter", raw, _INV_KEYS)
    base = base or InverterParams()
    s_va = vals.pop("base_mva", 1.0) * 1e6
    v_v = vals.pop("base_kv", 4.16) * 1000.0 / math.sqrt(3.0)
    kw: dict[str, Any] = {}
    if "d_p" in vals:
        kw["d_p"] = vals.pop("d_p") * s_va
    if "d_q" in vals:
        kw["d_q"] = vals.pop("d_q") * s_va / v_v
    if "omega_c_hz" in vals:
        kw["omega_c"] = 2.0 * math.pi * vals.pop("omega_c_hz")
    kw.update(vals)
    try:
        return replace(base, **kw)
    except ValueError as exc:
        raise ConfigError(f"[inverter] {exc}") from exc


def config_from_dict(doc: dict) -> ScenarioConfig:
    unknown = set(doc) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown section(s) {sorted(unknown)}")
    sc = _typed("scenario", doc.get("scenario", {}), _SCENARIO_KEYS)
    milp = _typed("milp", doc.get("milp", {}), _MILP_KEYS)
    sim = _typed("simulation", doc.get("simulation", {}), _SIM_KEYS)
    inv_raw = dict(doc.get("inverter", {}))
    per_mg = {k: inv_raw.pop(k) for k in list(inv_raw) if isinstance(inv_raw[k], dict)}
    base = InverterParams()
    if "f0" in sc:
        w0 = 2.0 * math.pi * sc["f0"]
        base = replace(base, omega_0=w0, omega_set=w0)
    inverter = inverter_from_si(inv_raw, base)
    mg_inverters = tuple(sorted((mg, inverter_from_si({**inv_raw, **tbl}, base)) for mg, tbl in per_mg.items()))
    kw = dict(sc)
    if "f0" in kw:
        kw["sim_f0"] = kw.pop("f0")
    kw.update(milp)
    try:
        return ScenarioConfig(inverter=inverter, mg_inverters=mg_inverters, sim=SimOptions(**sim), **kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> ScenarioConfig:
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(doc)


def config_to_dict(cfg: ScenarioConfig) -> dict:
    """Plain-data view of a config (inverter gains in the model's per-unit form)."""
    inv = {f.name: getattr(cfg.inverter, f.name) for f in fields(InverterParams)}
    return {
        "scenario": {
            "horizon": cfg.horizon, "alpha": cfg.alpha, "df_max": cfg.df_max, "f0": cfg.sim_f0,
            "max_stages": cfg.max_stages, "frequency_constraints": cfg.frequency_constraints,
            "load_step_rows": cfg.load_step_rows, "switch_tiebreak": cfg.switch_tiebreak,
            "mls_carry": cfg.mls_carry,
        },
        "milp": {"backend": cfg.backend, "gap_tol": cfg.gap_tol, "time_limit": cfg.time_limit,
                 "big_m_factor": cfg.big_m_factor},
        "inverter_pu": inv,
        "inverter_pu_by_mg": {mg: {f.name: getattr(p, f.name) for f in fields(InverterParams)}
                              for mg, p in cfg.mg_inverters},
        "simulation": {"dt": cfg.sim.dt, "duration": cfg.sim.duration, "omega_band": cfg.sim.omega_band},
    }


def default_config_path() -> Path:
    return Path(__file__).resolve().parent / "data" / "default.toml"
