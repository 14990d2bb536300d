"""Generate the bundled reduced 13-node feeder.

IEEE 13-node topology with the regulator and transformer replaced by short
lines, spot loads scaled by 0.1, and two islands formed by faults on 650-632
and 632-671. Each island gets a grid-forming unit; the 671 island also has
grid-following units it needs to serve its phase-c demand.

Run from the repository root:  python scripts/build_ieee13.py
"""

from __future__ import annotations

import json
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "dsrestore" / "data" / "ieee13.json"
LOAD_SCALE = 0.1

# ohms per mile; full 3x3 matrices as (re, im), absent phases zero
_C601 = [[(0.3465, 1.0179), (0.1560, 0.5017), (0.1580, 0.4236)],
         [(0.1560, 0.5017), (0.3375, 1.0478), (0.1535, 0.3849)],
         [(0.1580, 0.4236), (0.1535, 0.3849), (0.3414, 1.0348)]]
_C606 = [[(0.7982, 0.4463), (0.3192, 0.0328), (0.2849, -0.0143)],
         [(0.3192, 0.0328), (0.7891, 0.4041), (0.3192, 0.0328)],
         [(0.2849, -0.0143), (0.3192, 0.0328), (0.7982, 0.4463)]]
_TWO = [(1.3294, 1.3471), (0.2066, 0.4591), (1.3238, 1.3569)]  # self, mutual, self
CONFIGS = {
    "601": ("abc", _C601),
    "606": ("abc", _C606),
    "603": ("bc", None),
    "604": ("ac", None),
    "605": ("c", [[(1.3292, 1.3475)]]),
    "607": ("a", [[(1.3425, 0.5124)]]),
}

# from, to, feet, config, switchable
SEGMENTS = [
    ("650", "632", 2000, "601", False),
    ("632", "633", 500, "601", True),
    ("633", "634", 100, "601", False),
    ("632", "645", 500, "603", True),
    ("645", "646", 300, "603", False),
    ("632", "671", 2000, "601", False),
    ("671", "684", 300, "604", True),
    ("684", "611", 300, "605", False),
    ("684", "652", 800, "607", False),
    ("671", "680", 1000, "601", True),
    ("671", "692", 10, "601", True),
    ("692", "675", 500, "606", False),
]
FAULTS = ["650-632", "632-671"]

# bus -> {phase: (kW, kvar)}
LOADS = {
    "634": {"a": (160, 110), "b": (120, 90), "c": (120, 90)},
    "645": {"b": (170, 125)},
    "646": {"b": (230, 132)},
    "652": {"a": (128, 86)},
    "671": {"a": (385, 220), "b": (385, 220), "c": (385, 220)},
    "675": {"a": (485, 190), "b": (68, 60), "c": (290, 212)},
    "692": {"c": (170, 151)},
    "611": {"c": (170, 80)},
}
GENERATORS = [
    ("GF632", "632", "grid-forming", "abc", 100.0, 50.0),
    ("GF671", "671", "grid-forming", "abc", 100.0, 50.0),
    ("G675", "675", "grid-following", "abc", 50.0, 25.0),
    ("G652", "652", "grid-following", "a", 40.0, 20.0),
]


def _impedance(config: str, miles: float):
    phases, mat = CONFIGS[config]
    z = [[[0.0, 0.0] for _ in range(3)] for _ in range(3)]
    idx = ["abc".index(p) for p in phases]
    if mat is None:  # two-phase configurations share one matrix
        s, m, s2 = _TWO
        mat = [[s, m], [m, s2]]
    for r, pr in enumerate(idx):
        for c, pc in enumerate(idx):
            re, im = mat[r][c]
            z[pr][pc] = [re * miles, im * miles]
    return z


def build() -> dict:
    phases = {}
    for a, b, _, cfg, _ in SEGMENTS:
        for n in (a, b):
            phases[n] = "".join(sorted(set(phases.get(n, "")) | set(CONFIGS[cfg][0])))
    lines = [
        {"id": f"{a}-{b}", "from": a, "to": b, "phases": CONFIGS[cfg][0], "switchable": sw,
         "impedance": _impedance(cfg, feet / 5280.0), "p_max_kw": 400.0, "q_max_kvar": 400.0}
        for a, b, feet, cfg, sw in SEGMENTS
    ]
    loads = [
        {"id": f"L{bus}", "bus": bus,
         "kw": {p: round(v[0] * LOAD_SCALE, 4) for p, v in spec.items()},
         "kvar": {p: round(v[1] * LOAD_SCALE, 4) for p, v in spec.items()},
         "switchable": True, "priority": 1.0}
        for bus, spec in LOADS.items()
    ]
    gens = [
        {"id": gid, "bus": bus, "kind": kind, "kw": {p: kw for p in ph}, "kvar": {p: kvar for p in ph}}
        for gid, bus, kind, ph, kw, kvar in GENERATORS
    ]
    return {
        "name": "ieee13-reduced",
        "base": {"kv": 4.16, "mva": 1.0},
        "buses": [{"id": b, "phases": phases[b], "v_min": 0.95, "v_max": 1.05} for b in sorted(phases, key=int)],
        "lines": lines,
        "loads": loads,
        "generators": gens,
        "faults": FAULTS,
    }


if __name__ == "__main__":
    doc = build()
    OUT.write_text(json.dumps(doc, indent=1) + "\n")
    total = sum(sum(ld["kw"].values()) for ld in doc["loads"])
    print(f"wrote {OUT} ({len(doc['buses'])} buses, {len(doc['lines'])} lines, {total:.1f} kW)")
