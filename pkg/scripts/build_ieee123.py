"""Generate the bundled 123-bus restoration feeder.

Topology, line configurations and spot loads follow the IEEE 123-node test
feeder. The network is cut at the four faulted lines, buses are renumbered
so the four islands carry ids 1-18, 19-53, 54-69 and 70-119 (substation is
bus 0), loads are scaled per island to 346.5, 420, 382.5 and 624 kW (1773 kW total), and the inverter fleet is placed
on the renumbered buses.

Run from the repository root:  python scripts/build_ieee123.py
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "dsrestore" / "data" / "ieee123.json"
TARGET_KW = 1773.0
# per-island load totals in kW (islands in ISLANDS order)
ISLAND_KW = [346.5, 420.0, 382.5, 624.0]

# ohms per mile, upper triangle given as [re, im]
_Z3 = [[0.4576, 1.0780], [0.1560, 0.5017], [0.1535, 0.3849], [0.4666, 1.0482], [0.1580, 0.4236], [0.4615, 1.0651]]
_Z12 = [[1.5209, 0.7521], [0.5198, 0.2775], [0.4924, 0.2157], [1.5329, 0.7162], [0.5198, 0.2775], [1.5209, 0.7521]]
_ZS = [1.3292, 1.3475]
CONFIG_PHASES = {1: "abc", 2: "abc", 3: "abc", 4: "abc", 5: "abc", 6: "abc", 12: "abc",
                 7: "ac", 8: "ab", 9: "a", 10: "b", 11: "c"}

# (from, to, length ft, config)
SEGMENTS = """
1 2 175 10; 1 3 250 11; 1 7 300 1; 3 4 200 11; 3 5 325 11; 5 6 250 11; 7 8 200 1;
8 12 225 10; 8 9 225 9; 8 13 300 1; 9 14 425 9; 13 34 150 11; 13 18 825 2; 14 11 250 9;
14 10 250 9; 15 16 375 11; 15 17 350 11; 18 19 250 9; 18 21 300 2; 19 20 325 9;
21 22 525 10; 21 23 250 2; 23 24 550 11; 23 25 275 2; 25 26 350 7; 25 28 200 2;
26 27 275 7; 26 31 225 11; 27 33 500 9; 28 29 300 2; 29 30 350 2; 31 32 300 11;
34 15 100 11; 35 36 650 8; 35 40 250 1; 36 37 300 9; 36 38 250 10; 38 39 325 10;
40 41 325 11; 40 42 250 1; 42 43 500 10; 42 44 200 1; 44 45 200 9; 44 47 250 1;
45 46 300 9; 47 48 150 4; 47 49 250 4; 49 50 250 4; 50 51 250 4; 52 53 200 1;
53 54 125 1; 54 55 275 1; 54 57 350 3; 55 56 275 1; 57 58 250 10; 57 60 750 3;
58 59 250 10; 60 61 550 5; 60 62 250 12; 62 63 175 12; 63 64 350 12; 64 65 425 12;
65 66 325 12; 67 68 200 9; 67 72 275 3; 67 97 250 3; 68 69 275 9; 69 70 325 9;
70 71 275 9; 72 73 275 11; 72 76 200 3; 73 74 350 11; 74 75 400 11; 76 77 400 6;
76 86 700 3; 77 78 100 6; 78 79 225 6; 78 80 475 6; 80 81 475 6; 81 82 250 6;
81 84 675 11; 82 83 250 6; 84 85 475 11; 86 87 450 6; 87 88 175 9; 87 89 275 6;
89 90 225 10; 89 91 225 6; 91 92 300 11; 91 93 225 6; 93 94 275 9; 93 95 300 6;
95 96 200 10; 97 98 275 3; 98 99 550 3; 99 100 300 3; 101 102 225 11; 101 105 275 3;
102 103 325 11; 103 104 700 11; 105 106 225 10; 105 108 325 3; 106 107 575 10;
108 109 450 9; 109 110 300 9; 110 111 575 9; 110 112 125 9; 112 113 525 9;
113 114 325 9; 135 35 375 4; 149 1 400 1; 152 52 400 1; 160 67 350 6; 197 101 250 3;
13 152 10 1; 18 135 10 1; 60 160 10 1; 97 197 10 1; 51 151 500 4
"""

# spot loads: node -> (kW a, kvar a, kW b, kvar b, kW c, kvar c)
LOADS = """
1 40 20 0 0 0 0; 2 0 0 20 10 0 0; 4 0 0 0 0 40 20; 5 0 0 0 0 20 10; 6 0 0 0 0 40 20;
7 20 10 0 0 0 0; 9 40 20 0 0 0 0; 10 20 10 0 0 0 0; 11 40 20 0 0 0 0; 12 0 0 20 10 0 0;
16 0 0 0 0 40 20; 17 0 0 0 0 20 10; 19 40 20 0 0 0 0; 20 40 20 0 0 0 0; 22 0 0 40 20 0 0;
24 0 0 0 0 40 20; 28 40 20 0 0 0 0; 29 40 20 0 0 0 0; 30 0 0 0 0 40 20; 31 0 0 0 0 20 10;
32 0 0 0 0 20 10; 33 40 20 0 0 0 0; 34 0 0 0 0 40 20; 35 40 20 0 0 0 0; 37 40 20 0 0 0 0;
38 0 0 20 10 0 0; 39 0 0 20 10 0 0; 41 0 0 0 0 20 10; 42 20 10 0 0 0 0; 43 0 0 40 20 0 0;
45 20 10 0 0 0 0; 46 20 10 0 0 0 0; 47 35 25 35 25 35 25; 48 70 50 70 50 70 50;
49 35 25 70 50 35 20; 50 0 0 0 0 40 20; 51 20 10 0 0 0 0; 52 40 20 0 0 0 0;
53 40 20 0 0 0 0; 55 20 10 0 0 0 0; 56 0 0 20 10 0 0; 58 0 0 20 10 0 0; 59 0 0 20 10 0 0;
60 20 10 0 0 0 0; 62 0 0 0 0 40 20; 63 40 20 0 0 0 0; 64 0 0 75 35 0 0;
65 35 25 35 25 70 50; 66 0 0 0 0 75 35; 68 20 10 0 0 0 0; 69 40 20 0 0 0 0;
70 20 10 0 0 0 0; 71 40 20 0 0 0 0; 73 0 0 0 0 40 20; 74 0 0 0 0 40 20; 75 0 0 0 0 40 20;
76 105 80 70 50 70 50; 77 0 0 40 20 0 0; 79 40 20 0 0 0 0; 80 0 0 40 20 0 0;
82 40 20 0 0 0 0; 83 0 0 0 0 20 10; 84 0 0 0 0 20 10; 85 0 0 0 0 40 20; 86 0 0 20 10 0 0;
87 0 0 40 20 0 0; 88 40 20 0 0 0 0; 90 0 0 40 20 0 0; 92 0 0 0 0 40 20; 94 40 20 0 0 0 0;
95 0 0 20 10 0 0; 96 0 0 20 10 0 0; 98 40 20 0 0 0 0; 99 0 0 40 20 0 0; 100 0 0 0 0 40 20;
102 0 0 0 0 20 10; 103 0 0 0 0 40 20; 104 0 0 0 0 40 20; 106 0 0 40 20 0 0;
107 0 0 40 20 0 0; 109 40 20 0 0 0 0; 111 20 10 0 0 0 0; 112 20 10 0 0 0 0;
113 40 20 0 0 0 0; 114 20 10 0 0 0 0
"""

# islands in original numbering, in feeder order, and fixed renumberings
ISLANDS = [
    ([1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 34, 15, 16, 17], 1,
     {13: 14, 14: 13, 34: 15, 15: 16, 16: 17, 17: 18}),
    ([18, *range(19, 34), 135, *range(35, 52), 151], 19, {18: 19}),
    ([152, *range(52, 67)], 54, {152: 54, 60: 62}),
    ([160, *range(67, 101), 197, *range(101, 115)], 70, {160: 70, 67: 72, 197: 106, 101: 108}),
]
SUBSTATION = 149

FORMING = [14, 19, 62, 72]
FOLLOW_1PH = [5, 11, 16, 28, 40, 42, 47, 81, 83, 90, 97, 107, 110, 116]
FOLLOW_3PH = [24, 33, 41, 48, 52, 59, 69, 91, 105, 109]
FAULTS = [(0, 1), (14, 19), (14, 54), (62, 70)]

# remotely controlled switches, original numbering
SWITCHES = [
    (8, 13), (13, 34), (1, 7), (1, 3), (9, 14),
    (18, 135), (21, 23), (25, 26), (35, 40), (42, 44),
    (53, 54), (54, 57), (57, 60), (60, 62), (64, 65),
    (67, 72), (72, 76), (76, 86), (78, 80), (89, 91), (97, 197), (105, 108),
    # sectionalisers on the 101 lateral: two load-free blocks ahead of its loads
    (197, 101), (101, 102), (101, 105),
]

def _parse(block: str):
    return [list(map(float, item.split())) for item in block.replace("\n", " ").split(";") if item.strip()]


def _impedance(config: int, miles: float):
    phases = CONFIG_PHASES[config]
    z = [[[0.0, 0.0] for _ in range(3)] for _ in range(3)]
    if len(phases) == 1:
        k = "abc".index(phases)
        z[k][k] = [_ZS[0] * miles, _ZS[1] * miles]
        return z
    full = [[None] * 3 for _ in range(3)]
    upper = _Z12 if config == 12 else _Z3
    for (r, c), val in zip([(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)], upper):
        full[r][c] = full[c][r] = val
    # two-phase configurations use the outer conductors (rows/cols 0 and 2 of the full matrix)
    src = [0, 1, 2] if len(phases) == 3 else [0, 2]
    dst = ["abc".index(p) for p in phases]
    for r, sr in zip(dst, src):
        for c, sc in zip(dst, src):
            z[r][c] = [full[sr][sc][0] * miles, full[sr][sc][1] * miles]
    return z


def renumber():
    """Map original node -> new id, keeping three-phase units on three-phase buses."""
    phases = node_phases()
    mapping = {SUBSTATION: 0}
    for nodes, first, pins in ISLANDS:
        ids = list(range(first, first + len(nodes)))
        free = [i for i in ids if i not in pins.values()]
        rest = [n for n in nodes if n not in pins]
        local = dict(pins)
        local.update(zip(rest, free))
        inv = {v: k for k, v in local.items()}
        used = set(FORMING) | set(FOLLOW_1PH) | set(FOLLOW_3PH)
        for dg in FOLLOW_3PH:
            if dg in inv and len(phases[inv[dg]]) < 3:
                swap = min(
                    (i for i in ids if i not in used and i not in pins.values() and len(phases[inv[i]]) == 3),
                    key=lambda i: (abs(i - dg), i),
                )
                inv[dg], inv[swap] = inv[swap], inv[dg]
        mapping.update({n: i for i, n in inv.items()})
    return mapping


def node_phases():
    ph = defaultdict(set)
    for a, b, _, cfg in _parse(SEGMENTS):
        for n in (int(a), int(b)):
            ph[n] |= set(CONFIG_PHASES[int(cfg)])
    return {n: "".join(p for p in "abc" if p in s) for n, s in ph.items()}


def build() -> dict:
    phases = node_phases()
    mapping = renumber()
    segs = _parse(SEGMENTS)
    loads = _parse(LOADS)
    island_of = {n: k for k, (nodes, _, _) in enumerate(ISLANDS) for n in nodes}
    raw = defaultdict(float)
    for r in loads:
        raw[island_of[int(r[0])]] += r[1] + r[3] + r[5]
    scale_of = {k: ISLAND_KW[k] / raw[k] for k in raw}

    buses = sorted(mapping.values())
    bus_phases = {mapping[n]: phases[n] for n in mapping}
    doc = {
        "name": "ieee123-restoration",
        "base": {"kv": 4.16, "mva": 1.0},
        "buses": [{"id": str(b), "phases": bus_phases[b], "v_min": 0.95, "v_max": 1.05} for b in buses],
        "lines": [],
        "loads": [],
        "generators": [],
        "faults": [],
    }
    switch_set = {frozenset((mapping[a], mapping[b])) for a, b in SWITCHES}
    fault_set = {frozenset(f) for f in FAULTS}
    for a, b, feet, cfg in segs:
        a, b, cfg = int(a), int(b), int(cfg)
        if a not in mapping or b not in mapping:
            continue
        i, j = mapping[a], mapping[b]
        lid = f"{min(i, j)}-{max(i, j)}"
        pair = frozenset((i, j))
        doc["lines"].append(
            {
                "id": lid,
                "from": str(min(i, j)),
                "to": str(max(i, j)),
                "phases": CONFIG_PHASES[cfg],
                "switchable": pair in switch_set,
                "impedance": _impedance(cfg, feet / 5280.0),
                "p_max_kw": 500.0,
                "q_max_kvar": 500.0,
            }
        )
        if pair in fault_set:
            doc["faults"].append(lid)
    doc["lines"].sort(key=lambda ln: tuple(int(x) for x in ln["id"].split("-")))
    doc["faults"].sort(key=lambda s: tuple(int(x) for x in s.split("-")))

    phase_load = defaultdict(float)
    for row in loads:
        node = int(row[0])
        bus = mapping[node]
        scale = scale_of[island_of[node]]
        kw = {p: round(row[1 + 2 * k] * scale, 4) for k, p in enumerate("abc") if row[1 + 2 * k] > 0}
        kvar = {p: round(row[2 + 2 * k] * scale, 4) for k, p in enumerate("abc") if row[1 + 2 * k] > 0}
        for p, v in kw.items():
            phase_load[bus, p] += v
        doc["loads"].append({"id": f"L{bus}", "bus": str(bus), "kw": kw, "kvar": kvar, "switchable": True, "priority": 1.0})
    doc["loads"].sort(key=lambda ld: int(ld["bus"]))

    for b in FORMING:
        doc["generators"].append(_gen(f"GF{b}", b, "grid-forming", "abc", 100.0, 50.0))
    for b in FOLLOW_3PH:
        assert len(bus_phases[b]) == 3, b
        doc["generators"].append(_gen(f"G{b}", b, "grid-following", "abc", 100.0, 50.0))
    for b in FOLLOW_1PH:
        ph = bus_phases[b]
        # put single-phase units on the most loaded phase of their bus (first phase if unloaded)
        best = max(ph, key=lambda p: (phase_load[b, p], -"abc".index(p)))
        doc["generators"].append(_gen(f"G{b}", b, "grid-following", best, 80.0, 40.0))
    doc["generators"].sort(key=lambda g: int(g["bus"]))
    return doc


def _gen(gid, bus, kind, phases, kw, kvar):
    return {"id": gid, "bus": str(bus), "kind": kind,
            "kw": {p: kw for p in phases}, "kvar": {p: kvar for p in phases}}


if __name__ == "__main__":
    doc = build()
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(doc, indent=1) + "\n")
    total = sum(sum(ld["kw"].values()) for ld in doc["loads"])
    print(f"wrote {OUT} ({len(doc['buses'])} buses, {len(doc['lines'])} lines, "
          f"{len(doc['loads'])} loads, {total:.1f} kW)")
