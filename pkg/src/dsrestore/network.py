"""Unbalanced three-phase feeder model: parsing, bus blocks, faults, microgrids."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

import numpy as np

PHASES = ("a", "b", "c")
PHASE_INDEX = {p: i for i, p in enumerate(PHASES)}

GRID_FORMING = "grid-forming"
GRID_FOLLOWING = "grid-following"

# relative phase unbalance vector [1, e^{-j2pi/3}, e^{j2pi/3}]
_A_PHI = np.exp(1j * np.array([0.0, -2.0 * np.pi / 3.0, 2.0 * np.pi / 3.0]))
_UNBALANCE = np.outer(_A_PHI, _A_PHI.conj())


class FeederError(ValueError):
    """Base class for feeder document problems."""


class FeederSchemaError(FeederError):
    pass


class FeederReferenceError(FeederError):
    pass


class PhaseConsistencyError(FeederError):
    pass


def bus_sort_key(bus_id: str):
    """Natural ordering: numeric ids by value, then anything else lexically."""
    parts = re.split(r"(\d+)", str(bus_id))
    return tuple((0, int(p)) if p.isdigit() else (1, p) for p in parts if p != "")


def normalize_phases(spec) -> tuple[str, ...]:
    if isinstance(spec, str):
        items = list(spec.replace(",", "").replace(" ", "").lower())
    else:
        items = [str(p).lower() for p in spec]
    if not items:
        raise PhaseConsistencyError("empty phase set")
    bad = [p for p in items if p not in PHASE_INDEX]
    if bad:
        raise PhaseConsistencyError(f"unknown phase(s) {bad}")
    return tuple(p for p in PHASES if p in items)


@dataclass(frozen=True)
class Bus:
    id: str
    phases: tuple[str, ...]
    v_min_sq: float = 0.95**2
    v_max_sq: float = 1.05**2

    def __post_init__(self):
        if not 0.0 < self.v_min_sq < self.v_max_sq:
            raise FeederSchemaError(
                f"bus {self.id}: need 0 < v_min_sq < v_max_sq, got {self.v_min_sq}, {self.v_max_sq}"
            )


@dataclass(frozen=True, eq=False)
class Line:
    id: str
    from_bus: str
    to_bus: str
    phases: tuple[str, ...]
    impedance: np.ndarray  # 3x3 complex, per-unit
    switchable: bool = False
    p_max: float = 1.0
    q_max: float = 1.0
    faulted: bool = False

    def __post_init__(self):
        if self.from_bus == self.to_bus:
            raise FeederSchemaError(f"line {self.id}: from_bus == to_bus")
        if not (self.p_max > 0 and self.q_max > 0):
            raise FeederSchemaError(f"line {self.id}: flow limits must be positive")
        z = np.asarray(self.impedance, dtype=complex)
        if z.shape != (3, 3):
            raise FeederSchemaError(f"line {self.id}: impedance must be 3x3")
        absent = [PHASE_INDEX[p] for p in PHASES if p not in self.phases]
        if absent and (np.any(z[absent, :] != 0) or np.any(z[:, absent] != 0)):
            raise PhaseConsistencyError(
                f"line {self.id}: impedance has entries on absent phases"
            )
        z.setflags(write=False)
        object.__setattr__(self, "impedance", z)

    @property
    def ends(self) -> tuple[str, str]:
        return self.from_bus, self.to_bus


@dataclass(frozen=True)
class Load:
    id: str
    bus: str
    p: Mapping[str, float]  # per-phase demand, pu
    q: Mapping[str, float]
    switchable: bool = True
    priority: float = 1.0

    def __post_init__(self):
        if any(v < 0 for v in self.p.values()):
            raise FeederSchemaError(f"load {self.id}: negative active demand")
        if not math.isfinite(self.priority) or self.priority < 0:
            raise FeederSchemaError(f"load {self.id}: priority must be finite and >= 0")

    @property
    def phases(self) -> tuple[str, ...]:
        return tuple(p for p in PHASES if p in self.p or p in self.q)

    @property
    def total_p(self) -> float:
        return float(sum(self.p.values()))


@dataclass(frozen=True)
class Generator:
    id: str
    bus: str
    kind: str
    p_max: Mapping[str, float]
    q_max: Mapping[str, float]

    def __post_init__(self):
        if self.kind not in (GRID_FORMING, GRID_FOLLOWING):
            raise FeederSchemaError(f"generator {self.id}: unknown kind {self.kind!r}")
        if any(v < 0 for v in self.p_max.values()) or any(v < 0 for v in self.q_max.values()):
            raise FeederSchemaError(f"generator {self.id}: negative capacity")

    @property
    def phases(self) -> tuple[str, ...]:
        return tuple(p for p in PHASES if p in self.p_max or p in self.q_max)

    @property
    def forming(self) -> bool:
        return self.kind == GRID_FORMING

    @property
    def total_p(self) -> float:
        return float(sum(self.p_max.values()))


@dataclass(frozen=True, eq=False)
class NetworkModel:
    """Immutable feeder description. All power quantities are per-phase per-unit
    on ``base_mva``; impedances on the per-phase base (kV_LL^2 / 3) / MVA."""

    name: str
    base_kv: float
    base_mva: float
    buses: Mapping[str, Bus]
    lines: Mapping[str, Line]
    loads: Mapping[str, Load]
    generators: Mapping[str, Generator]

    @property
    def z_base(self) -> float:
        return self.base_kv**2 / 3.0 / self.base_mva

    @property
    def faulted_lines(self) -> tuple[str, ...]:
        return tuple(k for k, ln in self.lines.items() if ln.faulted)

    def loads_at(self, bus_id: str) -> list[Load]:
        return [ld for ld in self.loads.values() if ld.bus == bus_id]

    def generators_at(self, bus_id: str) -> list[Generator]:
        return [g for g in self.generators.values() if g.bus == bus_id]

    def kw(self, pu: float) -> float:
        return pu * self.base_mva * 1000.0

    def pu(self, kw: float) -> float:
        return kw / (self.base_mva * 1000.0)


@dataclass(frozen=True)
class BusBlock:
    id: int
    buses: tuple[str, ...]
    switch_lines: tuple[str, ...]


@dataclass(frozen=True)
class Microgrid:
    id: str
    forming: tuple[str, ...]
    buses: tuple[str, ...]
    blocks: tuple[int, ...]
    lines: tuple[str, ...]
    loads: tuple[str, ...]
    generators: tuple[str, ...]


@dataclass(frozen=True)
class MicrogridPartition:
    microgrids: tuple[Microgrid, ...]
    blocks: tuple[BusBlock, ...]
    unrestorable: tuple[tuple[str, ...], ...] = ()
    notes: tuple[str, ...] = ()

    @property
    def by_generator(self) -> dict[str, tuple[int, ...]]:
        out = {}
        for mg in self.microgrids:
            for g in mg.forming:
                out[g] = mg.blocks
        return out

    def get(self, mg_id: str) -> Microgrid:
        for mg in self.microgrids:
            if mg.id == mg_id:
                return mg
        raise KeyError(mg_id)


# --------------------------------------------------------------------------- parsing


def _require(obj: Mapping, key: str, where: str):
    if key not in obj:
        raise FeederSchemaError(f"{where}: missing field {key!r}")
    return obj[key]


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise FeederSchemaError(f"{where}: expected a number, got {value!r}")
    if not math.isfinite(value):
        raise FeederSchemaError(f"{where}: non-finite value")
    return float(value)


def _per_phase(values, where: str) -> dict[str, float]:
    if not isinstance(values, Mapping):
        raise FeederSchemaError(f"{where}: expected a phase -> value mapping")
    out = {}
    for ph, v in values.items():
        (p,) = normalize_phases(ph)
        out[p] = _number(v, f"{where}[{ph}]")
    return out


def _impedance(raw, where: str) -> np.ndarray:
    try:
        z = np.array([[complex(_number(e[0], where), _number(e[1], where)) for e in row] for row in raw])
    except (TypeError, IndexError) as exc:
        raise FeederSchemaError(f"{where}: impedance must be 3x3 [re, im] pairs") from exc
    if z.shape != (3, 3):
        raise FeederSchemaError(f"{where}: impedance must be 3x3")
    return z


def parse_feeder(text: str) -> NetworkModel:
    """Parse a JSON feeder document (see docs/formats.md) into a validated model."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FeederSchemaError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, Mapping):
        raise FeederSchemaError("feeder document must be a JSON object")

    base = _require(doc, "base", "document")
    kv = _number(_require(base, "kv", "base"), "base.kv")
    mva = _number(_require(base, "mva", "base"), "base.mva")
    if kv <= 0 or mva <= 0:
        raise FeederSchemaError("base.kv and base.mva must be positive")
    kw_base = mva * 1000.0
    z_base = kv**2 / 3.0 / mva

    buses: dict[str, Bus] = {}
    for i, raw in enumerate(_require(doc, "buses", "document")):
        where = f"buses[{i}]"
        bid = str(_require(raw, "id", where))
        if bid in buses:
            raise FeederSchemaError(f"{where}: duplicate bus id {bid!r}")
        vmin = _number(raw.get("v_min", 0.95), f"{where}.v_min")
        vmax = _number(raw.get("v_max", 1.05), f"{where}.v_max")
        buses[bid] = Bus(bid, normalize_phases(_require(raw, "phases", where)), vmin**2, vmax**2)

    def check_bus(bid, where):
        if bid not in buses:
            raise FeederReferenceError(f"{where}: unknown bus {bid!r}")
        return buses[bid]

    def check_subset(phases, bus, where):
        extra = [p for p in phases if p not in bus.phases]
        if extra:
            raise FeederReferenceError(
                f"{where}: phase(s) {extra} absent at bus {bus.id} (has {''.join(bus.phases)})"
            )

    lines: dict[str, Line] = {}
    for i, raw in enumerate(_require(doc, "lines", "document")):
        where = f"lines[{i}]"
        lid = str(_require(raw, "id", where))
        if lid in lines:
            raise FeederSchemaError(f"{where}: duplicate line id {lid!r}")
        fb = check_bus(str(_require(raw, "from", where)), where)
        tb = check_bus(str(_require(raw, "to", where)), where)
        phases = normalize_phases(_require(raw, "phases", where))
        check_subset(phases, fb, where)
        check_subset(phases, tb, where)
        z = _impedance(_require(raw, "impedance", where), where) / z_base
        lines[lid] = Line(
            lid,
            fb.id,
            tb.id,
            phases,
            z,
            switchable=bool(raw.get("switchable", False)),
            p_max=_number(raw.get("p_max_kw", 1000.0 * mva), f"{where}.p_max_kw") / kw_base,
            q_max=_number(raw.get("q_max_kvar", 1000.0 * mva), f"{where}.q_max_kvar") / kw_base,
        )

    loads: dict[str, Load] = {}
    for i, raw in enumerate(doc.get("loads", [])):
        where = f"loads[{i}]"
        lid = str(_require(raw, "id", where))
        if lid in loads:
            raise FeederSchemaError(f"{where}: duplicate load id {lid!r}")
        bus = check_bus(str(_require(raw, "bus", where)), where)
        p = {k: v / kw_base for k, v in _per_phase(_require(raw, "kw", where), f"{where}.kw").items()}
        q = {k: v / kw_base for k, v in _per_phase(raw.get("kvar", {}), f"{where}.kvar").items()}
        check_subset(tuple(set(p) | set(q)), bus, where)
        loads[lid] = Load(
            lid,
            bus.id,
            p,
            q,
            switchable=bool(raw.get("switchable", True)),
            priority=_number(raw.get("priority", 1.0), f"{where}.priority"),
        )

    gens: dict[str, Generator] = {}
    for i, raw in enumerate(doc.get("generators", [])):
        where = f"generators[{i}]"
        gid = str(_require(raw, "id", where))
        if gid in gens:
            raise FeederSchemaError(f"{where}: duplicate generator id {gid!r}")
        bus = check_bus(str(_require(raw, "bus", where)), where)
        p = {k: v / kw_base for k, v in _per_phase(_require(raw, "kw", where), f"{where}.kw").items()}
        q = {k: v / kw_base for k, v in _per_phase(raw.get("kvar", {}), f"{where}.kvar").items()}
        check_subset(tuple(set(p) | set(q)), bus, where)
        gens[gid] = Generator(gid, bus.id, str(_require(raw, "kind", where)), p, q)

    net = NetworkModel(
        name=str(doc.get("name", "feeder")),
        base_kv=kv,
        base_mva=mva,
        buses=buses,
        lines=lines,
        loads=loads,
        generators=gens,
    )
    faults = doc.get("faults", [])
    if not isinstance(faults, list):
        raise FeederSchemaError("faults must be a list of line ids")
    return apply_faults(net, [str(f) for f in faults]) if faults else net


def load_feeder(path) -> NetworkModel:
    with open(path, encoding="utf-8") as fh:
        return parse_feeder(fh.read())


def feeder_to_dict(net: NetworkModel) -> dict:
    """Inverse of :func:`parse_feeder` (engineering units)."""
    kw_base = net.base_mva * 1000.0

    def per_phase(d):
        return {p: d[p] * kw_base for p in PHASES if p in d}

    lines = []
    for ln in net.lines.values():
        z = ln.impedance * net.z_base
        lines.append(
            {
                "id": ln.id,
                "from": ln.from_bus,
                "to": ln.to_bus,
                "phases": "".join(ln.phases),
                "switchable": ln.switchable,
                "impedance": [[[z[r, c].real, z[r, c].imag] for c in range(3)] for r in range(3)],
                "p_max_kw": ln.p_max * kw_base,
                "q_max_kvar": ln.q_max * kw_base,
            }
        )
    return {
        "name": net.name,
        "base": {"kv": net.base_kv, "mva": net.base_mva},
        "buses": [
            {
                "id": b.id,
                "phases": "".join(b.phases),
                "v_min": math.sqrt(b.v_min_sq),
                "v_max": math.sqrt(b.v_max_sq),
            }
            for b in net.buses.values()
        ],
        "lines": lines,
        "loads": [
            {
                "id": ld.id,
                "bus": ld.bus,
                "kw": per_phase(ld.p),
                "kvar": per_phase(ld.q),
                "switchable": ld.switchable,
                "priority": ld.priority,
            }
            for ld in net.loads.values()
        ],
        "generators": [
            {
                "id": g.id,
                "bus": g.bus,
                "kind": g.kind,
                "kw": per_phase(g.p_max),
                "kvar": per_phase(g.q_max),
            }
            for g in net.generators.values()
        ],
        "faults": list(net.faulted_lines),
    }


# --------------------------------------------------------------------------- analysis


class _UnionFind:
    def __init__(self, items: Iterable[str]):
        self.parent = {x: x for x in items}

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        # keep the smallest bus id as representative for stable output
        if bus_sort_key(rb) < bus_sort_key(ra):
            ra, rb = rb, ra
        self.parent[rb] = ra

    def groups(self) -> list[tuple[str, ...]]:
        out: dict[str, list[str]] = {}
        for x in self.parent:
            out.setdefault(self.find(x), []).append(x)
        groups = [tuple(sorted(g, key=bus_sort_key)) for g in out.values()]
        return sorted(groups, key=lambda g: bus_sort_key(g[0]))


def compute_bus_blocks(net: NetworkModel) -> list[BusBlock]:
    """Partition buses into blocks joined by healthy non-switchable lines."""
    uf = _UnionFind(net.buses)
    for ln in net.lines.values():
        if not ln.switchable and not ln.faulted:
            uf.union(ln.from_bus, ln.to_bus)
    blocks = []
    for idx, group in enumerate(uf.groups()):
        members = set(group)
        switches = sorted(
            (
                ln.id
                for ln in net.lines.values()
                if ln.switchable and not ln.faulted and (ln.from_bus in members or ln.to_bus in members)
            ),
            key=bus_sort_key,
        )
        blocks.append(BusBlock(idx, group, tuple(switches)))
    return blocks


def apply_faults(net: NetworkModel, faulted_line_ids: Iterable[str]) -> NetworkModel:
    """Return a copy with the given lines marked faulted (idempotent)."""
    ids = list(faulted_line_ids)
    unknown = [k for k in ids if k not in net.lines]
    if unknown:
        raise FeederReferenceError(f"unknown line id(s) {unknown}")
    if not ids:
        return net
    lines = dict(net.lines)
    for k in ids:
        lines[k] = replace(lines[k], faulted=True)
    return replace(net, lines=lines)


def partition_microgrids(net: NetworkModel) -> MicrogridPartition:
    """Split the faulted network into islands; islands with a grid-forming unit
    become microgrids, the rest are reported as unrestorable."""
    blocks = compute_bus_blocks(net)
    block_of = {b: blk.id for blk in blocks for b in blk.buses}
    uf = _UnionFind(net.buses)
    for ln in net.lines.values():
        if not ln.faulted:
            uf.union(ln.from_bus, ln.to_bus)

    microgrids, unrestorable, notes = [], [], []
    for island in uf.groups():
        members = set(island)
        forming = sorted(
            (g.id for g in net.generators.values() if g.forming and g.bus in members),
            key=bus_sort_key,
        )
        if not forming:
            unrestorable.append(island)
            continue
        if len(forming) > 1:
            notes.append(
                f"island containing bus {island[0]} has {len(forming)} grid-forming units "
                f"({', '.join(forming)}); treated as one microgrid"
            )
        mg_lines = tuple(
            k for k, ln in net.lines.items() if ln.from_bus in members and ln.to_bus in members
        )
        microgrids.append(
            Microgrid(
                id=f"MG{len(microgrids) + 1}",
                forming=tuple(forming),
                buses=island,
                blocks=tuple(sorted({block_of[b] for b in island})),
                lines=mg_lines,
                loads=tuple(k for k, ld in net.loads.items() if ld.bus in members),
                generators=tuple(k for k, g in net.generators.items() if g.bus in members),
            )
        )
    return MicrogridPartition(tuple(microgrids), tuple(blocks), tuple(unrestorable), tuple(notes))


def equivalent_impedance(z) -> tuple[np.ndarray, np.ndarray]:
    """Approximate unbalanced impedance ``(a a^H) * z`` split into (R_hat, X_hat)."""
    zhat = _UNBALANCE * np.asarray(z, dtype=complex)
    return zhat.real.copy(), zhat.imag.copy()
