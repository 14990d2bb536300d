import json
from dataclasses import replace
from pathlib import Path

import pytest

from dsrestore.coordinator import ScenarioConfig, run_sequential_restoration
from dsrestore.network import load_feeder, parse_feeder

DATA = Path(__file__).resolve().parents[1] / "src" / "dsrestore" / "data"


def bundled(name):
    return load_feeder(DATA / f"{name}.json")


def chain_doc(n=3, switchable=None, forming_kw=100.0, loads=None, faults=()):
    """Small three-phase chain 1-2-...-n with a forming unit at bus 1."""
    switchable = (True,) * (n - 1) if switchable is None else switchable
    z = [[[0.05, 0.1] if r == c else [0.0, 0.0] for c in range(3)] for r in range(3)]
    buses = [{"id": str(i), "phases": "abc"} for i in range(1, n + 1)]
    lines = [
        {"id": f"{i}-{i + 1}", "from": str(i), "to": str(i + 1), "phases": "abc",
         "switchable": bool(switchable[i - 1]), "impedance": z, "p_max_kw": 500.0, "q_max_kvar": 500.0}
        for i in range(1, n)
    ]
    if loads is None:
        loads = [{"id": f"L{i}", "bus": str(i), "kw": {"a": 10.0, "b": 10.0, "c": 10.0},
                  "kvar": {"a": 2.0, "b": 2.0, "c": 2.0}} for i in range(2, n + 1)]
    gens = [{"id": "GF1", "bus": "1", "kind": "grid-forming",
             "kw": {p: forming_kw for p in "abc"}, "kvar": {p: forming_kw / 2 for p in "abc"}}]
    return {"name": "chain", "base": {"kv": 4.16, "mva": 1.0}, "buses": buses, "lines": lines,
            "loads": loads, "generators": gens, "faults": list(faults)}


def chain(**kw):
    return parse_feeder(json.dumps(chain_doc(**kw)))


@pytest.fixture(scope="session")
def toy3():
    return bundled("toy3")


@pytest.fixture(scope="session")
def ieee13():
    return bundled("ieee13")


@pytest.fixture(scope="session")
def ieee123():
    return bundled("ieee123")


@pytest.fixture(scope="session")
def run123(ieee123):
    """Constrained run on the 123-bus case with bundled defaults."""
    return run_sequential_restoration(ieee123, ScenarioConfig(), keep_states=True)


@pytest.fixture(scope="session")
def run123_free(ieee123):
    return run_sequential_restoration(ieee123, ScenarioConfig(frequency_constraints=False))


@pytest.fixture(scope="session")
def run123_t2(ieee123):
    return run_sequential_restoration(ieee123, ScenarioConfig(horizon=2))


@pytest.fixture(scope="session")
def run123_alpha1(ieee123):
    return run_sequential_restoration(ieee123, replace(ScenarioConfig(), alpha=1.0))


# acceptance verdicts, printed once at the end of the session
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
