import json

import numpy as np
import pytest

from dsrestore.coordinator import ScenarioConfig, run_sequential_restoration
from dsrestore.io import (
    FORMAT,
    ArtifactError,
    read_solution,
    read_stages_csv,
    read_traces_csv,
    run_to_dict,
    stage_from_dict,
    stage_to_dict,
    write_run,
    write_stages_csv,
    write_traces_csv,
)


@pytest.fixture(scope="module")
def toy_run(toy3):
    return run_sequential_restoration(toy3, ScenarioConfig(horizon=2), keep_states=True)


def test_write_run_artifacts(toy_run, toy3, tmp_path):
    paths = write_run(toy_run, toy3, tmp_path)
    assert sorted(p.name for p in paths.values()) == ["solution.json", "stages.csv", "summary.txt", "traces.csv"]
    doc = read_solution(paths["solution"])
    assert doc["format"] == FORMAT
    assert doc["final_kw"] == toy_run.final_kw
    assert [r["stage"] for r in doc["summary"]] == [s.stage for s in toy_run.stages for _ in s.restored_kw]


def test_csv_fixpoint(toy_run, toy3, tmp_path):
    paths = write_run(toy_run, toy3, tmp_path)
    rows = read_stages_csv(paths["stages"])
    write_stages_csv(rows, tmp_path / "again.csv")
    assert (tmp_path / "again.csv").read_bytes() == paths["stages"].read_bytes()
    tr = read_traces_csv(paths["traces"])
    write_traces_csv(tr, tmp_path / "again_tr.csv")
    assert (tmp_path / "again_tr.csv").read_bytes() == paths["traces"].read_bytes()


def test_json_fixpoint(toy_run, toy3, tmp_path):
    paths = write_run(toy_run, toy3, tmp_path)
    text = paths["solution"].read_text()
    doc = json.loads(text)
    assert json.dumps(doc, indent=1, allow_nan=False) + "\n" == text


def test_stage_state_roundtrip(toy_run):
    for s in toy_run.stages:
        d = stage_to_dict(s.state)
        back = stage_from_dict(json.loads(json.dumps(d)))
        assert back == s.state


def test_trace_values_are_exact(toy_run, toy3, tmp_path):
    paths = write_run(toy_run, toy3, tmp_path)
    rows = read_traces_csv(paths["traces"])
    s = toy_run.stages[0]
    mg = next(iter(s.restored_kw))
    f = np.array([r[3] for r in rows if r[0] == mg and r[1] == s.stage])
    assert np.array_equal(f, s.traces[mg].f)


def test_identical_config_identical_serialisation(toy3):
    a = run_to_dict(run_sequential_restoration(toy3, ScenarioConfig(horizon=2)), toy3)
    b = run_to_dict(run_sequential_restoration(toy3, ScenarioConfig(horizon=2)), toy3)
    for d in (a, b):
        d.pop("wall_seconds")
        for s in d["stages"]:
            s.pop("solve_seconds")
        for r in d["summary"]:
            r.pop("wall_ms")
    assert a == b


def test_malformed_files(tmp_path):
    bad = tmp_path / "s.csv"
    bad.write_text("a,b\n1,2\n")
    with pytest.raises(ArtifactError):
        read_stages_csv(bad)
    with pytest.raises(ArtifactError):
        read_traces_csv(bad)
    js = tmp_path / "x.json"
    js.write_text("{not json")
    with pytest.raises(ArtifactError):
        read_solution(js)
    js.write_text('{"format": "other"}')
    with pytest.raises(ArtifactError):
        read_solution(js)
    with pytest.raises(ArtifactError):
        stage_from_dict({"stage": 1})
