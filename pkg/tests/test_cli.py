import json
import re

import pytest

from dsrestore.cli import main


def _nadir(out):
    return float(re.search(r"nadir_hz=(\S+)", out).group(1))


@pytest.fixture(scope="module")
def toy_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("toy")
    assert main(["run", "--feeder", "toy3", "--horizon", "2", "--out", str(out)]) == 0
    return out


def test_run_writes_four_artifacts(toy_out):
    assert sorted(p.name for p in toy_out.iterdir()) == ["solution.json", "stages.csv", "summary.txt", "traces.csv"]


def test_run_123_with_plots(tmp_path, capsys):
    assert main(["run", "--feeder", "ieee123", "--out", str(tmp_path), "--plots"]) == 0
    names = {p.name for p in tmp_path.iterdir()}
    assert {"solution.json", "stages.csv", "traces.csv", "summary.txt", "restored_load.svg"} <= names
    assert "termination: saturated" in capsys.readouterr().out
    assert main(["validate", "--run", str(tmp_path)]) == 0


def test_run_unstable_gain_exit_3(tmp_path):
    assert main(["run", "--feeder", "toy3", "--horizon", "2", "--dp", "5e-4", "--out", str(tmp_path)]) == 3


def test_simulate_zero_step(capsys):
    assert main(["simulate", "--pstep", "0"]) == 0
    assert f"{_nadir(capsys.readouterr().out):.4f}" == "60.0000"


def test_simulate_refinement(capsys, tmp_path):
    assert main(["simulate", "--pstep", "0.3", "--dt", "1e-4", "--out", str(tmp_path / "a.csv")]) == 0
    a = _nadir(capsys.readouterr().out)
    assert main(["simulate", "--pstep", "0.3", "--dt", "5e-5"]) == 0
    b = _nadir(capsys.readouterr().out)
    assert abs(a - b) < 1e-4
    assert (tmp_path / "a.csv").read_text().startswith("t_s,f_hz\n")


def test_simulate_unstable_gain_exit_3(capsys):
    assert main(["simulate", "--pstep", "0.3", "--dp", "5e-4"]) == 3
    assert "stable=False" in capsys.readouterr().out


def test_simulate_bad_params(tmp_path):
    bad = tmp_path / "p.toml"
    bad.write_text("[inverter]\nl = -1.0\n")
    assert main(["simulate", "--pstep", "0.1", "--params", str(bad)]) == 1
    assert main(["simulate", "--pstep", "0.1", "--dt", "0"]) == 1


@pytest.mark.parametrize("name", ["toy3", "ieee13", "ieee123"])
def test_validate_clean_feeder(name):
    assert main(["validate", "--feeder", name]) == 0


def test_validate_broken_feeder(tmp_path):
    p = tmp_path / "f.json"
    p.write_text('{"name": "x", "buses": []}')
    assert main(["validate", "--feeder", str(p)]) == 4


def test_validate_toy_run(toy_out):
    assert main(["validate", "--run", str(toy_out)]) == 0
    assert main(["validate", "--run", str(toy_out / "solution.json")]) == 0


def _corrupt(src, tmp_path, edit):
    doc = json.loads((src / "solution.json").read_text())
    edit(doc)
    (tmp_path / "solution.json").write_text(json.dumps(doc))
    return tmp_path


def test_validate_corrupted_flow(toy_out, tmp_path, capsys):
    def edit(doc):
        flows = doc["stages"][-1]["state"]["p_line"]
        key = next(k for k, v in flows.items() if abs(v) > 1e-6)
        flows[key] += 0.01
    assert main(["validate", "--run", str(_corrupt(toy_out, tmp_path, edit))]) == 4
    assert "balance" in capsys.readouterr().out


def test_validate_de_energised_load(toy_out, tmp_path, capsys):
    def edit(doc):
        last = doc["stages"][-1]
        load = next(k for k, v in last["state"]["x_load"].items() if v)
        last["state"]["x_load"][load] = 0
    assert main(["validate", "--run", str(_corrupt(toy_out, tmp_path, edit))]) == 4
    out = capsys.readouterr().out
    assert "issue" in out


def test_validate_missing_run(tmp_path):
    assert main(["validate", "--run", str(tmp_path)]) == 1


def test_oracle_check_seed_42(capsys):
    assert main(["oracle-check", "--seed", "42", "--instances", "100"]) == 0
    assert "all agree" in capsys.readouterr().out


def test_oracle_check_infeasible_family(capsys):
    assert main(["oracle-check", "--seed", "1", "--instances", "10", "--family", "infeasible"]) == 0
    assert "0 optimal, 10 infeasible" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    ["oracle-check", "--max-binaries", "13"],
    ["oracle-check", "--backends", "cplex"],
    ["run", "--bogus"],
    ["frobnicate"],
    [],
    ["validate"],
    ["validate", "--feeder", "toy3", "--run", "x"],
    ["run", "--feeder", "nope.json"],
    ["sweep", "horizon", "--values", "2.5", "--feeder", "toy3"],
    ["sweep", "horizon", "--values", "2", "--horizon", "3"],
])
def test_usage_errors(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 1


def test_sweep_alpha(tmp_path, capsys):
    assert main(["sweep", "alpha", "--values", "0.1,1.0", "--feeder", "toy3", "--horizon", "2",
                 "--out", str(tmp_path)]) == 0
    assert (tmp_path / "sweep.csv").exists() and (tmp_path / "alpha_comparison.svg").exists()
    assert "alpha=0.1" in capsys.readouterr().out
