import math

import pytest

from dsrestore.config import (
    ConfigError,
    config_from_dict,
    config_to_dict,
    default_config_path,
    inverter_from_si,
    load_config,
)
from dsrestore.coordinator import ScenarioConfig
from dsrestore.transient import InverterParams


def test_bundled_defaults_match_dataclass():
    assert load_config(default_config_path()) == ScenarioConfig()


def test_empty_document_is_default():
    assert config_from_dict({}) == ScenarioConfig()


@pytest.mark.parametrize("doc", [
    {"extra": {}},
    {"scenario": {"horizonn": 3}},
    {"scenario": {"horizon": "4"}},
    {"scenario": {"frequency_constraints": 1}},
    {"scenario": {"horizon": 0}},
    {"milp": {"backend": "gurobi"}},
    {"inverter": {"l": -1.0}},
])
def test_bad_documents_rejected(doc):
    with pytest.raises(ConfigError):
        config_from_dict(doc)


def test_droop_si_conversion():
    # 1e-5 rad/s per W on a 1 MVA base is 10 rad/s per pu
    p = inverter_from_si({"d_p": 1e-5, "base_mva": 1.0})
    assert p.d_p == pytest.approx(10.0)
    p = inverter_from_si({"d_q": 1e-5, "base_mva": 2.0, "base_kv": 4.16})
    assert p.d_q == pytest.approx(1e-5 * 2e6 / (4160.0 / math.sqrt(3.0)))
    assert inverter_from_si({"omega_c_hz": 5.0}).omega_c == pytest.approx(10.0 * math.pi)


def test_per_microgrid_override_and_f0():
    cfg = config_from_dict({"scenario": {"f0": 50.0}, "inverter": {"d_p": 1e-5, "MG2": {"d_p": 3e-5}}})
    assert cfg.sim_f0 == 50.0 and cfg.f_min == pytest.approx(49.5)
    assert cfg.inverter.omega_0 == pytest.approx(100.0 * math.pi)
    assert cfg.inverter_for("MG2").d_p == pytest.approx(30.0)
    assert cfg.inverter_for("MG1").d_p == pytest.approx(10.0)


def test_bad_toml(tmp_path):
    p = tmp_path / "x.toml"
    p.write_text("[scenario\nhorizon = 3\n")
    with pytest.raises(ConfigError):
        load_config(p)


def test_config_to_dict_shape():
    d = config_to_dict(ScenarioConfig())
    assert d["scenario"]["horizon"] == 4 and d["milp"]["backend"] == "highs"
    assert set(d["inverter_pu"]) == {f for f in InverterParams.__dataclass_fields__}
