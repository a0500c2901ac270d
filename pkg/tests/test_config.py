# coding=utf-8
import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from densitysteer.core.config import parse_diagonal_or_matrix, parse_snapshot_times, validate_grid_section
from densitysteer.core.loader import load_builtin, load_config
from densitysteer.core.scenario import BUILTIN_SCENARIOS, Scenario
from densitysteer.utils.errors import EXIT_CONFIG, ConfigurationError


PROJECT_CONFIG = Path(__file__).resolve().parent.parent / "config" / "config.yaml"

ENV_KEYS = ("STEER_EPSILON", "STEER_MAX_ITER", "STEER_TOLERANCE", "STEER_SNAPSHOTS", "STEER_OUTPUT_DIR", "STEER_MODE")


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for key in ENV_KEYS:
        monkeypatch.delenv(key, raising=False)


def _write_yaml(path, document):
    path.write_text(yaml.safe_dump(document), encoding="utf-8")
    return str(path)


def test_project_config_loads():
    scenario = Scenario.from_config(load_config(str(PROJECT_CONFIG)))
    assert scenario.system == "vdp2d"
    assert scenario.dimension == 2
    assert scenario.snapshots == [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]


def test_json_scenario_is_accepted(tmp_path):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(BUILTIN_SCENARIOS["brunovsky2d"]), encoding="utf-8")
    scenario = Scenario.from_config(load_config(str(path)))
    assert scenario.mode == "hjb"
    assert scenario.hjb_potential == "gaussian"


def test_environment_overrides(monkeypatch):
    monkeypatch.setenv("STEER_EPSILON", "0.02")
    monkeypatch.setenv("STEER_MAX_ITER", "77")
    monkeypatch.setenv("STEER_SNAPSHOTS", "0,0.5,1")
    monkeypatch.setenv("STEER_OUTPUT_DIR", "elsewhere")
    monkeypatch.setenv("STEER_MODE", "ot")
    config = load_builtin("example1")
    assert config["BRIDGE"]["EPSILON"] == 0.02
    assert config["BRIDGE"]["MAX_ITER"] == 77
    assert config["OUTPUT"]["SNAPSHOTS"] == [0.0, 0.5, 1.0]
    assert config["OUTPUT"]["DIR"] == "elsewhere"
    assert config["MODE"] == "ot"


def test_unparsable_environment_value_is_ignored(monkeypatch):
    monkeypatch.setenv("STEER_MAX_ITER", "many")
    assert load_builtin("example1")["BRIDGE"]["MAX_ITER"] == 5000


def test_config_path_from_environment(monkeypatch, tmp_path):
    path = _write_yaml(tmp_path / "scenario.yaml", BUILTIN_SCENARIOS["example1"])
    monkeypatch.setenv("DENSITYSTEER_CONFIG", path)
    assert load_config()["NAME"] == "example1"


def test_missing_file_raises():
    with pytest.raises(FileNotFoundError):
        load_config("does/not/exist.yaml")


def test_version_is_required(tmp_path):
    document = {key: value for key, value in BUILTIN_SCENARIOS["example1"].items() if key != "version"}
    with pytest.raises(ConfigurationError) as exc_info:
        load_config(_write_yaml(tmp_path / "scenario.yaml", document))
    assert exc_info.value.field == "version"
    assert exc_info.value.exit_code == EXIT_CONFIG


def test_unsupported_version_is_rejected(tmp_path):
    document = dict(BUILTIN_SCENARIOS["example1"], version=2)
    with pytest.raises(ConfigurationError) as exc_info:
        Scenario.from_config(load_config(_write_yaml(tmp_path / "scenario.yaml", document)))
    assert exc_info.value.field == "version"


def test_bad_weights_report_field_path():
    config = load_builtin("example1")
    config["MARGINALS"]["RHO0"]["WEIGHTS"] = [0.5, 0.6]
    with pytest.raises(ConfigurationError) as exc_info:
        Scenario.from_config(config)
    assert exc_info.value.field == "marginals.rho0.weights"
    assert str(exc_info.value).startswith("marginals.rho0.weights: ")


def test_riccati_requires_gaussian_potential():
    config = load_builtin("brunovsky2d")
    config["HJB"]["POTENTIAL"] = "entropic"
    with pytest.raises(ConfigurationError) as exc_info:
        Scenario.from_config(config)
    assert exc_info.value.field == "hjb.kinds"


def test_unknown_builtin():
    with pytest.raises(ConfigurationError) as exc_info:
        load_builtin("example9")
    assert exc_info.value.field == "builtin"


def test_builtin_copies_are_independent():
    load_builtin("example1")["BRIDGE"]["EPSILON"] = 99.0
    assert load_builtin("example1")["BRIDGE"]["EPSILON"] == 1e-3


@pytest.mark.parametrize("value", ["", "0,0.5", "0,abc,1", [0.0, 1.5, 1.0]])
def test_bad_snapshot_times(value):
    with pytest.raises(ConfigurationError):
        parse_snapshot_times(value)


def test_covariance_forms():
    np.testing.assert_allclose(parse_diagonal_or_matrix([0.1, 0.2], 2, "c"), np.diag([0.1, 0.2]))
    full = [[0.1, 0.02], [0.02, 0.2]]
    np.testing.assert_allclose(parse_diagonal_or_matrix(full, 2, "c"), full)
    with pytest.raises(ConfigurationError):
        parse_diagonal_or_matrix([0.1, 0.2, 0.3], 2, "c")


def test_grid_section_validation():
    lower, upper, counts = validate_grid_section({"LOWER": [-1, -1], "UPPER": [1, 1], "NODES": 11}, 2, "grid.x")
    assert counts == [11, 11]
    with pytest.raises(ConfigurationError) as exc_info:
        validate_grid_section({"LOWER": [1, -1], "UPPER": [0, 1], "NODES": 11}, 2, "grid.x")
    assert exc_info.value.field == "grid.x.upper"
    with pytest.raises(ConfigurationError):
        validate_grid_section({"LOWER": [-1], "UPPER": [1], "NODES": 2}, 1, "grid.x")


def test_bridge_options_reach_scenario():
    scenario = Scenario.from_config(load_config(str(PROJECT_CONFIG)))
    assert scenario.renormalize is False
    assert scenario.match_endpoints is True
    assert scenario.anneal_from == pytest.approx(0.05)
    assert scenario.anneal_factor == pytest.approx(2.0)
    assert scenario.reconstruction == "coupling"
    assert scenario.pair_prune == pytest.approx(1e-14)


def test_example1_z_grid_covers_mean_path():
    scenario = Scenario.from_config(load_builtin("example1"))
    assert scenario.anneal_from == pytest.approx(0.05)
    assert scenario.zgrid.lower == [-2.0, -2.0]
    assert scenario.zgrid.upper == [2.0, 2.0]
    assert scenario.zgrid.nodes == [101, 101]


def test_unknown_reconstruction_is_rejected():
    config = load_builtin("example1")
    config["BRIDGE"]["RECONSTRUCTION"] = "spline"
    with pytest.raises(ConfigurationError) as exc_info:
        Scenario.from_config(config)
    assert exc_info.value.field == "bridge.reconstruction"
