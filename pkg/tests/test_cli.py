# coding=utf-8
import json

import pytest

from densitysteer.__main__ import main, snapshot_name
from densitysteer.core.scenario import BUILTIN_SCENARIOS
from densitysteer.utils.errors import EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_OK


def test_snapshot_name():
    assert snapshot_name("sigma", 0.2) == "sigma_t0.200"
    assert snapshot_name("ot/rho", 1.0) == "ot/rho_t1.000"


def test_list_builtins(capsys):
    assert main(["--list-builtins"]) == EXIT_OK
    out = capsys.readouterr().out
    for name in BUILTIN_SCENARIOS:
        assert name in out


def test_missing_config_file(tmp_path, capsys):
    assert main(["--config", str(tmp_path / "missing.yaml")]) == EXIT_CONFIG
    assert "配置文件错误" in capsys.readouterr().out


def test_bad_snapshot_override(tmp_path):
    code = main(["--builtin", "example1", "--snapshots", "0,0.5", "--output-dir", str(tmp_path / "out")])
    assert code == EXIT_CONFIG
    assert not (tmp_path / "out").exists()


def test_unknown_builtin_is_rejected_by_parser():
    with pytest.raises(SystemExit) as exc_info:
        main(["--builtin", "nope"])
    assert exc_info.value.code == 2


def test_verify_mode_writes_report(tmp_path):
    out = tmp_path / "verify"
    assert main(["--builtin", "brunovsky2d", "--mode", "verify", "--output-dir", str(out)]) == EXIT_OK
    with open(out / "run.json", encoding="utf-8") as f:
        record = json.load(f)
    assert record["mode"] == "verify"
    assert record["diagnostics"]["linearizability"]["passed"] is True
    assert (out / "verify.json").exists()


@pytest.mark.slow
def test_hjb_mode_cross_checks_value_lattices(tmp_path):
    out = tmp_path / "hjb"
    assert main(["--builtin", "brunovsky2d", "--output-dir", str(out)]) == EXIT_OK
    with open(out / "run.json", encoding="utf-8") as f:
        record = json.load(f)
    assert set(record["diagnostics"]["agreement"]) == {
        "upper_envelope-characteristic",
        "riccati_oracle-characteristic",
    }
    assert record["diagnostics"]["agreement"]["riccati_oracle-characteristic"] < 1e-5
    assert (out / "hjb" / "psi_characteristic_t0.500.csv").exists()


@pytest.mark.slow
def test_convergence_failure_leaves_no_output(tmp_path):
    out = tmp_path / "bridge"
    code = main([
        "--builtin", "brunovsky2d", "--mode", "bridge",
        "--max-iter", "1", "--tolerance", "1e-14", "--output-dir", str(out),
    ])
    assert code == EXIT_CONVERGENCE
    assert not out.exists()
