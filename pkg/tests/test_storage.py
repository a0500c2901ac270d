# coding=utf-8
import json

import numpy as np
import pytest

from densitysteer.density.grid import Grid
from densitysteer.density.mixture import discretize
from densitysteer.storage.base import RunRecord
from densitysteer.storage.local import LocalArtifactStore, csv_header, read_density_csv, read_grid_csv
from densitysteer.utils.errors import DomainError

from tests.conftest import gaussian_1d


@pytest.fixture
def sigma():
    return discretize(gaussian_1d(0.0, 0.5), Grid.from_bounds([-4.0], [4.0], 81))


def _write(output_dir, sigma):
    with LocalArtifactStore(str(output_dir)) as store:
        store.write_density("sigma_t0.000", sigma, t=0.0)
        store.write_convergence([(1e-2, 2e-2), (1e-6, 3e-6)])
        store.write_run(RunRecord(mode="bridge", scenario={"name": "unit"}, epsilon=0.1))


def test_csv_header():
    assert csv_header(1) == "axis0,value"
    assert csv_header(3) == "axis0,axis1,axis2,value"


def test_density_round_trip_keeps_mass(tmp_path, sigma):
    out = tmp_path / "run"
    _write(out, sigma)
    again = read_density_csv(str(out / "sigma_t0.000.csv"))
    assert again.total_mass() == pytest.approx(sigma.total_mass(), abs=1e-12)
    np.testing.assert_array_equal(again.values, sigma.values)
    with open(out / "sigma_t0.000.csv", encoding="utf-8") as f:
        assert f.readline().strip() == "axis0,value"


def test_run_record_lists_snapshots(tmp_path, sigma):
    out = tmp_path / "run"
    _write(out, sigma)
    with open(out / "run.json", encoding="utf-8") as f:
        record = RunRecord.from_dict(json.load(f))
    assert record.mode == "bridge"
    assert [snap.name for snap in record.snapshots] == ["sigma_t0.000.csv"]
    assert record.snapshots[0].mass == pytest.approx(1.0, abs=1e-3)
    rows = np.loadtxt(out / "convergence.csv", delimiter=",", skiprows=1)
    assert rows.shape == (2, 3)


def test_reruns_are_byte_identical(tmp_path, sigma):
    _write(tmp_path / "a", sigma)
    _write(tmp_path / "b", sigma)
    for name in ("sigma_t0.000.csv", "convergence.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_commit_replaces_previous_output(tmp_path, sigma):
    out = tmp_path / "run"
    out.mkdir()
    (out / "stale.csv").write_text("old", encoding="utf-8")
    _write(out, sigma)
    assert not (out / "stale.csv").exists()
    assert (out / "run.json").exists()


def test_failure_leaves_target_untouched(tmp_path, sigma):
    out = tmp_path / "run"
    out.mkdir()
    (out / "keep.csv").write_text("old", encoding="utf-8")
    with pytest.raises(RuntimeError):
        with LocalArtifactStore(str(out)) as store:
            store.write_density("sigma_t0.000", sigma, t=0.0)
            raise RuntimeError("boom")
    assert sorted(p.name for p in out.iterdir()) == ["keep.csv"]
    # 暂存目录也已清理
    assert sorted(p.name for p in tmp_path.iterdir()) == ["run"]


def test_closed_store_rejects_writes(tmp_path, sigma):
    store = LocalArtifactStore(str(tmp_path / "run"))
    store.commit()
    with pytest.raises(DomainError):
        store.write_density("late", sigma)


def test_value_count_must_match_grid(tmp_path):
    grid = Grid.from_bounds([0.0, 0.0], [1.0, 1.0], 3)
    store = LocalArtifactStore(str(tmp_path / "run"))
    with pytest.raises(DomainError):
        store.write_grid_values("psi", grid, np.zeros(8))
    store.abort()


def test_grid_csv_round_trip_in_two_dimensions(tmp_path):
    grid = Grid.from_bounds([-1.0, 0.0], [1.0, 2.0], [5, 4])
    values = np.arange(grid.size, dtype=float).reshape(grid.shape)
    with LocalArtifactStore(str(tmp_path / "run")) as store:
        store.write_grid_values("psi", grid, values, kind="value", t=0.5)
    grid_back, values_back = read_grid_csv(str(tmp_path / "run" / "psi.csv"))
    assert grid_back.shape == grid.shape
    np.testing.assert_array_equal(values_back, values)
