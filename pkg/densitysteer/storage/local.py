# coding=utf-8
"""
本地产物存储 - CSV 网格场 + JSON 摘要

所有文件先写入目标目录旁的临时目录，commit() 时整体改名到位；
CSV 中浮点数按 %.17g 写出且不含时间戳，相同输入得到逐字节相同的文件。
"""

import json
import logging
import shutil
import tempfile
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from densitysteer.density.grid import DEFAULT_MASS_TOLERANCE, Grid, GridDensity
from densitysteer.storage.base import ArtifactStore, RunRecord, SnapshotRecord
from densitysteer.utils.errors import DomainError


logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def _jsonable(value: Any) -> Any:
    """json.dump 的 default：把 numpy 标量与数组转成原生类型"""
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"无法序列化 {type(value).__name__}")


def csv_header(dimension: int) -> str:
    return ",".join([f"axis{k}" for k in range(dimension)] + ["value"])


class LocalArtifactStore(ArtifactStore):
    """
    本地产物存储后端

    用法：
        with LocalArtifactStore("output/run") as store:
            store.write_density("sigma_t0.000", sigma, t=0.0)
            store.write_run(record)
    正常退出时 commit，异常时丢弃暂存区，目标目录保持原状。
    """

    def __init__(self, output_dir: str):
        """
        初始化本地存储后端

        Args:
            output_dir: 最终输出目录（提交前不会被触碰）
        """
        self.output_dir = Path(output_dir).resolve()
        self.output_dir.parent.mkdir(parents=True, exist_ok=True)
        self._staging = Path(tempfile.mkdtemp(prefix=f".{self.output_dir.name}.", dir=self.output_dir.parent))
        self._records: List[SnapshotRecord] = []
        self._closed = False
        logger.debug(f"[产物存储] 暂存目录: {self._staging}")

    @property
    def backend_name(self) -> str:
        return "local"

    @property
    def records(self) -> List[SnapshotRecord]:
        return list(self._records)

    def _path(self, name: str, suffix: str) -> Path:
        if self._closed:
            raise DomainError("产物存储已提交或丢弃，不能继续写入", code="STORE_CLOSED")
        path = self._staging / f"{name}{suffix}"
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    # ========================================
    # 写出
    # ========================================

    def write_grid_values(
        self,
        name: str,
        grid: Grid,
        values: np.ndarray,
        kind: str = "value",
        t: Optional[float] = None,
        provenance: Optional[Dict[str, Any]] = None,
        mass: Optional[float] = None,
    ) -> SnapshotRecord:
        values = np.asarray(values, dtype=float)
        if values.size != grid.size:
            raise DomainError(f"{name}: 数值个数 {values.size} 与网格节点数 {grid.size} 不符")
        table = np.column_stack([grid.points(), values.ravel()])
        path = self._path(name, ".csv")
        np.savetxt(path, table, fmt=FLOAT_FORMAT, delimiter=",", header=csv_header(grid.dimension), comments="")
        record = SnapshotRecord(
            name=f"{name}.csv",
            kind=kind,
            t=None if t is None else float(t),
            grid=grid.to_dict(),
            mass=mass,
            provenance=dict(provenance or {}),
        )
        self._records.append(record)
        return record

    def write_density(self, name: str, density: GridDensity, t: Optional[float] = None) -> SnapshotRecord:
        return self.write_grid_values(
            name, density.grid, density.values, kind="density", t=t,
            provenance=density.provenance, mass=density.total_mass(),
        )

    def write_convergence(self, history: Sequence[Tuple[float, float]], name: str = "convergence") -> str:
        path = self._path(name, ".csv")
        rows = np.array([(k + 1, h0, h1) for k, (h0, h1) in enumerate(history)], dtype=float).reshape(-1, 3)
        np.savetxt(path, rows, fmt=("%d", FLOAT_FORMAT, FLOAT_FORMAT), delimiter=",", header="iteration,residual_h0,residual_h1", comments="")
        return f"{name}.csv"

    def write_json(self, name: str, payload: Dict[str, Any]) -> str:
        path = self._path(name, ".json")
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload, f, ensure_ascii=False, indent=2, sort_keys=True, default=_jsonable)
        return f"{name}.json"

    def write_run(self, record: RunRecord) -> str:
        if not record.snapshots:
            record.snapshots = self.records
        return self.write_json("run", record.to_dict())

    # ========================================
    # 提交
    # ========================================

    def commit(self) -> str:
        """暂存目录整体改名为输出目录；已有的同名目录先移开再删除"""
        if self._closed:
            raise DomainError("产物存储已提交或丢弃", code="STORE_CLOSED")
        backup = None
        if self.output_dir.exists():
            backup = Path(tempfile.mkdtemp(prefix=f".{self.output_dir.name}.old.", dir=self.output_dir.parent))
            backup.rmdir()
            self.output_dir.rename(backup)
        self._staging.rename(self.output_dir)
        if backup is not None:
            shutil.rmtree(backup, ignore_errors=True)
        self._closed = True
        logger.info(f"[产物存储] 已提交 {len(self._records)} 个网格文件到 {self.output_dir}")
        return str(self.output_dir)

    def abort(self) -> None:
        if not self._closed:
            shutil.rmtree(self._staging, ignore_errors=True)
            self._closed = True
            logger.info("[产物存储] 已丢弃暂存目录")

    def __enter__(self) -> "LocalArtifactStore":
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        if exc_type is None:
            self.commit()
        else:
            self.abort()
        return False


def read_grid_csv(path: str) -> Tuple[Grid, np.ndarray]:
    """读回网格场：各轴节点取该列的去重排序值"""
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    dimension = table.shape[1] - 1
    axes = tuple(np.unique(table[:, k]) for k in range(dimension))
    grid = Grid(axes)
    if grid.size != len(table):
        raise DomainError(f"{path}: 行数 {len(table)} 与网格节点数 {grid.size} 不符")
    return grid, table[:, -1].reshape(grid.shape)


def read_density_csv(path: str, mass_tolerance: float = DEFAULT_MASS_TOLERANCE) -> GridDensity:
    """读回密度文件（重新校验质量不变量）"""
    grid, values = read_grid_csv(path)
    return GridDensity(grid, values, provenance={"source": str(path)}, mass_tolerance=mass_tolerance)
