# coding=utf-8
"""
产物存储抽象基类和数据模型

定义统一的产物写出接口，所有存储后端都需要实现这些方法
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from densitysteer.density.grid import Grid, GridDensity


@dataclass
class SnapshotRecord:
    """单个网格产物文件的描述"""

    name: str                           # 相对输出目录的路径（如 ot/sigma_t0.500.csv）
    kind: str                           # density / control / value / residual
    t: Optional[float] = None           # 快照时刻（无时间维时为 None）
    grid: Dict[str, Any] = field(default_factory=dict)
    mass: Optional[float] = None        # 仅 density 记录
    provenance: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "kind": self.kind,
            "t": self.t,
            "grid": self.grid,
            "mass": self.mass,
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SnapshotRecord":
        return cls(
            name=data.get("name", ""),
            kind=data.get("kind", "density"),
            t=data.get("t"),
            grid=data.get("grid", {}),
            mass=data.get("mass"),
            provenance=data.get("provenance", {}),
        )


@dataclass
class RunRecord:
    """一次运行的摘要（写入 run.json）"""

    mode: str
    scenario: Dict[str, Any]
    epsilon: Optional[float] = None
    iterations: Optional[int] = None
    wall_time: float = 0.0
    endpoint_residuals: Dict[str, float] = field(default_factory=dict)
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    snapshots: List[SnapshotRecord] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mode": self.mode,
            "scenario": self.scenario,
            "epsilon": self.epsilon,
            "iterations": self.iterations,
            "wall_time": self.wall_time,
            "endpoint_residuals": self.endpoint_residuals,
            "diagnostics": self.diagnostics,
            "snapshots": [record.to_dict() for record in self.snapshots],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunRecord":
        return cls(
            mode=data.get("mode", ""),
            scenario=data.get("scenario", {}),
            epsilon=data.get("epsilon"),
            iterations=data.get("iterations"),
            wall_time=data.get("wall_time", 0.0),
            endpoint_residuals=data.get("endpoint_residuals", {}),
            diagnostics=data.get("diagnostics", {}),
            snapshots=[SnapshotRecord.from_dict(item) for item in data.get("snapshots", [])],
        )


class ArtifactStore(ABC):
    """
    产物存储后端抽象基类

    写入先落在暂存区，commit() 后才对外可见。
    """

    @abstractmethod
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
        """
        写出网格场（CSV：axis0,…,axis{n−1},value）

        Args:
            name: 相对路径（不含扩展名）
            grid: 网格
            values: 与网格形状一致的数组
            mass: 密度文件的总质量

        Returns:
            SnapshotRecord
        """
        pass

    @abstractmethod
    def write_density(self, name: str, density: GridDensity, t: Optional[float] = None) -> SnapshotRecord:
        """写出密度（附带质量与来源信息）"""
        pass

    @abstractmethod
    def write_convergence(self, history: Sequence[Tuple[float, float]], name: str = "convergence") -> str:
        """写出不动点残差历史（iteration,residual_h0,residual_h1）"""
        pass

    @abstractmethod
    def write_run(self, record: RunRecord) -> str:
        """写出 run.json"""
        pass

    @abstractmethod
    def commit(self) -> str:
        """原子提交，返回最终输出目录"""
        pass

    @abstractmethod
    def abort(self) -> None:
        """丢弃暂存区"""
        pass

    @property
    @abstractmethod
    def backend_name(self) -> str:
        pass
