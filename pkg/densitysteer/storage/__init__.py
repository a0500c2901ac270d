# coding=utf-8
"""
存储模块 - 运行产物的记录模型与原子写出

目录结构（bridge 模式）：
    <output_dir>/sigma_t0.000.csv, control_t0.000.csv, rho_t0.000.csv, …
    <output_dir>/convergence.csv
    <output_dir>/run.json
ot / hjb 模式分别写入 ot/、hjb/ 子目录。
"""

from densitysteer.storage.base import ArtifactStore, RunRecord, SnapshotRecord
from densitysteer.storage.local import LocalArtifactStore, csv_header, read_density_csv, read_grid_csv

__all__ = [
    "ArtifactStore",
    "RunRecord",
    "SnapshotRecord",
    "LocalArtifactStore",
    "csv_header",
    "read_density_csv",
    "read_grid_csv",
]
