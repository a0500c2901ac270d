# coding=utf-8
"""
核心模块 - 配置加载、字段解析与场景模型
"""

from densitysteer.core.config import parse_diagonal_or_matrix, parse_snapshot_times, validate_grid_section
from densitysteer.core.loader import build_config, load_builtin, load_config
from densitysteer.core.scenario import BUILTIN_SCENARIOS, MODES, GridSpec, Scenario

__all__ = [
    "parse_diagonal_or_matrix",
    "parse_snapshot_times",
    "validate_grid_section",
    "build_config",
    "load_builtin",
    "load_config",
    "BUILTIN_SCENARIOS",
    "MODES",
    "GridSpec",
    "Scenario",
]
