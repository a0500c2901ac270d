# coding=utf-8
"""
配置工具模块 - 场景字段解析和验证

提供快照时刻、协方差与网格段的解析，错误信息附带字段路径
"""

from typing import Any, Dict, List, Sequence, Tuple, Union

import numpy as np

from densitysteer.utils.errors import ConfigurationError


def parse_snapshot_times(config_value: Union[str, Sequence[float], None], field: str = "output.snapshots") -> List[float]:
    """
    解析快照时刻，返回升序去重后的列表

    Args:
        config_value: 逗号分隔字符串或数值列表
        field: 出错时报告的字段路径

    Returns:
        时刻列表，必须位于 [0,1] 且包含 0 与 1

    Examples:
        >>> parse_snapshot_times("0,0.5,1")
        [0.0, 0.5, 1.0]
        >>> parse_snapshot_times([1, 0.25, 0, 0.25])
        [0.0, 0.25, 1.0]
        >>> parse_snapshot_times("0, 0.5")
        Traceback (most recent call last):
        ...
        densitysteer.utils.errors.ConfigurationError: output.snapshots: 快照时刻必须包含 0 与 1，收到 [0.0, 0.5]
    """
    if isinstance(config_value, str):
        parts = [part.strip() for part in config_value.split(",") if part.strip()]
    else:
        parts = [] if config_value is None else list(config_value)
    if not parts:
        raise ConfigurationError("快照时刻不能为空", field=field)
    try:
        times = sorted({float(part) for part in parts})
    except (TypeError, ValueError):
        raise ConfigurationError(f"无法解析快照时刻 {config_value!r}", field=field) from None
    if any(t < 0.0 or t > 1.0 for t in times):
        raise ConfigurationError(f"快照时刻必须位于 [0,1]，收到 {times}", field=field)
    if times[0] != 0.0 or times[-1] != 1.0:
        raise ConfigurationError(f"快照时刻必须包含 0 与 1，收到 {times}", field=field)
    return times


def parse_diagonal_or_matrix(config_value: Any, dimension: int, field: str) -> np.ndarray:
    """
    协方差：对角元列表或完整矩阵

    Examples:
        >>> parse_diagonal_or_matrix([0.05, 0.067], 2, "marginals.rho0.covariances[0]").tolist()
        [[0.05, 0.0], [0.0, 0.067]]
        >>> parse_diagonal_or_matrix([[1, 0.5], [0.5, 1]], 2, "c").tolist()
        [[1.0, 0.5], [0.5, 1.0]]
    """
    try:
        array = np.asarray(config_value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigurationError(f"无法解析为数值数组: {config_value!r}", field=field) from None
    if array.ndim == 1 and array.size == dimension:
        return np.diag(array)
    if array.shape == (dimension, dimension):
        return array
    raise ConfigurationError(f"需要长度 {dimension} 的对角元或 {dimension}×{dimension} 矩阵，收到形状 {array.shape}", field=field)


def validate_grid_section(section: Dict[str, Any], dimension: int, field: str) -> Tuple[List[float], List[float], List[int]]:
    """
    验证网格段 {LOWER, UPPER, NODES}

    NODES 可为单个整数（各轴相同）或逐轴列表。

    Returns:
        (下界, 上界, 逐轴节点数)

    Examples:
        >>> validate_grid_section({"LOWER": [-1, -1], "UPPER": [1, 1], "NODES": 51}, 2, "grid.x")
        ([-1.0, -1.0], [1.0, 1.0], [51, 51])
        >>> validate_grid_section({"LOWER": [0], "UPPER": [0], "NODES": 5}, 1, "grid.z")
        Traceback (most recent call last):
        ...
        densitysteer.utils.errors.ConfigurationError: grid.z.upper: 上界必须大于下界
    """
    if not isinstance(section, dict):
        raise ConfigurationError("网格段必须是映射", field=field)
    try:
        lower = [float(v) for v in np.atleast_1d(section["LOWER"])]
        upper = [float(v) for v in np.atleast_1d(section["UPPER"])]
    except KeyError as e:
        raise ConfigurationError(f"缺少字段 {str(e.args[0]).lower()}", field=field) from None
    nodes = section.get("NODES", 51)
    counts = [int(nodes)] * dimension if np.isscalar(nodes) else [int(c) for c in nodes]
    if len(lower) != dimension or len(upper) != dimension or len(counts) != dimension:
        raise ConfigurationError(f"网格维数必须为 {dimension}", field=field)
    if any(hi <= lo for lo, hi in zip(lower, upper)):
        raise ConfigurationError("上界必须大于下界", field=f"{field}.upper")
    if any(c < 3 for c in counts):
        raise ConfigurationError(f"每轴至少 3 个节点，收到 {counts}", field=f"{field}.nodes")
    return lower, upper, counts
