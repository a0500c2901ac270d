# coding=utf-8
"""
配置加载模块

负责从 YAML（或 JSON）场景文件、内置场景和环境变量加载配置。
"""

import copy
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

from densitysteer.core.config import parse_snapshot_times
from densitysteer.core.scenario import BUILTIN_SCENARIOS
from densitysteer.utils.errors import ConfigurationError


logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = "config/config.yaml"


def _get_env_int(key: str) -> Optional[int]:
    """从环境变量获取整数值，未设置或无法解析时返回 None"""
    value = os.environ.get(key, "").strip()
    if not value:
        return None
    try:
        return int(value)
    except ValueError:
        logger.warning(f"[配置] 环境变量 {key}={value!r} 不是整数，已忽略")
        return None


def _get_env_float(key: str) -> Optional[float]:
    """从环境变量获取浮点值，未设置或无法解析时返回 None"""
    value = os.environ.get(key, "").strip()
    if not value:
        return None
    try:
        return float(value)
    except ValueError:
        logger.warning(f"[配置] 环境变量 {key}={value!r} 不是数值，已忽略")
        return None


def _get_env_str(key: str, default: str = "") -> str:
    """从环境变量获取字符串值"""
    return os.environ.get(key, "").strip() or default


def _pick(env_value: Any, config_value: Any) -> Any:
    return env_value if env_value is not None else config_value


def _upper_keys(section: Optional[Dict[str, Any]]) -> Optional[Dict[str, Any]]:
    if section is None:
        return None
    return {str(key).upper(): value for key, value in section.items()}


def _load_system_config(config_data: Dict) -> Dict:
    """加载系统配置"""
    system = config_data.get("system", {}) or {}
    return {
        "NAME": system.get("name", ""),
        "LAMBDA": system.get("lambda", "default"),
    }


def _load_grid_config(config_data: Dict) -> Dict:
    """加载网格配置"""
    grid = config_data.get("grid", {}) or {}
    return {
        "X": _upper_keys(grid.get("x")),
        "Z": _upper_keys(grid.get("z")),
        "HAT_NODES": grid.get("hat_nodes"),
    }


def _load_marginals_config(config_data: Dict) -> Dict:
    """加载两端混合分布配置"""
    marginals = config_data.get("marginals", {}) or {}
    return {
        "RHO0": _upper_keys(marginals.get("rho0")),
        "RHO1": _upper_keys(marginals.get("rho1")),
    }


def _load_bridge_config(config_data: Dict) -> Dict:
    """加载 Schrödinger 桥配置"""
    bridge = config_data.get("bridge", {}) or {}

    # 环境变量覆盖
    epsilon_env = _get_env_float("STEER_EPSILON")
    max_iter_env = _get_env_int("STEER_MAX_ITER")
    tolerance_env = _get_env_float("STEER_TOLERANCE")

    return {
        "EPSILON": _pick(epsilon_env, bridge.get("epsilon", 1e-3)),
        "TOLERANCE": _pick(tolerance_env, bridge.get("tolerance", 1e-9)),
        "MAX_ITER": _pick(max_iter_env, bridge.get("max_iter", 5000)),
        "CONTROL_FORM": bridge.get("control_form", "log"),
        "NORMALIZE_KERNELS": bridge.get("normalize_kernels", True),
        "MASS_TOLERANCE": bridge.get("mass_tolerance", 1e-3),
        "RENORMALIZE": bridge.get("renormalize", False),
        "MATCH_ENDPOINTS": bridge.get("match_endpoints", True),
        "ANNEAL_FROM": bridge.get("anneal_from"),
        "ANNEAL_FACTOR": bridge.get("anneal_factor", 2.0),
        "RECONSTRUCTION": bridge.get("reconstruction", "coupling"),
        "PAIR_PRUNE": bridge.get("pair_prune", 1e-14),
    }


def _load_transport_config(config_data: Dict) -> Dict:
    """加载熵正则传输配置"""
    transport = config_data.get("transport", {}) or {}
    return {
        "ETA": transport.get("eta", 1e-2),
        "TOLERANCE": transport.get("tolerance", 1e-9),
        "MAX_ITER": transport.get("max_iter", 5000),
    }


def _load_hjb_config(config_data: Dict) -> Dict:
    """加载值函数格点配置"""
    hjb = config_data.get("hjb", {}) or {}
    return {
        "NODES": hjb.get("nodes", 31),
        "TIMES": hjb.get("times", 11),
        "KINDS": list(hjb.get("kinds", ["characteristic", "upper_envelope"])),
        "POTENTIAL": hjb.get("potential", "entropic"),
    }


def _load_output_config(config_data: Dict) -> Dict:
    """加载输出配置"""
    output = config_data.get("output", {}) or {}
    snapshots_env = _get_env_str("STEER_SNAPSHOTS")
    snapshots = parse_snapshot_times(snapshots_env) if snapshots_env else output.get("snapshots", [0.0, 0.2, 0.4, 0.6, 0.8, 1.0])
    return {
        "DIR": _get_env_str("STEER_OUTPUT_DIR") or output.get("dir", "output"),
        "SNAPSHOTS": snapshots,
    }


def build_config(config_data: Dict[str, Any]) -> Dict[str, Any]:
    """
    把原始场景文档转换为大写键配置字典

    Args:
        config_data: yaml.safe_load 的结果或内置场景文档

    Returns:
        包含所有配置的字典

    Raises:
        ConfigurationError: 文档不是映射或 version 字段无效
    """
    if not isinstance(config_data, dict):
        raise ConfigurationError("场景文件必须是单个映射文档", field="<root>")
    if "version" not in config_data:
        raise ConfigurationError("缺少必填字段", field="version")

    config: Dict[str, Any] = {
        "VERSION": config_data.get("version"),
        "NAME": config_data.get("name"),
        "MODE": _get_env_str("STEER_MODE") or config_data.get("mode", "bridge"),
    }
    config["SYSTEM"] = _load_system_config(config_data)
    config["GRID"] = _load_grid_config(config_data)
    config["MARGINALS"] = _load_marginals_config(config_data)
    config["BRIDGE"] = _load_bridge_config(config_data)
    config["TRANSPORT"] = _load_transport_config(config_data)
    config["HJB"] = _load_hjb_config(config_data)
    config["OUTPUT"] = _load_output_config(config_data)
    if not config["NAME"]:
        config["NAME"] = config["SYSTEM"]["NAME"]
    return config


def load_config(config_path: Optional[str] = None) -> Dict[str, Any]:
    """
    加载场景文件

    YAML 是 JSON 的超集，带 "version" 字段的 JSON 场景文件同样可读。

    Args:
        config_path: 配置文件路径，默认从环境变量 DENSITYSTEER_CONFIG 获取或使用 config/config.yaml

    Returns:
        包含所有配置的字典

    Raises:
        FileNotFoundError: 配置文件不存在
        ConfigurationError: 文件无法解析或字段无效
    """
    if config_path is None:
        config_path = os.environ.get("DENSITYSTEER_CONFIG", DEFAULT_CONFIG_PATH)

    if not Path(config_path).exists():
        raise FileNotFoundError(f"配置文件 {config_path} 不存在")

    with open(config_path, "r", encoding="utf-8") as f:
        try:
            config_data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigurationError(f"无法解析: {e}", field=str(config_path)) from e

    logger.info(f"[配置] 场景文件加载成功: {config_path}")
    return build_config(config_data)


def load_builtin(name: str) -> Dict[str, Any]:
    """加载内置场景（返回副本，可自由覆盖）"""
    if name not in BUILTIN_SCENARIOS:
        raise ConfigurationError(
            f"未知内置场景 {name!r}，可选: {', '.join(sorted(BUILTIN_SCENARIOS))}",
            field="builtin",
        )
    return build_config(copy.deepcopy(BUILTIN_SCENARIOS[name]))
