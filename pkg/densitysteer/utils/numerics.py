# coding=utf-8
"""
有限差分工具

嵌套中心差分的步长规则与梯度 / Jacobian 计算。
"""

from typing import Callable

import numpy as np

from .errors import DomainError


BASE_STEP = 1e-5
MIN_STEP = 1e-12


def nested_step(level: int) -> float:
    """第 level 层嵌套导数使用的相对步长 h_k = (1e-5)^{1/(k+1)}"""
    if level < 1:
        raise DomainError(f"嵌套层级必须 ≥ 1，收到 {level}")
    return BASE_STEP ** (1.0 / (level + 1))


def _steps_for(x: np.ndarray, level: int) -> np.ndarray:
    steps = nested_step(level) * np.maximum(1.0, np.abs(x))
    # 步长相对于坐标过小时，x+h 与 x 在浮点意义下不可区分
    if np.any(steps < MIN_STEP) or np.any((x + steps) == x):
        raise DomainError(f"有限差分步长下溢 (level={level}, x={x.tolist()})", code="STEP_UNDERFLOW")
    return steps


def central_gradient(fn: Callable[[np.ndarray], float], x: np.ndarray, level: int = 1) -> np.ndarray:
    """标量函数的中心差分梯度"""
    x = np.asarray(x, dtype=float)
    steps = _steps_for(x, level)
    grad = np.empty_like(x)
    for i, h in enumerate(steps):
        forward = x.copy()
        backward = x.copy()
        forward[i] += h
        backward[i] -= h
        grad[i] = (fn(forward) - fn(backward)) / (2.0 * h)
    return grad


def central_jacobian(fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray, level: int = 1) -> np.ndarray:
    """向量函数的中心差分 Jacobian，第 j 列为 ∂fn/∂x_j"""
    x = np.asarray(x, dtype=float)
    steps = _steps_for(x, level)
    columns = []
    for i, h in enumerate(steps):
        forward = x.copy()
        backward = x.copy()
        forward[i] += h
        backward[i] -= h
        columns.append((np.asarray(fn(forward), dtype=float) - np.asarray(fn(backward), dtype=float)) / (2.0 * h))
    return np.column_stack(columns)
