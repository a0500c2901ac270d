# coding=utf-8
"""
向量场与标量场

场由求值函数与可选的解析导数组成；缺少解析导数时按嵌套层级使用中心差分。
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from densitysteer.utils.errors import DomainError
from densitysteer.utils.numerics import central_gradient, central_jacobian


@dataclass(frozen=True)
class ScalarField:
    """标量场 x ↦ ℝ"""

    dimension: int
    evaluator: Callable[[np.ndarray], float]
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    depth: int = 0  # 已嵌套的 Lie 导数层数

    def __call__(self, x) -> float:
        return float(self.evaluator(np.asarray(x, dtype=float)))

    def gradient_at(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.gradient is not None:
            return np.asarray(self.gradient(x), dtype=float)
        return central_gradient(self, x, level=self.depth + 1)


@dataclass(frozen=True)
class VectorField:
    """向量场 x ↦ ℝⁿ"""

    dimension: int
    evaluator: Callable[[np.ndarray], np.ndarray]
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    depth: int = 0

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.evaluator(np.asarray(x, dtype=float)), dtype=float)

    def jacobian_at(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.jacobian is not None:
            return np.asarray(self.jacobian(x), dtype=float)
        return central_jacobian(self, x, level=self.depth + 1)


@dataclass(frozen=True)
class ControlAffineSystem:
    """单输入控制仿射系统 ẋ = f(x) + g(x)u"""

    f: VectorField
    g: VectorField
    domain: Callable[[np.ndarray], bool] = lambda x: True
    name: str = "custom"

    def __post_init__(self):
        if self.f.dimension != self.g.dimension:
            raise DomainError(f"f 与 g 维数不一致: {self.f.dimension} != {self.g.dimension}")

    @property
    def n(self) -> int:
        return self.f.dimension

    def contains(self, x) -> bool:
        return bool(self.domain(np.asarray(x, dtype=float)))

    def rhs(self, x, u: float) -> np.ndarray:
        return self.f(x) + self.g(x) * u
