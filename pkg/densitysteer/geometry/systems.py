# coding=utf-8
"""
内置系统注册表

vdp2d: 二维 Van der Pol 型系统，λ = x₁，τ 为恒等映射。
flat3d: 三维微分平坦系统，λ = x₁ + x₂²/2，工作区域 X_R = {x₂ > −1}。
brunovsky2d: 双积分器，λ = x₁。
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List

import numpy as np

from densitysteer.geometry.fields import ControlAffineSystem, ScalarField, VectorField
from densitysteer.geometry.linearizing import FeedbackLinearizingTuple, build_tuple
from densitysteer.utils.errors import ConfigurationError


@dataclass(frozen=True)
class BuiltinSystem:
    """内置系统：系统、λ、参考点与验证采样点"""

    name: str
    system: ControlAffineSystem
    lam: ScalarField
    reference_point: np.ndarray
    sample_points: List[np.ndarray] = field(default_factory=list)

    def build(self) -> FeedbackLinearizingTuple:
        return build_tuple(self.system, self.lam, self.sample_points)


def _grid_samples(lower, upper, per_axis: int, keep: Callable[[np.ndarray], bool]) -> List[np.ndarray]:
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in zip(lower, upper)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
    return [p for p in mesh if keep(p)]


def _vdp2d() -> BuiltinSystem:
    f = VectorField(
        dimension=2,
        evaluator=lambda x: np.array([x[1], -x[0] + 0.5 * (1.0 - x[0] ** 2) * x[1]]),
        jacobian=lambda x: np.array([[0.0, 1.0], [-1.0 - x[0] * x[1], 0.5 * (1.0 - x[0] ** 2)]]),
    )
    g = VectorField(dimension=2, evaluator=lambda x: np.array([0.0, 1.0]), jacobian=lambda x: np.zeros((2, 2)))
    lam = ScalarField(dimension=2, evaluator=lambda x: x[0], gradient=lambda x: np.array([1.0, 0.0]))
    system = ControlAffineSystem(f=f, g=g, name="vdp2d")
    samples = _grid_samples([-1.0, -1.0], [1.0, 1.0], 3, system.contains)
    return BuiltinSystem("vdp2d", system, lam, np.zeros(2), samples)


def _flat3d() -> BuiltinSystem:
    f = VectorField(
        dimension=3,
        evaluator=lambda x: np.array([x[2], -x[1], -x[0] + x[1] - 2.0 * x[1] ** 2]),
        jacobian=lambda x: np.array([[0.0, 0.0, 1.0], [0.0, -1.0, 0.0], [-1.0, 1.0 - 4.0 * x[1], 0.0]]),
    )
    g = VectorField(
        dimension=3,
        evaluator=lambda x: np.array([-x[1], 1.0, 2.0 * x[1]]),
        jacobian=lambda x: np.array([[0.0, -1.0, 0.0], [0.0, 0.0, 0.0], [0.0, 2.0, 0.0]]),
    )
    lam = ScalarField(
        dimension=3,
        evaluator=lambda x: x[0] + 0.5 * x[1] ** 2,
        gradient=lambda x: np.array([1.0, x[1], 0.0]),
    )
    # X_R：det ∇τ = −1 − x₂ ≠ 0 的右侧分支
    system = ControlAffineSystem(f=f, g=g, domain=lambda x: x[1] > -1.0, name="flat3d")
    samples = _grid_samples([-1.0, -0.9, -1.0], [1.0, 1.5, 1.0], 3, system.contains)
    return BuiltinSystem("flat3d", system, lam, np.array([0.0, 0.0, 0.0]), samples)


def _brunovsky2d() -> BuiltinSystem:
    f = VectorField(
        dimension=2,
        evaluator=lambda x: np.array([x[1], 0.0]),
        jacobian=lambda x: np.array([[0.0, 1.0], [0.0, 0.0]]),
    )
    g = VectorField(dimension=2, evaluator=lambda x: np.array([0.0, 1.0]), jacobian=lambda x: np.zeros((2, 2)))
    lam = ScalarField(dimension=2, evaluator=lambda x: x[0], gradient=lambda x: np.array([1.0, 0.0]))
    system = ControlAffineSystem(f=f, g=g, name="brunovsky2d")
    samples = _grid_samples([-1.0, -1.0], [1.0, 1.0], 3, system.contains)
    return BuiltinSystem("brunovsky2d", system, lam, np.zeros(2), samples)


BUILTIN_SYSTEMS: Dict[str, Callable[[], BuiltinSystem]] = {
    "vdp2d": _vdp2d,
    "flat3d": _flat3d,
    "brunovsky2d": _brunovsky2d,
}


def get_builtin_system(name: str) -> BuiltinSystem:
    """按名称获取内置系统"""
    try:
        return BUILTIN_SYSTEMS[name]()
    except KeyError:
        raise ConfigurationError(
            f"未知系统 {name!r}，可选: {', '.join(sorted(BUILTIN_SYSTEMS))}",
            field="system.name",
        ) from None
