# coding=utf-8
"""
Lie 导数、Lie 括号与可线性化检查

嵌套导数以新的 ScalarField / VectorField 表示，每层记录 depth，
由此决定中心差分步长。
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from densitysteer.geometry.fields import ControlAffineSystem, ScalarField, VectorField
from densitysteer.utils.errors import DomainError


logger = logging.getLogger(__name__)

RANK_TOLERANCE = 1e-8


def lie_field(phi: ScalarField, xi: VectorField) -> ScalarField:
    """L_ξ φ 作为新的标量场"""
    if phi.dimension != xi.dimension:
        raise DomainError(f"维数不一致: φ 为 {phi.dimension}，ξ 为 {xi.dimension}")

    def evaluate(x: np.ndarray) -> float:
        return float(phi.gradient_at(x) @ xi(x))

    return ScalarField(dimension=phi.dimension, evaluator=evaluate, depth=phi.depth + 1)


def lie_power(phi: ScalarField, xi: VectorField, k: int) -> ScalarField:
    """L_ξ^k φ 作为标量场"""
    result = phi
    for _ in range(k):
        result = lie_field(result, xi)
    return result


def lie_derivative(phi: ScalarField, xi: VectorField, x, k: int = 1) -> float:
    """
    计算 L_ξ^k φ(x)

    Args:
        phi: 标量场
        xi: 向量场
        x: 求值点
        k: 阶数（0 返回 φ(x)）

    Returns:
        Lie 导数值
    """
    if k < 0:
        raise DomainError(f"Lie 导数阶数必须 ≥ 0，收到 {k}")
    if k > phi.dimension + 1:
        raise DomainError(f"阶数 k={k} 超过光滑度预算 n+1={phi.dimension + 1}")
    return lie_power(phi, xi, k)(x)


def bracket_field(xi: VectorField, eta: VectorField) -> VectorField:
    """[ξ, η] 作为向量场"""
    if xi.dimension != eta.dimension:
        raise DomainError(f"向量场维数不一致: {xi.dimension} != {eta.dimension}")

    def evaluate(x: np.ndarray) -> np.ndarray:
        return eta.jacobian_at(x) @ xi(x) - xi.jacobian_at(x) @ eta(x)

    return VectorField(dimension=xi.dimension, evaluator=evaluate, depth=max(xi.depth, eta.depth) + 1)


def lie_bracket(xi: VectorField, eta: VectorField, x) -> np.ndarray:
    """[ξ, η](x) = (∇η)ξ − (∇ξ)η"""
    return bracket_field(xi, eta)(x)


def ad_field(xi: VectorField, eta: VectorField, k: int) -> VectorField:
    if k < 0:
        raise DomainError(f"ad 阶数必须 ≥ 0，收到 {k}")
    if xi.dimension != eta.dimension:
        raise DomainError(f"向量场维数不一致: {xi.dimension} != {eta.dimension}")
    result = eta
    for _ in range(k):
        result = bracket_field(xi, result)
    return result


def ad_power(xi: VectorField, eta: VectorField, k: int, x) -> np.ndarray:
    """ad_ξ^k η (x)，ad⁰ = η"""
    return ad_field(xi, eta, k)(x)


@dataclass
class LinearizabilityReport:
    """可线性化检查报告"""

    n: int
    rank: int
    singular_values: List[float]
    involutivity_residual: float
    tolerance: float
    worst_point: Optional[List[float]] = None
    excluded_points: List[List[float]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.rank == self.n and self.involutivity_residual <= self.tolerance

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "rank": self.rank,
            "singular_values": self.singular_values,
            "involutivity_residual": self.involutivity_residual,
            "tolerance": self.tolerance,
            "worst_point": self.worst_point,
            "excluded_points": self.excluded_points,
            "passed": self.passed,
        }


def _involutivity_residual(spanning: Sequence[VectorField], x: np.ndarray) -> float:
    vectors = np.column_stack([fld(x) for fld in spanning])
    basis, _ = np.linalg.qr(vectors)
    worst = 0.0
    for i in range(len(spanning)):
        for j in range(i + 1, len(spanning)):
            bracket = lie_bracket(spanning[i], spanning[j], x)
            orthogonal = bracket - basis @ (basis.T @ bracket)
            scale = max(1.0, float(np.linalg.norm(vectors[:, i]) * np.linalg.norm(vectors[:, j])))
            worst = max(worst, float(np.linalg.norm(orthogonal)) / scale)
    return worst


def check_linearizable(
    sys: ControlAffineSystem,
    x_bar,
    samples: Sequence = (),
    tol: float = 1e-6,
) -> LinearizabilityReport:
    """
    检查全状态静态反馈可线性化的两个条件

    (i) [g | ad_f g | … | ad_f^{n−1} g] 在 x̄ 处满秩；
    (ii) D = span{g, …, ad_f^{n−2} g} 对合：括号在 D 正交补上的分量 ≤ tol。

    Args:
        sys: 控制仿射系统
        x_bar: 参考点
        samples: 对合性检查的采样点（与 x̄ 一起使用）
        tol: 对合残差容差（相对于张成向量范数）

    Returns:
        LinearizabilityReport
    """
    n = sys.n
    x_bar = np.asarray(x_bar, dtype=float)
    fields = [ad_field(sys.f, sys.g, k) for k in range(n)]
    matrix = np.column_stack([fld(x_bar) for fld in fields])
    singular_values = np.linalg.svd(matrix, compute_uv=False)
    cutoff = RANK_TOLERANCE * max(1.0, float(singular_values[0]))
    rank = int(np.sum(singular_values > cutoff))

    points = [x_bar] + [np.asarray(p, dtype=float) for p in samples]
    excluded = [p.tolist() for p in points if not sys.contains(p)]
    points = [p for p in points if sys.contains(p)]

    residual = 0.0
    worst_point = None
    spanning = fields[: n - 1]
    if len(spanning) >= 2:
        for point in points:
            value = _involutivity_residual(spanning, point)
            if value >= residual:
                residual, worst_point = value, point.tolist()

    report = LinearizabilityReport(
        n=n,
        rank=rank,
        singular_values=[float(s) for s in singular_values],
        involutivity_residual=residual,
        tolerance=tol,
        worst_point=worst_point,
        excluded_points=excluded,
    )
    if excluded:
        logger.warning(f"[可线性化] {len(excluded)} 个采样点不在定义域内，已排除")
    logger.info(f"[可线性化] 秩={rank}/{n}，对合残差={residual:.3e}，通过={report.passed}")
    return report
