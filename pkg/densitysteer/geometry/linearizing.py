# coding=utf-8
"""
反馈线性化元组 (τ, α, β)

由用户给定的 λ 构造 τ = (λ, L_f λ, …, L_f^{n−1} λ)、
α = −L_f^n λ / L_g L_f^{n−1} λ、β = 1 / L_g L_f^{n−1} λ，并提供 τ 的 Newton 反解
与控制恢复 u = α(x) + β(x)·v(τ(x), t)。
"""

import logging
from typing import Callable, List, Optional, Sequence

import numpy as np

from densitysteer.geometry.fields import ControlAffineSystem, ScalarField
from densitysteer.geometry.lie import lie_field, lie_power
from densitysteer.geometry.maps import CoordinateMap, newton_solve
from densitysteer.utils.errors import RelativeDegreeError


logger = logging.getLogger(__name__)


class FeedbackLinearizingTuple(CoordinateMap):
    """反馈线性化元组，同时作为坐标映射 τ: X → Z"""

    def __init__(
        self,
        system: ControlAffineSystem,
        lam: ScalarField,
        components: List[ScalarField],
        drift_term: ScalarField,
        gain_term: ScalarField,
    ):
        self.system = system
        self.lam = lam
        self.components = components
        self.drift_term = drift_term  # L_f^n λ
        self.gain_term = gain_term  # L_g L_f^{n−1} λ
        self.dimension = system.n

    # ---------- τ ----------

    def forward(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.array([component(x) for component in self.components])

    def jacobian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.vstack([component.gradient_at(x) for component in self.components])

    def contains(self, x) -> bool:
        return self.system.contains(x)

    tau = forward
    jacobian_tau = jacobian

    # ---------- 反馈 ----------

    def alpha(self, x) -> float:
        return -self.drift_term(x) / self.gain_term(x)

    def beta(self, x) -> float:
        return 1.0 / self.gain_term(x)

    def gamma(self, x) -> float:
        """γ = −α/β，即 v = γ(x) + δ(x)u 中的偏置"""
        return -self.alpha(x) / self.beta(x)

    def delta(self, x) -> float:
        return 1.0 / self.beta(x)


def build_tuple(
    sys: ControlAffineSystem,
    lam: ScalarField,
    samples: Sequence = (),
    tol: float = 1e-8,
) -> FeedbackLinearizingTuple:
    """
    由 λ 构造反馈线性化元组

    在采样点上验证相对阶条件：|L_g L_f^k λ| ≤ tol (k = 0..n−2)，
    |L_g L_f^{n−1} λ| > tol。

    Args:
        sys: 控制仿射系统
        lam: 输出函数 λ
        samples: 验证相对阶的采样点
        tol: 判零容差

    Returns:
        FeedbackLinearizingTuple

    Raises:
        RelativeDegreeError: 任一采样点不满足条件
    """
    n = sys.n
    components = [lie_power(lam, sys.f, k) for k in range(n)]
    gain_terms = [lie_field(component, sys.g) for component in components]
    drift_term = lie_field(components[-1], sys.f)

    if len(samples) == 0:
        logger.warning("[反馈线性化] 未提供采样点，相对阶条件未经验证")
    for point in samples:
        point = np.asarray(point, dtype=float)
        for k in range(n - 1):
            value = gain_terms[k](point)
            if abs(value) > tol:
                raise RelativeDegreeError(f"L_g L_f^{k} λ = 0", point, value)
        value = gain_terms[-1](point)
        if abs(value) <= tol:
            raise RelativeDegreeError(f"L_g L_f^{n - 1} λ ≠ 0", point, value)

    logger.debug(f"[反馈线性化] 系统 {sys.name} 的元组已构造 (n={n}, 采样点 {len(samples)} 个)")
    return FeedbackLinearizingTuple(sys, lam, components, drift_term, gain_terms[-1])


def tau_inverse(
    tuple_: FeedbackLinearizingTuple,
    z,
    guess=None,
    tol: float = 1e-10,
    max_iter: int = 50,
) -> np.ndarray:
    """Newton 求 τ⁻¹(z)，发散或 Jacobian 奇异时抛出带迭代轨迹的 InverseMapError"""
    start = np.asarray(z, dtype=float) if guess is None else np.asarray(guess, dtype=float)
    x, _ = newton_solve(tuple_.forward, tuple_.jacobian, z, start, tol=tol, max_iter=max_iter, domain=tuple_.contains)
    return x


def recover_control(
    tuple_: FeedbackLinearizingTuple,
    v: Callable[[np.ndarray, float], float],
    x,
    t: float,
) -> float:
    """u = α(x) + β(x)·v(τ(x), t)"""
    x = np.asarray(x, dtype=float)
    return tuple_.alpha(x) + tuple_.beta(x) * v(tuple_.forward(x), t)


def closed_loop_rhs(
    tuple_: FeedbackLinearizingTuple,
    v: Callable[[np.ndarray, float], float],
) -> Callable[[float, np.ndarray], np.ndarray]:
    """闭环右端 ẋ = f(x) + g(x)(α(x) + β(x)v)，供 solve_ivp 使用"""

    def rhs(t: float, x: np.ndarray) -> np.ndarray:
        return tuple_.system.rhs(x, recover_control(tuple_, v, x, t))

    return rhs


def linear_rhs(n: int, v: Callable[[np.ndarray, float], float]) -> Callable[[float, np.ndarray], np.ndarray]:
    """Brunovsky 型 ż = Az + b v"""

    def rhs(t: float, z: np.ndarray) -> np.ndarray:
        dz = np.empty(n)
        dz[:-1] = z[1:]
        dz[-1] = v(z, t)
        return dz

    return rhs


def sample_domain(
    sys: ControlAffineSystem,
    lower: Sequence[float],
    upper: Sequence[float],
    count: int,
    seed: int = 0,
) -> List[np.ndarray]:
    """在盒子内按定义域谓词拒绝采样（固定种子保证可复现）"""
    rng = np.random.default_rng(seed)
    points: List[np.ndarray] = []
    attempts = 0
    while len(points) < count and attempts < 100 * count:
        candidate = rng.uniform(lower, upper)
        attempts += 1
        if sys.contains(candidate):
            points.append(candidate)
    return points


__all__ = [
    "FeedbackLinearizingTuple",
    "build_tuple",
    "tau_inverse",
    "recover_control",
    "closed_loop_rhs",
    "linear_rhs",
    "sample_domain",
]
