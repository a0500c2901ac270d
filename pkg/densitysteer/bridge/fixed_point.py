# coding=utf-8
"""
Schrödinger 系统的不动点迭代与因子恢复

迭代（对数域，初值 ĥ₁ ≡ init）：

    h₁ ← σ̂₁ ⊘ ĥ₁
    ĥ₀ ← σ̂₀ ⊘ (K h₁)
    ĥ₁ ← Kᵀ ĥ₀

直到 ĥ₀ 与 h₁ 的 sup 范数相对变化都 ≤ δ。支撑外（边缘密度低于 floor·max）的节点
不参与除法，对数因子取 −∞；支撑内的对数因子不设下限，可以跨越任意多个数量级。
收敛后再检查两条方程的相对残差，超出 residual_tol 同样视为未收敛。

小 ε 时可用 annealed_fixed_point：从较大的 ε 开始逐级缩小，用上一级的对偶势热启动。
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from densitysteer.bridge.kernels import KernelOperator
from densitysteer.density.grid import Grid, GridDensity
from densitysteer.linear.brunovsky import HattingTransform
from densitysteer.utils.errors import ConvergenceError, DomainError


logger = logging.getLogger(__name__)

DEFAULT_SUPPORT_FLOOR = 1e-12
RESIDUAL_TOL_FACTOR = 10.0
ANNEAL_STAGE_DELTA = 1e-6


@dataclass
class BridgeFactors:
    """不动点因子（对数形式保存）"""

    grid: Optional[Grid]
    log_h0_hat: np.ndarray
    log_h1: np.ndarray
    log_kernel_h1: np.ndarray  # log (K h₁)，源网格
    log_kernel_h0_hat: np.ndarray  # log (Kᵀ ĥ₀)，目标网格
    iterations: int
    residual_history: List[Tuple[float, float]] = field(default_factory=list)
    equation_residuals: Tuple[float, float] = (0.0, 0.0)  # 相对 max σ̂ 的 sup 残差
    total_iterations: int = 0
    schedule: Tuple[float, ...] = ()

    @property
    def h0_hat(self) -> np.ndarray:
        return np.exp(self.log_h0_hat)

    @property
    def h1(self) -> np.ndarray:
        return np.exp(self.log_h1)

    def to_dict(self) -> Dict:
        return {
            "iterations": self.iterations,
            "residual_h0": self.residual_history[-1][0] if self.residual_history else None,
            "residual_h1": self.residual_history[-1][1] if self.residual_history else None,
            "equation_residual_h0": self.equation_residuals[0],
            "equation_residual_h1": self.equation_residuals[1],
            "total_iterations": self.total_iterations or self.iterations,
            "epsilon_schedule": list(self.schedule),
        }


def _log_marginal(values: np.ndarray, support_floor: float) -> Tuple[np.ndarray, np.ndarray]:
    values = np.asarray(values, dtype=float)
    support = values > support_floor * values.max()
    with np.errstate(divide="ignore"):
        log_values = np.where(support, np.log(np.where(support, values, 1.0)), -np.inf)
    return log_values, support


def _relative_change(new: np.ndarray, old: np.ndarray, support: np.ndarray) -> float:
    if not np.any(support):
        return 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        change = np.abs(np.expm1(new[support] - old[support]))
    return float(np.max(change))


def _equation_residuals(
    kernel: KernelOperator,
    log_h0_hat: np.ndarray,
    log_h1: np.ndarray,
    values0: np.ndarray,
    values1: np.ndarray,
    support0: np.ndarray,
    support1: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray, float, float]:
    log_kh1 = kernel.log_apply_backward(log_h1)
    log_kh0 = kernel.log_apply_forward(log_h0_hat)
    with np.errstate(over="ignore", invalid="ignore"):
        gap0 = np.abs(np.exp(log_h0_hat + log_kh1) - values0)[support0]
        gap1 = np.abs(np.exp(log_h1 + log_kh0) - values1)[support1]
    residual0 = float(np.max(gap0, initial=0.0) / values0.max())
    residual1 = float(np.max(gap1, initial=0.0) / values1.max())
    return log_kh1, log_kh0, residual0, residual1


def fixed_point(
    kernel: KernelOperator,
    sigma_hat0,
    sigma_hat1,
    delta: float = 1e-9,
    max_iter: int = 5000,
    init: float = 1.0,
    support_floor: float = DEFAULT_SUPPORT_FLOOR,
    residual_tol: Optional[float] = None,
    warm_start: Optional[np.ndarray] = None,
) -> BridgeFactors:
    """
    求解 Schrödinger 系统 ĥ₀∘(K h₁) = σ̂₀，h₁∘(Kᵀ ĥ₀) = σ̂₁

    Args:
        kernel: ẑ 网格上的核算子（σ̂₀ 为源，σ̂₁ 为目标）
        sigma_hat0, sigma_hat1: GridDensity 或节点值数组
        delta: 收敛容差（sup 范数相对变化）
        max_iter: 最大迭代次数
        init: ĥ₁ 的常数初值
        support_floor: 相对支撑下限
        residual_tol: 收敛后方程相对残差（除以 max σ̂）的上限，缺省 10·δ
        warm_start: log ĥ₁ 的初值，给出时忽略 init

    Returns:
        BridgeFactors

    Raises:
        ConvergenceError: 超过 max_iter，或收敛后方程残差超限（附残差历史）
        DomainError: 出现非正的中间量
    """
    grid = getattr(sigma_hat0, "grid", None)
    values0 = np.asarray(getattr(sigma_hat0, "values", sigma_hat0), dtype=float).reshape(kernel.source_shape)
    values1 = np.asarray(getattr(sigma_hat1, "values", sigma_hat1), dtype=float).reshape(kernel.target_shape)
    if init <= 0:
        raise DomainError(f"初值必须为正，收到 {init}")
    if residual_tol is None:
        residual_tol = RESIDUAL_TOL_FACTOR * delta
    log_s0, support0 = _log_marginal(values0, support_floor)
    log_s1, support1 = _log_marginal(values1, support_floor)

    if warm_start is None:
        log_h1_hat = np.full(kernel.target_shape, np.log(init))
    else:
        log_h1_hat = np.asarray(warm_start, dtype=float).reshape(kernel.target_shape)
    log_h0_hat = np.full(kernel.source_shape, -np.inf)
    log_h1 = np.full(kernel.target_shape, -np.inf)
    history: List[Tuple[float, float]] = []

    for iteration in range(1, max_iter + 1):
        new_h1 = np.where(support1, log_s1 - log_h1_hat, -np.inf)
        log_kh1 = kernel.log_apply_backward(new_h1)
        if np.any(~np.isfinite(log_kh1[support0])):
            raise DomainError(f"第 {iteration} 次迭代出现非正的 K h₁（网格截断了核的支撑）")
        new_h0 = np.where(support0, log_s0 - log_kh1, -np.inf)
        log_h1_hat = kernel.log_apply_forward(new_h0)
        if np.any(~np.isfinite(log_h1_hat[support1])):
            raise DomainError(f"第 {iteration} 次迭代出现非正的 Kᵀ ĥ₀（网格截断了核的支撑）")

        change = (
            _relative_change(new_h0, log_h0_hat, support0),
            _relative_change(new_h1, log_h1, support1),
        )
        history.append(change)
        log_h0_hat, log_h1 = new_h0, new_h1
        if max(change) <= delta:
            break
    else:
        raise ConvergenceError(
            f"不动点迭代在 {max_iter} 次内未收敛，最后相对变化 {history[-1]}",
            history=history,
        )

    log_kh1, log_kh0, residual0, residual1 = _equation_residuals(
        kernel, log_h0_hat, log_h1, values0, values1, support0, support1
    )
    if max(residual0, residual1) > residual_tol:
        raise ConvergenceError(
            f"不动点迭代停在 {iteration} 次，但方程相对残差 ({residual0:.3e}, {residual1:.3e}) 超过 {residual_tol:.1e}",
            history=history,
        )
    logger.info(f"[固定点] {iteration} 次迭代收敛，方程相对残差 ({residual0:.3e}, {residual1:.3e})")
    return BridgeFactors(
        grid=grid,
        log_h0_hat=log_h0_hat,
        log_h1=log_h1,
        log_kernel_h1=log_kh1,
        log_kernel_h0_hat=log_kh0,
        iterations=iteration,
        residual_history=history,
        equation_residuals=(residual0, residual1),
        total_iterations=iteration,
    )


def epsilon_schedule(eps: float, start: Optional[float], factor: float = 2.0) -> Tuple[float, ...]:
    """从 start 按 factor 几何递减到 eps 的 ε 序列（末项恰为 eps）"""
    if eps <= 0:
        raise DomainError(f"ε 必须为正，收到 {eps}")
    if start is None or start <= eps:
        return (float(eps),)
    if factor <= 1.0:
        raise DomainError(f"退火因子必须大于 1，收到 {factor}")
    levels = [float(start)]
    while levels[-1] / factor > eps:
        levels.append(levels[-1] / factor)
    levels.append(float(eps))
    return tuple(levels)


def annealed_fixed_point(
    kernel_for: Callable[[float], KernelOperator],
    sigma_hat0,
    sigma_hat1,
    schedule: Sequence[float],
    delta: float = 1e-9,
    max_iter: int = 5000,
    init: float = 1.0,
    support_floor: float = DEFAULT_SUPPORT_FLOOR,
    residual_tol: Optional[float] = None,
) -> BridgeFactors:
    """
    ε 退火的不动点迭代

    前几级只解到 max(δ, 1e-6) 且不检查方程残差；对偶势 ε·log h₁ 在级间保持，
    即 log h₁ 按 ε_旧/ε_新 放大后作为下一级的热启动。max_iter 是所有级的迭代总预算。

    Args:
        kernel_for: ε ↦ ẑ 网格上的核算子
        schedule: 递减的 ε 序列，末项为目标 ε
    """
    schedule = tuple(float(level) for level in schedule)
    if not schedule:
        raise DomainError("ε 序列为空")
    values1 = np.asarray(getattr(sigma_hat1, "values", sigma_hat1), dtype=float)
    log_s1, support1 = _log_marginal(values1, support_floor)
    warm: Optional[np.ndarray] = None
    used = 0
    history: List[Tuple[float, float]] = []
    factors: Optional[BridgeFactors] = None
    for k, level in enumerate(schedule):
        final = k == len(schedule) - 1
        budget = max_iter - used
        if budget <= 0:
            raise ConvergenceError(f"ε 退火在 ε={level:.3e} 之前用尽 {max_iter} 次迭代预算", history=history)
        try:
            factors = fixed_point(
                kernel_for(level), sigma_hat0, sigma_hat1,
                delta=delta if final else max(delta, ANNEAL_STAGE_DELTA),
                max_iter=budget, init=init, support_floor=support_floor,
                residual_tol=residual_tol if final else np.inf,
                warm_start=warm,
            )
        except ConvergenceError as e:
            raise ConvergenceError(
                f"ε 退火在 ε={level:.3e} 处失败：{e.message}", history=history + list(e.history)
            ) from e
        used += factors.iterations
        history.extend(factors.residual_history)
        logger.debug(f"[固定点] 退火 ε={level:.3e} 用 {factors.iterations} 次迭代")
        if not final:
            scaled = factors.log_h1.reshape(log_s1.shape) * (level / schedule[k + 1])
            warm = np.where(support1, log_s1 - scaled, 0.0)
    factors.total_iterations = used
    factors.residual_history = history
    factors.schedule = schedule
    logger.info(f"[固定点] ε 退火 {len(schedule)} 级，共 {used} 次迭代")
    return factors


@dataclass
class RecoveredFactors:
    """z 网格上的 ĥ₀、h₁ 以及端点传播值 h(·,0)、ĥ(·,1)（对数形式）"""

    grid: Grid
    n: int
    log_h0_hat: np.ndarray
    log_h1: np.ndarray
    log_h_at0: np.ndarray
    log_h_hat_at1: np.ndarray
    clamped_nodes: int = 0
    # 端点校正对 log ĥ₀、log h₁ 的最大改动（未校正时为 0）
    endpoint_correction: Tuple[float, float] = (0.0, 0.0)


OFF_SUPPORT_LOG_DROP = 700.0


def _interpolate_log(grid: Grid, log_values: np.ndarray, points: np.ndarray) -> Tuple[np.ndarray, int]:
    outside = int(np.sum(~grid.contains(points)))
    finite = np.isfinite(log_values)
    if np.all(finite):
        return grid.interpolate(log_values, points, fill_value=None), outside
    # 支撑外的 −∞ 换成有限低值，线性插值才不会产生 nan；邻点全在支撑外时恢复 −∞
    base = float(log_values[finite].min()) if np.any(finite) else 0.0
    values = grid.interpolate(np.where(finite, log_values, base - OFF_SUPPORT_LOG_DROP), points, fill_value=None)
    reach = grid.interpolate(finite.astype(float), points, fill_value=None)
    return np.where(reach > 0.0, values, -np.inf), outside


def _match_endpoint(
    log_propagated: np.ndarray,
    log_interpolated: np.ndarray,
    marginal: GridDensity,
    support_floor: float,
) -> Tuple[np.ndarray, float]:
    log_values, support = _log_marginal(marginal.values.ravel(), support_floor)
    matched = np.where(support, log_values - log_propagated, -np.inf)
    correction = float(np.max(np.abs(matched - log_interpolated)[support], initial=0.0))
    return matched, correction


def recover_factors(
    factors: BridgeFactors,
    n: int,
    zgrid: Grid,
    marginals: Optional[Tuple[GridDensity, GridDensity]] = None,
    support_floor: float = DEFAULT_SUPPORT_FLOOR,
) -> RecoveredFactors:
    """
    由 ẑ 网格因子恢复 z 网格因子

    ĥ₀(z) = ĥ₀ᴮ(M₁₀^{−1/2}Φ₁₀ z)，h₁(z) = det(M₁₀)^{−1/2} h₁ᴮ(M₁₀^{−1/2} z)；
    端点传播值 h(z,0) = det(M₁₀)^{−1/2}(K h₁ᴮ)(M₁₀^{−1/2}Φ₁₀ z)，ĥ(z,1) = (Kᵀĥ₀ᴮ)(M₁₀^{−1/2} z)。
    超出 ẑ 网格的点夹到边界并给出警告。

    给出 marginals=(σ₀, σ₁) 时在 z 网格上校正端点：ĥ₀ = σ₀ ⊘ h(·,0)，h₁ = σ₁ ⊘ ĥ(·,1)，
    使 ĥ₀·h(·,0) 与 ĥ(·,1)·h₁ 在 z 节点上精确等于两端边缘密度，ẑ↔z 插值误差
    只留在传播因子中。改动幅度记在 endpoint_correction。
    """
    if factors.grid is None:
        raise DomainError("因子缺少 ẑ 网格，无法恢复")
    hat = HattingTransform.for_dimension(n)
    points = zgrid.points()
    source_points = points @ hat.source_map.T
    target_points = points @ hat.target_map.T
    log_det = 0.5 * np.log(hat.det_M10)

    log_h0_hat, outside0 = _interpolate_log(factors.grid, factors.log_h0_hat, source_points)
    log_h_at0, _ = _interpolate_log(factors.grid, factors.log_kernel_h1, source_points)
    log_h1, outside1 = _interpolate_log(factors.grid, factors.log_h1, target_points)
    log_h_hat_at1, _ = _interpolate_log(factors.grid, factors.log_kernel_h0_hat, target_points)
    log_h1 = log_h1 - log_det
    log_h_at0 = log_h_at0 - log_det
    clamped = outside0 + outside1
    if clamped:
        logger.warning(f"[因子恢复] {clamped} 个求值点超出 ẑ 网格，已夹到边界")

    correction = (0.0, 0.0)
    if marginals is not None:
        sigma0, sigma1 = marginals
        if sigma0.grid.shape != zgrid.shape or sigma1.grid.shape != zgrid.shape:
            raise DomainError("端点校正要求边缘密度定义在 z 网格上")
        log_h0_hat, fix0 = _match_endpoint(log_h_at0, log_h0_hat, sigma0, support_floor)
        log_h1, fix1 = _match_endpoint(log_h_hat_at1, log_h1, sigma1, support_floor)
        correction = (fix0, fix1)
        logger.debug(f"[因子恢复] 端点校正幅度（对数）({fix0:.3e}, {fix1:.3e})")

    shape = zgrid.shape
    return RecoveredFactors(
        grid=zgrid,
        n=n,
        log_h0_hat=log_h0_hat.reshape(shape),
        log_h1=log_h1.reshape(shape),
        log_h_at0=log_h_at0.reshape(shape),
        log_h_hat_at1=log_h_hat_at1.reshape(shape),
        clamped_nodes=clamped,
        endpoint_correction=correction,
    )
