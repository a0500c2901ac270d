# coding=utf-8
"""
中间时刻的密度与控制重构

ĥ(z,t) = ∫ κ(0,z̄,t,z) ĥ₀(z̄) dz̄，h(z,t) = ∫ κ(t,z,1,z̄) h₁(z̄) dz̄，
σ_ε = ĥ·h，v_ε = 2ε ∂_{z_n} log h。端点 t=0、t=1 使用恢复得到的边界值。
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid

from densitysteer.bridge.fixed_point import RecoveredFactors
from densitysteer.bridge.kernels import KernelOperator
from densitysteer.density.grid import Grid, GridDensity, finalize_density
from densitysteer.utils.errors import DomainError


logger = logging.getLogger(__name__)

CONTROL_FORMS = ("log", "linear")
NEGLIGIBLE_MASS = 1e-12


@dataclass
class TransientSnapshot:
    """单个时刻的 ĥ、h、σ_ε、v_ε"""

    t: float
    log_h_hat: np.ndarray
    log_h: np.ndarray
    sigma: GridDensity
    control: np.ndarray


def _control_field(log_h: np.ndarray, spacing: float, eps: float, form: str) -> np.ndarray:
    with np.errstate(invalid="ignore", over="ignore"):
        if form == "log":
            field = 2.0 * eps * np.gradient(np.where(np.isfinite(log_h), log_h, np.nan), spacing, axis=-1)
        else:
            # 与对数形式对照用
            field = 2.0 * eps * np.gradient(np.exp(log_h), spacing, axis=-1)
    # 支撑边缘（邻点因子为 0）不定义控制
    return np.where(np.isfinite(field), field, 0.0)


def propagate_factors(
    recovered: RecoveredFactors,
    t: float,
    eps: float,
    normalize_kernels: bool = True,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    ĥ(·,t)、h(·,t) 的对数值（核求积）；t=0、t=1 直接取恢复得到的边界值

    Args:
        normalize_kernels: 把核的求积行归一化为单位质量（核窄于网格间距时保持质量）
    """
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"时刻必须位于 [0,1]，收到 {t}")
    if t == 0.0:
        return recovered.log_h0_hat, recovered.log_h_at0
    if t == 1.0:
        return recovered.log_h_hat_at1, recovered.log_h1
    grid = recovered.grid
    forward = KernelOperator.prior(grid, grid, eps, 0.0, t, normalize="forward" if normalize_kernels else None)
    backward = KernelOperator.prior(grid, grid, eps, t, 1.0, normalize="backward" if normalize_kernels else None)
    return forward.log_apply_forward(recovered.log_h0_hat), backward.log_apply_backward(recovered.log_h1)


def transient(
    recovered: RecoveredFactors,
    t: float,
    eps: float,
    control_form: str = "log",
    normalize_kernels: bool = True,
    renormalize: bool = False,
    mass_tolerance: float = 1e-3,
) -> TransientSnapshot:
    """
    重构时刻 t 的 σ_ε 与 v_ε

    Args:
        recovered: z 网格上的因子
        t: 时刻 ∈ [0,1]
        eps: 扩散强度 ε
        control_form: "log"（2ε∂log h）或 "linear"（2ε∂h）

    Returns:
        TransientSnapshot
    """
    log_h_hat, log_h = propagate_factors(recovered, t, eps, normalize_kernels)
    return assemble_snapshot(recovered.grid, t, eps, log_h_hat, log_h, control_form, renormalize, mass_tolerance)


def snapshot_density(
    values: np.ndarray,
    grid: Grid,
    t: float,
    renormalize: bool,
    mass_tolerance: float,
    stage: str = "transient",
    **diagnostics,
) -> GridDensity:
    """快照密度的质量检查：不归一化时质量偏离 1 超过 mass_tolerance 即报 MASS_DRIFT"""
    sigma = finalize_density(values, grid, renormalize, stage=stage, mass_tolerance=mass_tolerance, t=float(t), **diagnostics)
    mass = sigma.provenance["pre_normalization_mass"]
    logger.debug(f"[瞬态] t={t:.3f} 归一化前质量 {mass:.6f}")
    if not renormalize and not abs(1.0 - mass) <= mass_tolerance:
        raise DomainError(
            f"t={t:.3f} 处 σ_ε 的质量为 {mass:.6g}，偏离 1 超过 {mass_tolerance:.1e}",
            code="MASS_DRIFT",
            suggestion="请加密 z 网格或增大 ε；确需归一化时显式传入 renormalize=True",
        )
    return sigma


def assemble_snapshot(
    grid: Grid,
    t: float,
    eps: float,
    log_h_hat: np.ndarray,
    log_h: np.ndarray,
    control_form: str = "log",
    renormalize: bool = False,
    mass_tolerance: float = 1e-3,
) -> TransientSnapshot:
    """
    σ_ε = ĥ·h 与 v_ε

    缺省不归一化：质量偏离 1 超过 mass_tolerance 时抛出 DomainError（code=MASS_DRIFT）。
    renormalize=True 时只记录告警并归一化。
    """
    if control_form not in CONTROL_FORMS:
        raise DomainError(f"未知的控制形式 {control_form!r}")
    with np.errstate(over="ignore", invalid="ignore"):
        values = np.exp(log_h_hat + log_h)
    values = np.where(np.isfinite(values), values, np.nan)
    peak = np.nanmax(values) if np.any(np.isfinite(values)) else 0.0
    # 端点处因子在边缘支撑外恰为 0；中间时刻核传播后不应再出现 0
    if 0.0 < t < 1.0 and np.any(~np.isfinite(log_h) & np.isfinite(log_h_hat)):
        raise DomainError(f"t={t} 处 h 在有质量的节点上非正")
    values = np.nan_to_num(values, nan=0.0)

    control = _control_field(log_h, float(grid.spacing[-1]), eps, control_form)
    control = np.where(values > NEGLIGIBLE_MASS * max(peak, 1e-300), control, 0.0)
    sigma = snapshot_density(values, grid, t, renormalize, mass_tolerance, stage="transient")
    return TransientSnapshot(t=float(t), log_h_hat=log_h_hat, log_h=log_h, sigma=sigma, control=control)


def control_cost(snapshots: Sequence[TransientSnapshot]) -> float:
    """∫∫ ½|v_ε|² σ_ε dz dt（时间方向梯形求积）"""
    times = np.array([s.t for s in snapshots])
    per_time = np.array([0.5 * np.sum(s.control ** 2 * s.sigma.values) * s.sigma.grid.cell_volume for s in snapshots])
    return float(trapezoid(per_time, times))


def fokker_planck_residual(snapshots: Sequence[TransientSnapshot], eps: float) -> Dict[str, float]:
    """
    ∂σ/∂t + ∇·((Az + bv)σ) − ε ∂²σ/∂z_n² 的有限差分残差

    时间导数取相邻快照的中心差分（要求等间距快照），只在内部时刻求值。

    Returns:
        {"rms": 质量加权 RMS, "relative": 相对 ∂σ/∂t 尺度的 RMS}
    """
    if len(snapshots) < 3:
        raise DomainError("至少需要 3 个快照")
    times = np.array([s.t for s in snapshots])
    steps = np.diff(times)
    if np.max(np.abs(steps - steps[0])) > 1e-9:
        raise DomainError("Fokker–Planck 残差要求等间距快照")
    grid = snapshots[0].sigma.grid
    spacing = grid.spacing
    n = grid.dimension
    points = grid.points().reshape(grid.shape + (n,))
    residual_sq: List[float] = []
    scale_sq: List[float] = []
    for k in range(1, len(snapshots) - 1):
        sigma = snapshots[k].sigma.values
        dsigma_dt = (snapshots[k + 1].sigma.values - snapshots[k - 1].sigma.values) / (2.0 * steps[0])
        divergence = np.zeros_like(sigma)
        for axis in range(n):
            velocity = points[..., axis + 1] if axis < n - 1 else snapshots[k].control
            divergence += np.gradient(velocity * sigma, spacing[axis], axis=axis)
        diffusion = eps * np.gradient(np.gradient(sigma, spacing[-1], axis=-1), spacing[-1], axis=-1)
        residual = dsigma_dt + divergence - diffusion
        residual_sq.append(float(np.sum(residual ** 2 * sigma) * grid.cell_volume))
        scale_sq.append(float(np.sum(dsigma_dt ** 2 * sigma) * grid.cell_volume))
    rms = float(np.sqrt(np.mean(residual_sq)))
    scale = float(np.sqrt(np.mean(scale_sq)))
    return {"rms": rms, "relative": rms / scale if scale > 0 else float("inf")}
