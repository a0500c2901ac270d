# coding=utf-8
"""
密度的坐标变换

- 经微分同胚 τ 推前 / 拉回：σ(z) = ρ(τ⁻¹z)/|det ∇τ|，ρ(x) = σ(τx)|det ∇τ|
- 帽化：σ̂₀(ẑ) = det(M₁₀)^{1/2} σ₀(Φ₁₀⁻¹M₁₀^{1/2}ẑ)，σ̂₁(ẑ) = det(M₁₀)^{1/2} σ₁(M₁₀^{1/2}ẑ)
"""

import logging
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from densitysteer.density.grid import Grid, GridDensity, covering_grid, finalize_density
from densitysteer.geometry.maps import CoordinateMap
from densitysteer.linear.brunovsky import HattingTransform
from densitysteer.utils.errors import InverseMapError, SupportCoverageError


logger = logging.getLogger(__name__)

NEGLIGIBLE_DENSITY = 1e-8
SUPPORT_FLOOR = 1e-12


def pushforward_diffeo(
    rho: GridDensity,
    tmap: CoordinateMap,
    zgrid: Grid,
    renormalize: bool = True,
    guess=None,
) -> GridDensity:
    """
    把 x 网格上的 ρ 经 τ 推前到 z 网格

    Args:
        rho: x 网格密度
        tmap: 坐标映射 τ
        zgrid: 目标 z 网格
        renormalize: 是否归一化
        guess: Newton 的后备初值（如系统参考点）

    Returns:
        z 网格上的 σ

    Raises:
        InverseMapError: 有质量的节点处 τ⁻¹ 失败
    """
    preimages, success, dets = tmap.preimages(zgrid, guess=guess)
    values = np.zeros(zgrid.size)
    ok = success & (dets > 0)
    values[ok] = rho.evaluate(preimages[ok]) / dets[ok]

    failed = np.flatnonzero(~ok)
    if failed.size:
        # 失败节点：若最后迭代点处 ρ 不可忽略，则视为真实失败
        peak = float(rho.values.max())
        leaked = rho.evaluate(preimages[failed])
        worst = int(np.argmax(leaked))
        if leaked[worst] > NEGLIGIBLE_DENSITY * peak:
            z = zgrid.points()[failed[worst]]
            raise InverseMapError(f"τ⁻¹ 在有质量的节点 z={z.tolist()} 处失败")
        logger.info(f"[推前] {failed.size} 个节点无原像，置零")
    return finalize_density(values, zgrid, renormalize, stage="pushforward", failed_nodes=int(failed.size))


def pullback_to_x(
    sigma: GridDensity,
    tmap: CoordinateMap,
    xgrid: Grid,
    renormalize: bool = True,
) -> GridDensity:
    """ρ(x) = σ(τ(x))·|det ∇τ(x)|，定义域外的节点为零"""
    images, dets, inside = tmap.images(xgrid)
    values = np.zeros(xgrid.size)
    values[inside] = sigma.evaluate(images[inside]) * dets[inside]
    return finalize_density(values, xgrid, renormalize, stage="pullback", outside_domain=int(np.sum(~inside)))


def _hatted_points(sigma0: GridDensity, sigma1: GridDensity, hat: HattingTransform) -> np.ndarray:
    points0 = sigma0.grid.points()[sigma0.support_mask(SUPPORT_FLOOR).ravel()]
    points1 = sigma1.grid.points()[sigma1.support_mask(SUPPORT_FLOOR).ravel()]
    return np.vstack([points0 @ hat.source_map.T, points1 @ hat.target_map.T])


def hat_marginals(
    sigma0: GridDensity,
    sigma1: GridDensity,
    n: int,
    hat_grid: Optional[Grid] = None,
    nodes: Union[int, Sequence[int], None] = None,
    escape_tol: float = 5e-2,
    renormalize: bool = True,
) -> Tuple[GridDensity, GridDensity]:
    """
    帽化两端边缘密度到共享的 ẑ 网格

    Args:
        sigma0, sigma1: z 网格上的边缘密度
        n: 维数
        hat_grid: 显式 ẑ 网格；缺省时取两组变换后支撑的包围盒
        nodes: 自动网格每轴节点数（缺省与 z 网格相同）
        escape_tol: 变换后质量允许的流失

    Returns:
        (σ̂₀, σ̂₁)

    Raises:
        SupportCoverageError: 变换后的支撑逃出 ẑ 网格
    """
    hat = HattingTransform.for_dimension(n)
    if hat_grid is None:
        hat_grid = covering_grid(_hatted_points(sigma0, sigma1, hat), nodes or sigma0.grid.shape)
    points = hat_grid.points()
    scale = np.sqrt(hat.det_M10)
    # 原像：z = L⁻¹ ẑ
    pre0 = np.linalg.solve(hat.source_map, points.T).T
    pre1 = np.linalg.solve(hat.target_map, points.T).T
    hatted = []
    for label, sigma, pre in (("σ̂₀", sigma0, pre0), ("σ̂₁", sigma1, pre1)):
        values = scale * sigma.evaluate(pre)
        mass = float(values.sum() * hat_grid.cell_volume)
        if mass < 1.0 - escape_tol:
            raise SupportCoverageError(f"{label} 的变换后支撑逃出 ẑ 网格（网格内质量 {mass:.4f}）")
        hatted.append(finalize_density(values, hat_grid, renormalize, stage="hatting"))
    logger.debug(f"[帽化] ẑ 网格 {hat_grid.to_dict()}")
    return hatted[0], hatted[1]


def unhat_marginals(
    sigma_hat0: GridDensity,
    sigma_hat1: GridDensity,
    n: int,
    zgrid: Grid,
    renormalize: bool = False,
) -> Tuple[GridDensity, GridDensity]:
    """帽化的逆变换：σ₀(z) = det(M₁₀)^{−1/2} σ̂₀(L₀z)，σ₁(z) = det(M₁₀)^{−1/2} σ̂₁(L₁z)"""
    hat = HattingTransform.for_dimension(n)
    points = zgrid.points()
    scale = 1.0 / np.sqrt(hat.det_M10)
    values0 = scale * sigma_hat0.evaluate(points @ hat.source_map.T)
    values1 = scale * sigma_hat1.evaluate(points @ hat.target_map.T)
    return (
        finalize_density(values0, zgrid, renormalize, stage="unhatting"),
        finalize_density(values1, zgrid, renormalize, stage="unhatting"),
    )
