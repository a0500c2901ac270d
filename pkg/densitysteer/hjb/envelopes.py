# coding=utf-8
"""
线性先验下值函数的包络表示

上包络（对网格节点取下确界）：
    ψ̃(z,t) = min_z̄ ψ̃₀(z̄) + ½‖z − e^{tA}z̄‖²_{M(t,0)⁻¹}

下包络（ψ̃₀ 凸时，对对偶网格取上确界）：
    ψ̃(z,t) = max_r −ψ̃₀*(r) + zᵀe^{−tAᵀ}r − ½rᵀG(t)r
    G(t) = ∫₀ᵗ e^{−sA}bbᵀe^{−sAᵀ}ds
"""

import logging
from typing import Optional, Tuple

import numpy as np

from densitysteer.density.grid import Grid
from densitysteer.linear.brunovsky import gramian_closed_form, gramian_solve, reverse_gramian, transition_offset
from densitysteer.utils.errors import DomainError


logger = logging.getLogger(__name__)

DUAL_PAD = 0.2
ENVELOPE_CHUNK = 512
TIME_FLOOR = 1e-12


def _points(z, n: int) -> np.ndarray:
    return np.asarray(z, dtype=float).reshape(-1, n)


def _finite_nodes(values: np.ndarray, grid: Grid) -> Tuple[np.ndarray, np.ndarray]:
    flat = np.asarray(values, dtype=float).ravel()
    keep = np.isfinite(flat)
    return grid.points()[keep], flat[keep]


def upper_envelope(psi0_values: np.ndarray, grid: Grid, z, t: float) -> np.ndarray:
    """
    节点上的下确界卷积

    有限节点集上的下确界高估真实下确界，误差随网格加密收敛。

    Args:
        psi0_values: 网格上的 ψ̃₀（nan 节点跳过）
        grid: z 网格
        z: (m, n) 求值点
        t: 时刻

    Returns:
        (m,) 值
    """
    n = grid.dimension
    z = _points(z, n)
    if t <= TIME_FLOOR:
        return grid.interpolate(psi0_values, z, fill_value=None)
    nodes, values = _finite_nodes(psi0_values, grid)
    moved = nodes @ transition_offset(n, t).T
    metric = gramian_solve(gramian_closed_form(n, t, 0.0).value, np.eye(n))
    result = np.empty(len(z))
    for start in range(0, len(z), ENVELOPE_CHUNK):
        block = z[start:start + ENVELOPE_CHUNK]
        gap = block[:, None, :] - moved[None, :, :]
        penalty = 0.5 * np.einsum("mja,ab,mjb->mj", gap, metric, gap)
        result[start:start + ENVELOPE_CHUNK] = np.min(values[None, :] + penalty, axis=1)
    return result


def dual_grid_for(psi0_values: np.ndarray, grid: Grid, nodes=None, pad: float = DUAL_PAD) -> Grid:
    """
    对偶变量 r 的网格：覆盖 ψ̃₀ 有限差分梯度的取值范围，两侧各留 pad 比例

    凸 ψ̃₀ 的上确界在 ∂ψ̃₀ 附近取得。
    """
    values = np.asarray(psi0_values, dtype=float)
    gradients = np.gradient(values, *grid.axes)
    if grid.dimension == 1:
        gradients = [gradients]
    lower, upper = [], []
    for component in gradients:
        finite = component[np.isfinite(component)]
        if finite.size == 0:
            raise DomainError("ψ̃₀ 没有有限值，无法确定对偶网格")
        lo, hi = float(finite.min()), float(finite.max())
        width = max(hi - lo, 1e-6)
        lower.append(lo - pad * width)
        upper.append(hi + pad * width)
    return Grid.from_bounds(lower, upper, grid.shape if nodes is None else nodes)


def discrete_conjugate(psi0_values: np.ndarray, grid: Grid, dual_grid: Grid) -> np.ndarray:
    """ψ̃₀*(r) = max_z ⟨z, r⟩ − ψ̃₀(z)，在对偶网格节点上求值"""
    nodes, values = _finite_nodes(psi0_values, grid)
    duals = dual_grid.points()
    result = np.empty(len(duals))
    for start in range(0, len(duals), ENVELOPE_CHUNK):
        block = duals[start:start + ENVELOPE_CHUNK]
        result[start:start + ENVELOPE_CHUNK] = np.max(block @ nodes.T - values[None, :], axis=1)
    return result.reshape(dual_grid.shape)


def convexity_margin(psi0_values: np.ndarray, grid: Grid, bulk: float = 0.8) -> float:
    """
    离散 Hessian 在网格中心区域（各轴 bulk 比例）上的最小特征值
    """
    values = np.asarray(psi0_values, dtype=float)
    axes = grid.axes
    first = np.gradient(values, *axes)
    if grid.dimension == 1:
        first = [first]
    hessian = np.empty(values.shape + (grid.dimension, grid.dimension))
    for i, component in enumerate(first):
        second = np.gradient(component, *axes)
        if grid.dimension == 1:
            second = [second]
        for j, entry in enumerate(second):
            hessian[..., i, j] = entry
    hessian = 0.5 * (hessian + np.swapaxes(hessian, -1, -2))

    mask = np.ones(grid.shape, dtype=bool)
    points = grid.points().reshape(grid.shape + (grid.dimension,))
    centre = 0.5 * (grid.lower + grid.upper)
    half = 0.5 * bulk * (grid.upper - grid.lower)
    mask &= np.all(np.abs(points - centre) <= half, axis=-1)
    mask &= np.all(np.isfinite(hessian), axis=(-1, -2))
    if not mask.any():
        raise DomainError("网格中心区域没有可用于凸性检验的节点")
    return float(np.min(np.linalg.eigvalsh(hessian[mask])))


def lower_envelope(
    psi0_values: np.ndarray,
    grid: Grid,
    z,
    t: float,
    conjugate: Optional[np.ndarray] = None,
    dual_grid: Optional[Grid] = None,
    convexity_tol: float = 1e-6,
) -> np.ndarray:
    """
    对偶网格上的上确界表示

    Args:
        psi0_values: 网格上的 ψ̃₀
        grid: z 网格
        z: (m, n) 求值点
        t: 时刻
        conjugate: 对偶网格上的 ψ̃₀*（缺省由 discrete_conjugate 计算）
        dual_grid: 对偶网格（缺省由 dual_grid_for 构造）

    Raises:
        DomainError: ψ̃₀ 在中心区域非凸
    """
    n = grid.dimension
    z = _points(z, n)
    if t <= TIME_FLOOR:
        return grid.interpolate(psi0_values, z, fill_value=None)
    margin = convexity_margin(psi0_values, grid)
    scale = max(1.0, float(np.nanmax(np.abs(psi0_values))))
    if margin < -convexity_tol * scale:
        raise DomainError(f"下包络要求 ψ̃₀ 为凸函数，离散 Hessian 最小特征值 {margin:.3e}", code="NOT_CONVEX")
    if dual_grid is None:
        dual_grid = dual_grid_for(psi0_values, grid)
    if conjugate is None:
        conjugate = discrete_conjugate(psi0_values, grid, dual_grid)

    duals = dual_grid.points()
    base = -np.asarray(conjugate, dtype=float).ravel() - 0.5 * np.einsum("ja,ab,jb->j", duals, reverse_gramian(n, t), duals)
    # zᵀe^{−tAᵀ}r = (e^{−tA}z)ᵀr
    pulled = z @ transition_offset(n, -t).T
    result = np.empty(len(z))
    for start in range(0, len(z), ENVELOPE_CHUNK):
        block = pulled[start:start + ENVELOPE_CHUNK]
        result[start:start + ENVELOPE_CHUNK] = np.max(base[None, :] + block @ duals.T, axis=1)
    return result
