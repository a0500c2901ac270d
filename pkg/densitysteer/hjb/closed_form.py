# coding=utf-8
"""
线性先验下值函数的闭式特征线解

沿 ζ₀ = ∇ψ̃₀(z₀) 出发的特征线：
    z = e^{tA}z₀ + M(t,0)e^{−tAᵀ}∇ψ̃₀(z₀)
    ψ̃(z,t) = ψ̃₀(z₀) + ½‖z − e^{tA}z₀‖²_{M(t,0)⁻¹}
其中 ∇ψ̃₀(z) = Rᵀ∇φ(Rz) − RᵀRz，R = M₁₀^{−1/2}e^{A}。

z₀ 方程的 Jacobian 为 e^{tA}[I + N Rᵀ(Hess φ − I)R]，N(t) = e^{−tA}M(t,0)e^{−tAᵀ}；
解的唯一性由谱裕度 1 + λ_min(S^{1/2}(Hess φ − I)S^{1/2}) > 0 保证，S = RNRᵀ。
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import eigh

from densitysteer.density.grid import Grid
from densitysteer.geometry.maps import newton_solve
from densitysteer.hjb.envelopes import discrete_conjugate, dual_grid_for, lower_envelope, upper_envelope
from densitysteer.hjb.hamiltonian import HamiltonianSpec
from densitysteer.linear.brunovsky import HattingTransform, reverse_gramian, transition_offset
from densitysteer.transport.interpolation import ValueBoundary
from densitysteer.transport.potentials import BrenierPotential
from densitysteer.utils.errors import DomainError, InverseMapError, SpectralConditionError


logger = logging.getLogger(__name__)

PROVENANCES = ("characteristic", "upper_envelope", "lower_envelope", "riccati_oracle")
TIME_MATCH = 1e-9
MARGIN_TOLERANCE = 1e-10


# ═══════════════════════════════════════════════════════════════
# 特征线几何
# ═══════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class CharacteristicGeometry:
    """给定 (n, t) 的 e^{±tA}、N(t)、R、S 与 S^{1/2}"""

    n: int
    t: float
    forward: np.ndarray
    backward: np.ndarray
    N: np.ndarray
    R: np.ndarray
    S_sqrt: np.ndarray

    @property
    def shooting(self) -> np.ndarray:
        """M(t,0)e^{−tAᵀ} = e^{tA}N"""
        return self.forward @ self.N


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    eigenvalues, eigenvectors = eigh(0.5 * (matrix + matrix.T))
    root = (eigenvectors * np.sqrt(np.clip(eigenvalues, 0.0, None))) @ eigenvectors.T
    return 0.5 * (root + root.T)


@lru_cache(maxsize=256)
def characteristic_geometry(n: int, t: float) -> CharacteristicGeometry:
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"时刻必须位于 [0,1]，收到 {t}")
    hat = HattingTransform.for_dimension(n)
    N = reverse_gramian(n, t)
    R = hat.source_map
    return CharacteristicGeometry(
        n=n,
        t=t,
        forward=transition_offset(n, t),
        backward=transition_offset(n, -t),
        N=N,
        R=R,
        S_sqrt=_psd_sqrt(R @ N @ R.T),
    )


@dataclass
class Z0Solution:
    """z₀ 方程的解与 Newton 迭代中的最小谱裕度"""

    z0: np.ndarray
    margin: float
    trace: List[float] = field(default_factory=list)


def spectral_margin(geometry: CharacteristicGeometry, hessian: np.ndarray) -> float:
    """1 + λ_min(S^{1/2}(Hess φ − I)S^{1/2})"""
    root = geometry.S_sqrt
    core = root @ (hessian - np.eye(geometry.n)) @ root
    return float(1.0 + np.linalg.eigvalsh(0.5 * (core + core.T))[0])


def solve_z0(
    potential: BrenierPotential,
    z,
    t: float,
    tol: float = 1e-10,
    max_iter: int = 50,
    guess=None,
    margin_tol: float = MARGIN_TOLERANCE,
) -> Z0Solution:
    """
    Newton 求解 e^{tA}z₀ + M(t,0)e^{−tAᵀ}∇ψ̃₀(z₀) = z

    Args:
        potential: Brenier 势 φ（MongeMap 或 QuadraticPotential）
        z: 目标点
        t: 时刻 ∈ [0,1]
        guess: Newton 初值，缺省为 e^{−tA}z（恒等传输的解）

    Returns:
        Z0Solution

    Raises:
        SpectralConditionError: 迭代点处谱裕度 ≤ margin_tol
        InverseMapError: Newton 停滞
    """
    z = np.asarray(z, dtype=float)
    n = z.shape[0]
    t = float(t)
    geometry = characteristic_geometry(n, t)
    if t == 0.0:
        return Z0Solution(z0=z.copy(), margin=1.0, trace=[0.0])

    R = geometry.R
    shooting = geometry.shooting
    margins: List[float] = []

    def fn(y: np.ndarray) -> np.ndarray:
        gradient = potential.gradient(R @ y)[0] @ R - R.T @ (R @ y)
        return geometry.forward @ y + shooting @ gradient

    def jacobian(y: np.ndarray) -> np.ndarray:
        hessian = potential.hessian(R @ y)[0]
        margin = spectral_margin(geometry, hessian)
        margins.append(margin)
        if margin <= margin_tol:
            raise SpectralConditionError(margin)
        return geometry.forward + shooting @ R.T @ (hessian - np.eye(n)) @ R

    start = geometry.backward @ z if guess is None else np.asarray(guess, dtype=float)
    z0, trace = newton_solve(fn, jacobian, z, start, tol=tol, max_iter=max_iter)
    final = spectral_margin(geometry, potential.hessian(R @ z0)[0])
    margins.append(final)
    if final <= margin_tol:
        raise SpectralConditionError(final)
    return Z0Solution(z0=z0, margin=min(margins), trace=trace)


def psi_characteristic(boundary: ValueBoundary, z, t: float, tol: float = 1e-10) -> np.ndarray:
    """
    ψ̃(z,t) = ψ̃₀(z₀) + ½‖z − e^{tA}z₀‖²_{M(t,0)⁻¹}

    z − e^{tA}z₀ = M e^{−tAᵀ}g，g = ∇ψ̃₀(z₀)，故罚项等于 ½gᵀN(t)g，无需求 M(t,0)⁻¹。

    Returns:
        (m,) 值
    """
    n = boundary.n
    points = np.asarray(z, dtype=float).reshape(-1, n)
    if t == 0.0:
        return boundary.psi0(points)
    geometry = characteristic_geometry(n, float(t))
    roots = np.empty_like(points)
    previous = None
    for i, point in enumerate(points):
        try:
            roots[i] = solve_z0(boundary.potential, point, t, tol=tol).z0
        except InverseMapError:
            if previous is None:
                raise
            # 网格逐点求值时退而用相邻节点的解作初值
            roots[i] = solve_z0(boundary.potential, point, t, tol=tol, guess=previous).z0
        previous = roots[i]
    gradients = boundary.psi0_gradient(roots)
    penalty = 0.5 * np.einsum("ma,ab,mb->m", gradients, geometry.N, gradients)
    return boundary.psi0(roots) + penalty


# ═══════════════════════════════════════════════════════════════
# Riccati 校验
# ═══════════════════════════════════════════════════════════════

@dataclass
class RiccatiSolution:
    """
    二次 ψ̃₀ 的精确解 ψ̃(z,t) = ½zᵀΠ(t)z + q(t)ᵀz + c(t)
    """

    n: int
    times: np.ndarray
    Pi: np.ndarray
    q: np.ndarray
    c: np.ndarray

    def index(self, t: float) -> int:
        hits = np.flatnonzero(np.abs(self.times - t) <= TIME_MATCH)
        if hits.size == 0:
            raise DomainError(f"Riccati 解未在 t={t} 处采样")
        return int(hits[0])

    def value(self, z, t: float) -> np.ndarray:
        k = self.index(t)
        z = np.asarray(z, dtype=float).reshape(-1, self.n)
        return 0.5 * np.einsum("ma,ab,mb->m", z, self.Pi[k], z) + z @ self.q[k] + self.c[k]

    def gradient(self, z, t: float) -> np.ndarray:
        k = self.index(t)
        z = np.asarray(z, dtype=float).reshape(-1, self.n)
        return z @ self.Pi[k].T + self.q[k]


def riccati_oracle(Pi0, q0, c0: float, n: int, times: Sequence[float], rtol: float = 1e-10, atol: float = 1e-12) -> RiccatiSolution:
    """
    积分 Π̇ = −(ΠA + AᵀΠ) − ΠbbᵀΠ，q̇ = −Aᵀq − Πbbᵀq，ċ = −½(bᵀq)²

    Args:
        Pi0: Hess ψ̃₀（对称）
        q0: ∇ψ̃₀(0)
        c0: ψ̃₀(0)
        times: 输出时刻（升序，起点 0）

    Raises:
        DomainError: 积分失败（Π 在区间内爆破）
    """
    Pi0 = np.asarray(Pi0, dtype=float).reshape(n, n)
    q0 = np.asarray(q0, dtype=float).reshape(n)
    times = np.asarray(times, dtype=float)
    A = np.eye(n, k=1)

    def rhs(_: float, state: np.ndarray) -> np.ndarray:
        Pi = state[:n * n].reshape(n, n)
        q = state[n * n:n * n + n]
        # Πb 是 Π 的最后一列
        column = Pi[:, -1]
        dPi = -(Pi @ A + A.T @ Pi) - np.outer(column, column)
        dq = -A.T @ q - column * q[-1]
        dc = -0.5 * q[-1] ** 2
        return np.concatenate((dPi.ravel(), dq, [dc]))

    state0 = np.concatenate((Pi0.ravel(), q0, [float(c0)]))
    solution = solve_ivp(rhs, (0.0, float(times[-1])), state0, t_eval=times, method="RK45", rtol=rtol, atol=atol)
    if not solution.success:
        raise DomainError(f"Riccati 方程积分失败: {solution.message}", code="RICCATI_BLOWUP")
    states = solution.y.T
    Pi = states[:, :n * n].reshape(-1, n, n)
    logger.debug(f"[Riccati] 积分至 t={times[-1]}，共 {len(times)} 个输出时刻")
    return RiccatiSolution(
        n=n,
        times=times,
        Pi=0.5 * (Pi + np.swapaxes(Pi, 1, 2)),
        q=states[:, n * n:n * n + n],
        c=states[:, -1],
    )


# ═══════════════════════════════════════════════════════════════
# 值函数格点
# ═══════════════════════════════════════════════════════════════

@dataclass
class ValueFunction:
    """
    (z, t) 格点上的 ψ̃

    Attributes:
        grid: z 网格
        times: 时刻采样
        values: 形状 (len(times), *grid.shape)
        provenance: characteristic / upper_envelope / lower_envelope / riccati_oracle
    """

    grid: Grid
    times: np.ndarray
    values: np.ndarray
    provenance: str

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.provenance not in PROVENANCES:
            raise DomainError(f"未知的值函数来源 {self.provenance!r}，可选 {PROVENANCES}")
        expected = (len(self.times),) + self.grid.shape
        if self.values.shape != expected:
            raise DomainError(f"值函数形状 {self.values.shape} 与 {expected} 不符")
        missing = int(np.sum(~np.isfinite(self.values)))
        if missing:
            logger.warning(f"[值函数] {self.provenance} 格点含 {missing} 个非有限值")

    def time_index(self, t: float) -> int:
        hits = np.flatnonzero(np.abs(self.times - t) <= TIME_MATCH)
        if hits.size == 0:
            raise DomainError(f"值函数未在 t={t} 处采样，可用时刻 {self.times.tolist()}")
        return int(hits[0])

    def at(self, t: float) -> np.ndarray:
        return self.values[self.time_index(t)]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "provenance": self.provenance,
            "times": self.times.tolist(),
            "grid": self.grid.to_dict(),
        }


def value_lattice(
    kind: str,
    grid: Grid,
    times: Sequence[float],
    boundary: Optional[ValueBoundary] = None,
    psi0_values: Optional[np.ndarray] = None,
    riccati: Optional[RiccatiSolution] = None,
) -> ValueFunction:
    """
    在 (z, t) 格点上构造 ValueFunction

    Args:
        kind: PROVENANCES 之一
        boundary: characteristic 需要；包络缺省也从中取 ψ̃₀
        psi0_values: 网格上的 ψ̃₀（包络用）
        riccati: riccati_oracle 需要，其采样时刻须覆盖 times
    """
    times = np.asarray(times, dtype=float)
    points = grid.points()
    if kind in ("upper_envelope", "lower_envelope") and psi0_values is None:
        if boundary is None:
            raise DomainError(f"{kind} 需要 ψ̃₀ 网格值或边界值函数")
        psi0_values = boundary.psi0(points).reshape(grid.shape)

    layers = []
    if kind == "characteristic":
        if boundary is None:
            raise DomainError("characteristic 格点需要边界值函数")
        layers = [psi_characteristic(boundary, points, t) for t in times]
    elif kind == "upper_envelope":
        layers = [upper_envelope(psi0_values, grid, points, t) for t in times]
    elif kind == "lower_envelope":
        dual = dual_grid_for(psi0_values, grid)
        conjugate = discrete_conjugate(psi0_values, grid, dual)
        layers = [lower_envelope(psi0_values, grid, points, t, conjugate=conjugate, dual_grid=dual) for t in times]
    elif kind == "riccati_oracle":
        if riccati is None:
            raise DomainError("riccati_oracle 格点需要 RiccatiSolution")
        layers = [riccati.value(points, t) for t in times]
    else:
        raise DomainError(f"未知的值函数来源 {kind!r}，可选 {PROVENANCES}")

    logger.info(f"[值函数] {kind} 格点完成：{len(times)} 个时刻 × {grid.size} 个节点")
    values = np.stack([layer.reshape(grid.shape) for layer in layers])
    return ValueFunction(grid=grid, times=times, values=values, provenance=kind)


# ═══════════════════════════════════════════════════════════════
# 控制与残差
# ═══════════════════════════════════════════════════════════════

def optimal_control_from_psi(spec: HamiltonianSpec, value_fn: ValueFunction, z, t: float) -> np.ndarray:
    """
    v = (1/β_τ²) ∂ψ/∂zₙ − α_τ/β_τ

    ∂ψ/∂zₙ 由网格上的中心差分插值得到，边界节点退化为单侧差分。

    Returns:
        (m,) 控制值
    """
    grid = value_fn.grid
    points = np.asarray(z, dtype=float).reshape(-1, grid.dimension)
    layer = value_fn.at(t)
    derivative = np.gradient(layer, grid.spacing[-1], axis=-1)
    step = grid.spacing[-1]
    near_edge = (points[:, -1] < grid.lower[-1] + step) | (points[:, -1] > grid.upper[-1] - step)
    if near_edge.any():
        logger.warning(f"[最优控制] {int(near_edge.sum())} 个求值点靠近网格边界，∂ψ/∂zₙ 为单侧差分")
    slope = grid.interpolate(derivative, points, fill_value=None)
    controls = np.empty(len(points))
    for i, point in enumerate(points):
        a, b = spec.feedback(point)
        controls[i] = slope[i] / b ** 2 - a / b
    return controls


def hjb_residual(
    spec: HamiltonianSpec,
    value_fn: ValueFunction,
    weights: Optional[np.ndarray] = None,
) -> Dict[str, float]:
    """
    ψ_t + H(z, ∇ψ) 的有限差分残差（空间与时间各去掉一层边界）

    Args:
        weights: 质量权重，形状为 grid.shape 或 values.shape；缺省均匀

    Returns:
        {"rms": 加权均方根, "max": 最大绝对值, "interior_nodes": 参与节点数}
    """
    grid = value_fn.grid
    if len(value_fn.times) < 3:
        raise DomainError("HJB 残差至少需要 3 个时刻")
    values = value_fn.values
    axes = grid.axes
    dpsi_dt = np.gradient(values, value_fn.times, axis=0)
    spatial = [np.gradient(values, axis_values, axis=k + 1) for k, axis_values in enumerate(axes)]

    interior = (slice(1, -1),) + tuple(slice(1, -1) for _ in grid.shape)
    costates = np.stack([component[interior] for component in spatial], axis=-1)
    inner_shape = costates.shape[:-1]
    node_points = grid.points().reshape(grid.shape + (grid.dimension,))[tuple(slice(1, -1) for _ in grid.shape)]
    node_points = np.broadcast_to(node_points, inner_shape + (grid.dimension,))
    hamiltonians = spec.hamiltonian_field(node_points.reshape(-1, grid.dimension), costates.reshape(-1, grid.dimension))
    residual = dpsi_dt[interior] + hamiltonians.reshape(inner_shape)

    if weights is None:
        w = np.ones(inner_shape)
    else:
        weights = np.asarray(weights, dtype=float)
        if weights.shape == grid.shape:
            weights = np.broadcast_to(weights, values.shape)
        if weights.shape != values.shape:
            raise DomainError(f"权重形状 {weights.shape} 与值函数不符")
        w = weights[interior]
    finite = np.isfinite(residual)
    w = np.where(finite, w, 0.0)
    total = float(w.sum())
    if total <= 0.0:
        raise DomainError("HJB 残差的权重总和为零")
    rms = float(np.sqrt(np.sum(w * np.where(finite, residual, 0.0) ** 2) / total))
    logger.debug(f"[HJB 残差] {value_fn.provenance}: 加权 RMS {rms:.3e}")
    return {
        "rms": rms,
        "max": float(np.max(np.abs(residual[finite]))) if finite.any() else float("nan"),
        "interior_nodes": int(finite.sum()),
    }
