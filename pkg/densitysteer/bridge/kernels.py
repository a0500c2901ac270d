# coding=utf-8
"""
Markov 核与核算子

κᴮ 为 n 维各向同性 Brownian 核；κ 为线性先验 ż = Az + √(2ε)b ẇ 的转移核，
即协方差 2εM(t,s)、均值 Φ(t,s)z̄ 的高斯密度：

    κ(s, z̄, t, z) = det(M̄)^{−1/2} κᴮ(s, M̄^{−1/2}Φ z̄, t, M̄^{−1/2}z)，M̄ = M(t,s)/(t−s)

t−s = 1 时 M̄ = M(t,s)。核积一律在对数域中计算（logsumexp），避免 ε 很小时下溢。
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from densitysteer.density.grid import Grid
from densitysteer.linear.brunovsky import gramian_closed_form, spd_inv_sqrt, transition_offset
from densitysteer.utils.errors import DomainError


logger = logging.getLogger(__name__)


def _check_kernel_args(s: float, t: float, eps: float) -> float:
    if t <= s:
        raise DomainError(f"核要求 t > s，收到 s={s}, t={t}")
    if eps <= 0:
        raise DomainError(f"ε 必须为正，收到 {eps}")
    return t - s


def log_brownian_kernel(s: float, zbar, t: float, z, eps: float) -> np.ndarray:
    """log κᴮ，对最后一维广播"""
    dt = _check_kernel_args(s, t, eps)
    zbar = np.asarray(zbar, dtype=float)
    z = np.asarray(z, dtype=float)
    n = z.shape[-1] if z.ndim else 1
    squared = np.sum(np.atleast_1d(zbar - z) ** 2, axis=-1) if z.ndim else (zbar - z) ** 2
    return -0.5 * n * np.log(4.0 * np.pi * dt * eps) - squared / (4.0 * eps * dt)


def brownian_kernel(s: float, zbar, t: float, z, eps: float, n: Optional[int] = None) -> float:
    """κᴮ(s, z̄, t, z) = (4π(t−s)ε)^{−n/2} exp(−‖z̄−z‖²/(4ε(t−s)))"""
    zbar = np.atleast_1d(np.asarray(zbar, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if n is not None and z.size != n:
        raise DomainError(f"点的维数 {z.size} 与 n={n} 不一致")
    return float(np.exp(log_brownian_kernel(s, zbar, t, z, eps)))


def _prior_geometry(n: int, s: float, t: float):
    dt = t - s
    scaled = gramian_closed_form(n, t, s).value / dt
    whitening = spd_inv_sqrt(scaled)
    phi = transition_offset(n, dt)
    return dt, scaled, whitening, phi


def prior_kernel(s: float, zbar, t: float, z, eps: float, n: int) -> float:
    """线性先验转移核 κ(s, z̄, t, z)"""
    _check_kernel_args(s, t, eps)
    dt, scaled, whitening, phi = _prior_geometry(n, s, t)
    zbar = np.atleast_1d(np.asarray(zbar, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    log_value = -0.5 * np.log(np.linalg.det(scaled)) + log_brownian_kernel(
        s, whitening @ phi @ zbar, t, whitening @ z, eps
    )
    return float(np.exp(log_value))


@dataclass
class KernelOperator:
    """
    网格上的核算子

    log_matrix[i, j] = log κ(s, 源节点 i, t, 目标节点 j)。各向同性高斯核保存为
    逐轴因子（Kronecker 结构），按轴依次作用；dense() 给出完整矩阵。
    """

    source_grid: Optional[Grid]
    target_grid: Optional[Grid]
    params: Dict[str, Any] = field(default_factory=dict)
    axis_factors: Optional[List[np.ndarray]] = None
    _log_matrix: Optional[np.ndarray] = None
    source_volume: float = 1.0
    target_volume: float = 1.0

    # ---------- 构造 ----------

    @classmethod
    def brownian(cls, grid: Grid, eps: float, s: float = 0.0, t: float = 1.0) -> "KernelOperator":
        dt = _check_kernel_args(s, t, eps)
        factors = []
        for axis in grid.axes:
            diff = axis[:, None] - axis[None, :]
            factors.append(-0.5 * np.log(4.0 * np.pi * dt * eps) - diff ** 2 / (4.0 * eps * dt))
        return cls(
            grid, grid, {"kind": "brownian", "eps": eps, "s": s, "t": t, "n": grid.dimension},
            axis_factors=factors, source_volume=grid.cell_volume, target_volume=grid.cell_volume,
        )

    @classmethod
    def gaussian_cost(cls, grid: Grid, eta: float) -> "KernelOperator":
        """exp(−‖ẑ₀−ẑ₁‖²/(2η))"""
        if eta <= 0:
            raise DomainError(f"η 必须为正，收到 {eta}")
        factors = [-((axis[:, None] - axis[None, :]) ** 2) / (2.0 * eta) for axis in grid.axes]
        return cls(
            grid, grid, {"kind": "gaussian_cost", "eta": eta, "n": grid.dimension},
            axis_factors=factors, source_volume=grid.cell_volume, target_volume=grid.cell_volume,
        )

    @classmethod
    def prior(
        cls,
        source_grid: Grid,
        target_grid: Grid,
        eps: float,
        s: float,
        t: float,
        normalize: Optional[str] = None,
    ) -> "KernelOperator":
        """
        线性先验核的稠密算子

        Args:
            normalize: None、"forward"（对每个目标节点，源积分为 1）或
                "backward"（对每个源节点，目标积分为 1）
        """
        _check_kernel_args(s, t, eps)
        n = source_grid.dimension
        dt, scaled, whitening, phi = _prior_geometry(n, s, t)
        src = source_grid.points() @ (whitening @ phi).T
        tgt = target_grid.points() @ whitening.T
        log_matrix = (
            -0.5 * np.log(np.linalg.det(scaled))
            - 0.5 * n * np.log(4.0 * np.pi * dt * eps)
            - cdist(src, tgt, "sqeuclidean") / (4.0 * eps * dt)
        )
        if normalize == "forward":
            log_matrix -= logsumexp(log_matrix, axis=0, keepdims=True) + np.log(source_grid.cell_volume)
        elif normalize == "backward":
            log_matrix -= logsumexp(log_matrix, axis=1, keepdims=True) + np.log(target_grid.cell_volume)
        elif normalize is not None:
            raise DomainError(f"未知的核归一化方式 {normalize!r}")
        return cls(
            source_grid, target_grid,
            {"kind": "prior", "eps": eps, "s": s, "t": t, "n": n, "normalize": normalize},
            _log_matrix=log_matrix,
            source_volume=source_grid.cell_volume, target_volume=target_grid.cell_volume,
        )

    # ---------- 访问 ----------

    @property
    def log_matrix(self) -> np.ndarray:
        if self._log_matrix is None:
            total = self.axis_factors[0]
            for factor in self.axis_factors[1:]:
                # (i…, j…) 的 Kronecker 和，行主序展开
                total = (total[:, None, :, None] + factor[None, :, None, :]).reshape(
                    total.shape[0] * factor.shape[0], total.shape[1] * factor.shape[1]
                )
            self._log_matrix = total
        return self._log_matrix

    def dense(self) -> np.ndarray:
        return np.exp(self.log_matrix)

    @property
    def source_shape(self):
        return self.source_grid.shape if self.source_grid is not None else (self.log_matrix.shape[0],)

    @property
    def target_shape(self):
        return self.target_grid.shape if self.target_grid is not None else (self.log_matrix.shape[1],)

    # ---------- 作用 ----------

    def _separable(self, log_values: np.ndarray, transpose: bool) -> np.ndarray:
        result = log_values
        for axis, factor in enumerate(self.axis_factors):
            matrix = factor.T if transpose else factor
            moved = np.moveaxis(result, axis, 0)
            rest = moved.shape[1:]
            flat = moved.reshape(moved.shape[0], -1)
            combined = logsumexp(matrix[:, :, None] + flat[None, :, :], axis=1)
            result = np.moveaxis(combined.reshape((matrix.shape[0],) + rest), 0, axis)
        return result

    def log_apply_backward(self, log_g: np.ndarray) -> np.ndarray:
        """log Σⱼ K[i,j] g_j Δ_tgt（对目标变量积分，得到源网格上的函数）"""
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.axis_factors is not None:
                out = self._separable(np.asarray(log_g).reshape(self.target_shape), transpose=False)
            else:
                out = logsumexp(self.log_matrix + np.asarray(log_g).ravel()[None, :], axis=1)
        return np.asarray(out).reshape(self.source_shape) + np.log(self.target_volume)

    def log_apply_forward(self, log_f: np.ndarray) -> np.ndarray:
        """log Σᵢ K[i,j] f_i Δ_src（对源变量积分，得到目标网格上的函数）"""
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.axis_factors is not None:
                out = self._separable(np.asarray(log_f).reshape(self.source_shape), transpose=True)
            else:
                out = logsumexp(self.log_matrix + np.asarray(log_f).ravel()[:, None], axis=0)
        return np.asarray(out).reshape(self.target_shape) + np.log(self.source_volume)

    def apply_backward(self, g: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.exp(self.log_apply_backward(np.log(np.asarray(g, dtype=float))))

    def apply_forward(self, f: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.exp(self.log_apply_forward(np.log(np.asarray(f, dtype=float))))


def chapman_kolmogorov_error(grid: Grid, eps: float, t: float, interior: float = 0.5) -> float:
    """
    离散 Chapman–Kolmogorov 检查：K(0→t)·K(t→1) 与 K(0→1) 的最大相对误差

    只比较位于网格中央 interior 比例区域内的源 / 目标节点，边界附近中间积分被截断。
    """
    k0t = KernelOperator.prior(grid, grid, eps, 0.0, t).dense()
    kt1 = KernelOperator.prior(grid, grid, eps, t, 1.0).dense()
    k01 = KernelOperator.prior(grid, grid, eps, 0.0, 1.0).dense()
    composed = k0t @ kt1 * grid.cell_volume
    centre = 0.5 * (grid.lower + grid.upper)
    half = 0.5 * interior * (grid.upper - grid.lower)
    mask = np.all(np.abs(grid.points() - centre) <= half, axis=1)
    error = np.abs(composed - k01)[np.ix_(mask, mask)]
    return float(error.max() / k01[np.ix_(mask, mask)].max())
