# coding=utf-8
"""
耦合重构：用端点耦合与先验固定端点过程重建中间时刻

不动点因子给出 ẑ 网格上的静态耦合 π_ij = ĥ₀ᴮ_i κᴮ_ij h₁ᴮ_j Δ²，把两端映回 z 坐标
(z₀ = L₀⁻¹ẑ_i, z₁ = L₁⁻¹ẑ_j) 后，t 时刻的 σ_ε 是固定端点高斯的混合：

    均值 P(t)z₀ + Q(t)z₁，协方差 2ε S(t)

控制取闭式 v_ε(z,t) = bᵀΦ(1,t)ᵀM(1,t)⁻¹(E_w[z₁] − Φ(1,t)z)，权重 w_j ∝ h₁ᴮ_j κ(t,z,1,z₁ⱼ)，
即 2ε ∂_{z_n} log h 的解析形式。核比网格间距更窄时，这条路径仍然守恒质量。
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List

import numpy as np
from scipy.ndimage import convolve
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from densitysteer.bridge.fixed_point import BridgeFactors
from densitysteer.bridge.transient import NEGLIGIBLE_MASS, TransientSnapshot, snapshot_density
from densitysteer.density.grid import Grid, deposit_points
from densitysteer.linear.brunovsky import (
    HattingTransform,
    bridge_covariance,
    gramian_closed_form,
    gramian_solve,
    interp_matrices,
    spd_inv_sqrt,
    transition_offset,
)
from densitysteer.utils.errors import DomainError


logger = logging.getLogger(__name__)

DEFAULT_PRUNE = 1e-14
PAIR_CHUNK = 4_000_000
EVALUATION_CHUNK = 2048
STENCIL_RADIUS = 5.0


@dataclass
class CouplingBridge:
    """z 坐标下的端点耦合 {(z₀ₖ, z₁ₖ, πₖ)} 与目标端 log h₁ᴮ"""

    n: int
    eps: float
    starts: np.ndarray  # (K, n)
    ends: np.ndarray  # (K, n)
    weights: np.ndarray  # (K,)
    targets: np.ndarray  # (J, n)，h₁ᴮ 支撑节点的 z 坐标
    log_h1: np.ndarray  # (J,)
    dropped_mass: float = 0.0
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_factors(cls, factors: BridgeFactors, n: int, eps: float, prune: float = DEFAULT_PRUNE) -> "CouplingBridge":
        """
        由 ẑ 网格上的不动点因子构造耦合

        Args:
            factors: fixed_point / annealed_fixed_point 的结果（需带 ẑ 网格）
            n: 维数
            eps: 扩散强度 ε（与求解因子时的最后一级一致）
            prune: 丢弃质量低于该值的配对
        """
        if factors.grid is None:
            raise DomainError("耦合重构需要带 ẑ 网格的不动点因子")
        if eps <= 0:
            raise DomainError(f"ε 必须为正，收到 {eps}")
        grid = factors.grid
        hat = HattingTransform.for_dimension(n)
        points = grid.points()
        log_h0 = np.asarray(factors.log_h0_hat, dtype=float).ravel()
        log_h1 = np.asarray(factors.log_h1, dtype=float).ravel()
        sources = np.flatnonzero(np.isfinite(log_h0))
        targets = np.flatnonzero(np.isfinite(log_h1))
        if sources.size == 0 or targets.size == 0:
            raise DomainError("不动点因子的支撑为空")

        # log π = log ĥ₀ + log κᴮ + log h₁ + 2 log Δ
        offset = -0.5 * n * np.log(4.0 * np.pi * eps) + 2.0 * np.log(grid.cell_volume)
        rows = max(1, PAIR_CHUNK // targets.size)
        kept_i: List[np.ndarray] = []
        kept_j: List[np.ndarray] = []
        kept_w: List[np.ndarray] = []
        total = 0.0
        for start in range(0, sources.size, rows):
            block = sources[start:start + rows]
            log_pi = (
                log_h0[block][:, None] + log_h1[targets][None, :] + offset
                - cdist(points[block], points[targets], "sqeuclidean") / (4.0 * eps)
            )
            pi = np.exp(log_pi)
            total += float(pi.sum())
            i, j = np.nonzero(pi > prune)
            kept_i.append(block[i])
            kept_j.append(targets[j])
            kept_w.append(pi[i, j])
        index0 = np.concatenate(kept_i)
        index1 = np.concatenate(kept_j)
        weights = np.concatenate(kept_w)
        kept = float(weights.sum())

        inverse_source = np.linalg.inv(hat.source_map)
        inverse_target = hat.M10_sqrt
        bridge = cls(
            n=n,
            eps=float(eps),
            starts=points[index0] @ inverse_source.T,
            ends=points[index1] @ inverse_target.T,
            weights=weights,
            targets=points[targets] @ inverse_target.T,
            log_h1=log_h1[targets],
            dropped_mass=total - kept,
            diagnostics={"pairs": int(weights.size), "coupling_mass": total, "dropped_mass": total - kept},
        )
        logger.info(f"[耦合] 保留 {weights.size} 个端点配对，耦合质量 {total:.6f}，剪枝丢弃 {total - kept:.2e}")
        return bridge

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def means(self, t: float) -> np.ndarray:
        """各配对的固定端点均值 P(t)z₀ + Q(t)z₁"""
        P, Q = interp_matrices(self.n, t)
        return self.starts @ P.T + self.ends @ Q.T

    def density(self, zgrid: Grid, t: float) -> Dict[str, Any]:
        """
        t 时刻混合密度在 z 网格上的节点值

        均值按多线性散布落到网格上，再与协方差 2εS(t) + diag(h²)/12 的高斯模板卷积。

        Returns:
            {"values": 节点值, "lost_mass": 落到网格外的质量}
        """
        self._check_time(t)
        if zgrid.dimension != self.n:
            raise DomainError(f"z 网格维数 {zgrid.dimension} 与 n={self.n} 不一致")
        deposited, lost = deposit_points(self.means(t), self.weights, zgrid)
        covariance = 2.0 * self.eps * bridge_covariance(self.n, t) + np.diag(zgrid.spacing ** 2) / 12.0
        stencil = _gaussian_stencil(covariance, zgrid.spacing, zgrid.shape)
        before = float(deposited.sum())
        values = np.maximum(convolve(deposited, stencil, mode="constant", cval=0.0), 0.0)
        # 模板越过网格边界的部分
        lost += (before - float(values.sum())) * zgrid.cell_volume
        return {"values": values, "lost_mass": lost}

    def log_h(self, z: np.ndarray, t: float) -> np.ndarray:
        """log Σⱼ h₁ᴮ_j κ(t,z,1,z₁ⱼ)，差一个与 z 无关的常数"""
        logits = self._logits(np.atleast_2d(z), t)
        return np.concatenate([logsumexp(block, axis=1) for block in logits])

    def control(self, z: np.ndarray, t: float) -> np.ndarray:
        """闭式控制 v_ε(z,t)，z 为 (N, n) 点集"""
        self._check_time(t)
        z = np.atleast_2d(np.asarray(z, dtype=float))
        phi = transition_offset(self.n, 1.0 - t)
        gramian = gramian_closed_form(self.n, 1.0, t).value
        # bᵀΦᵀM⁻¹d = (M⁻¹Φb)·d
        gain = gramian_solve(gramian, phi[:, -1])
        result = np.empty(len(z))
        for start, logits in zip(range(0, len(z), EVALUATION_CHUNK), self._logits(z, t)):
            block = z[start:start + EVALUATION_CHUNK]
            weights = np.exp(logits - logsumexp(logits, axis=1, keepdims=True))
            expected = weights @ self.targets
            result[start:start + EVALUATION_CHUNK] = (expected - block @ phi.T) @ gain
        return result

    def _logits(self, z: np.ndarray, t: float) -> List[np.ndarray]:
        self._check_time(t)
        phi = transition_offset(self.n, 1.0 - t)
        gramian = gramian_closed_form(self.n, 1.0, t).value
        whitening = spd_inv_sqrt(gramian)
        log_norm = -0.5 * np.log(np.linalg.det(4.0 * np.pi * self.eps * gramian))
        targets = self.targets @ whitening.T
        blocks = []
        for start in range(0, len(z), EVALUATION_CHUNK):
            pushed = z[start:start + EVALUATION_CHUNK] @ (whitening @ phi).T
            blocks.append(self.log_h1[None, :] + log_norm - cdist(pushed, targets, "sqeuclidean") / (4.0 * self.eps))
        return blocks

    @staticmethod
    def _check_time(t: float) -> None:
        if not 0.0 < t < 1.0:
            raise DomainError(f"耦合重构只用于内部时刻 0 < t < 1，收到 {t}")


def _gaussian_stencil(covariance: np.ndarray, spacing: np.ndarray, shape) -> np.ndarray:
    """网格偏移上的归一化高斯权重（和为 1），各轴半径 5 个标准差"""
    deviation = np.sqrt(np.diag(covariance))
    radius = [
        int(min(np.ceil(STENCIL_RADIUS * d / h), size - 1))
        for d, h, size in zip(deviation, spacing, shape)
    ]
    offsets = np.array(list(itertools.product(*[np.arange(-r, r + 1) for r in radius]))) * spacing
    precision = np.linalg.inv(covariance)
    log_weights = -0.5 * np.einsum("ki,ij,kj->k", offsets, precision, offsets)
    weights = np.exp(log_weights - log_weights.max())
    return (weights / weights.sum()).reshape([2 * r + 1 for r in radius])


def coupling_snapshot(
    bridge: CouplingBridge,
    zgrid: Grid,
    t: float,
    renormalize: bool = False,
    mass_tolerance: float = 1e-3,
) -> TransientSnapshot:
    """
    用耦合重构内部时刻的 σ_ε 与 v_ε

    log_h 由闭式求和给出（差一个常数），log_h_hat = log σ_ε − log h，二者的积即 σ_ε。
    """
    evaluated = bridge.density(zgrid, t)
    values = evaluated["values"]
    sigma = snapshot_density(
        values, zgrid, t, renormalize, mass_tolerance,
        stage="coupling", lost_mass=evaluated["lost_mass"], pruned_mass=bridge.dropped_mass,
    )
    points = zgrid.points()
    log_h = bridge.log_h(points, t).reshape(zgrid.shape)
    with np.errstate(divide="ignore"):
        log_h_hat = np.log(sigma.values) - log_h
    control = bridge.control(points, t).reshape(zgrid.shape)
    peak = float(sigma.values.max())
    control = np.where(sigma.values > NEGLIGIBLE_MASS * max(peak, 1e-300), control, 0.0)
    return TransientSnapshot(t=float(t), log_h_hat=log_h_hat, log_h=log_h, sigma=sigma, control=control)
