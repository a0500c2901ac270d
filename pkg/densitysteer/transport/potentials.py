# coding=utf-8
"""
Brenier 势

MongeMap 由熵正则耦合的目标端因子构造凸势

    φ(x) = η log Σⱼ h₁ⱼ Δ exp((⟨x, yⱼ⟩ − ½‖yⱼ‖²)/η)

它在节点上的梯度恰为重心投影 T̂，并以软 c-变换光滑延拓到整个空间；
Hess φ = Cov_w(y)/η 半正定。QuadraticPotential 是高斯到高斯的精确仿射映射。
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np
from scipy.linalg import sqrtm
from scipy.special import logsumexp, softmax

from densitysteer.density.grid import Grid, GridDensity
from densitysteer.geometry.maps import newton_solve
from densitysteer.linear.brunovsky import spd_inv_sqrt, spd_sqrt
from densitysteer.utils.errors import DomainError, InverseMapError


logger = logging.getLogger(__name__)

EVALUATION_CHUNK = 2048


class BrenierPotential(ABC):
    """凸势 φ 及其梯度、Hessian 与共轭；所有方法接受 (m, n) 点阵"""

    dimension: int

    @abstractmethod
    def potential(self, x) -> np.ndarray:
        """φ(x)"""

    @abstractmethod
    def gradient(self, x) -> np.ndarray:
        """∇φ(x)"""

    @abstractmethod
    def hessian(self, x) -> np.ndarray:
        """Hess φ(x)，形状 (m, n, n)"""

    @abstractmethod
    def conjugate(self, y) -> np.ndarray:
        """φ*(y) = sup_x ⟨x,y⟩ − φ(x)"""

    @abstractmethod
    def conjugate_gradient(self, y) -> np.ndarray:
        """∇φ*(y) = (∇φ)⁻¹(y)"""


def _as_points(x, n: int) -> np.ndarray:
    return np.asarray(x, dtype=float).reshape(-1, n)


@dataclass(eq=False)
class MongeMap(BrenierPotential):
    """
    熵正则重心投影映射

    Attributes:
        grid: ẑ 网格（源与目标共享）
        log_target_weights: log h₁ⱼ（目标端因子）
        eta: 正则化参数 η
        node_map: 节点上的 T̂，支撑外为 nan
        mask: 源端支撑掩码
    """

    grid: Grid
    log_target_weights: np.ndarray
    eta: float
    node_map: np.ndarray
    mask: np.ndarray
    refine_conjugate: bool = True
    _node_potential: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.dimension = self.grid.dimension
        self._targets = self.grid.points()
        self._log_b = np.asarray(self.log_target_weights, dtype=float).ravel() + np.log(self.grid.cell_volume)
        self._half_norms = 0.5 * np.sum(self._targets ** 2, axis=1)

    def _logits(self, x: np.ndarray) -> np.ndarray:
        return self._log_b[None, :] + (x @ self._targets.T - self._half_norms[None, :]) / self.eta

    def _chunks(self, x: np.ndarray):
        for start in range(0, len(x), EVALUATION_CHUNK):
            yield x[start:start + EVALUATION_CHUNK]

    def potential(self, x) -> np.ndarray:
        x = _as_points(x, self.dimension)
        values = [self.eta * logsumexp(self._logits(chunk), axis=1) for chunk in self._chunks(x)]
        return np.concatenate(values)

    def gradient(self, x) -> np.ndarray:
        x = _as_points(x, self.dimension)
        parts = [softmax(self._logits(chunk), axis=1) @ self._targets for chunk in self._chunks(x)]
        return np.vstack(parts)

    def hessian(self, x) -> np.ndarray:
        x = _as_points(x, self.dimension)
        parts = []
        for chunk in self._chunks(x):
            weights = softmax(self._logits(chunk), axis=1)
            mean = weights @ self._targets
            second = np.einsum("mj,ja,jb->mab", weights, self._targets, self._targets)
            parts.append((second - mean[:, :, None] * mean[:, None, :]) / self.eta)
        return np.concatenate(parts, axis=0)

    @property
    def node_potential(self) -> np.ndarray:
        if self._node_potential is None:
            self._node_potential = self.potential(self.grid.points())
        return self._node_potential

    def _discrete_conjugate(self, y: np.ndarray):
        nodes = self.grid.points()
        scores = y @ nodes.T - self.node_potential[None, :]
        best = np.argmax(scores, axis=1)
        return scores[np.arange(len(y)), best], nodes[best]

    def _conjugate_points(self, y) -> np.ndarray:
        y = _as_points(y, self.dimension)
        values, argmax = self._discrete_conjugate(y)
        if not self.refine_conjugate:
            return argmax
        points = argmax.copy()
        for i, target in enumerate(y):
            try:
                points[i], _ = newton_solve(
                    lambda x: self.gradient(x)[0],
                    lambda x: self.hessian(x)[0],
                    target, argmax[i], tol=1e-10,
                )
            except InverseMapError:
                # y 超出 ∇φ 的值域：保留离散极大点
                pass
        return points

    def conjugate(self, y) -> np.ndarray:
        y = _as_points(y, self.dimension)
        points = self._conjugate_points(y)
        refined = np.sum(points * y, axis=1) - self.potential(points)
        discrete, _ = self._discrete_conjugate(y)
        return np.maximum(refined, discrete)

    def conjugate_gradient(self, y) -> np.ndarray:
        return self._conjugate_points(y)

    def to_dict(self) -> Dict[str, Any]:
        return {"eta": self.eta, "grid": self.grid.to_dict(), "masked_nodes": int(np.sum(~self.mask))}


class QuadraticPotential(BrenierPotential):
    """
    φ(x) = ½xᵀSx + cᵀx，S 对称正定

    gaussian() 给出 N(m₀,Σ₀) → N(m₁,Σ₁) 的精确 Brenier 映射。
    """

    def __init__(self, matrix, shift=None):
        self.matrix = np.asarray(matrix, dtype=float)
        self.dimension = self.matrix.shape[0]
        if np.max(np.abs(self.matrix - self.matrix.T)) > 1e-10 or np.any(np.linalg.eigvalsh(self.matrix) <= 0):
            raise DomainError("二次势的矩阵必须对称正定")
        self.shift = np.zeros(self.dimension) if shift is None else np.asarray(shift, dtype=float)
        self._inverse = np.linalg.inv(self.matrix)

    @classmethod
    def gaussian(cls, mean0, cov0, mean1, cov1) -> "QuadraticPotential":
        mean0 = np.atleast_1d(np.asarray(mean0, dtype=float))
        mean1 = np.atleast_1d(np.asarray(mean1, dtype=float))
        cov0 = np.atleast_2d(np.asarray(cov0, dtype=float))
        cov1 = np.atleast_2d(np.asarray(cov1, dtype=float))
        root = spd_sqrt(cov0)
        inv_root = spd_inv_sqrt(cov0)
        middle = np.real(sqrtm(root @ cov1 @ root))
        matrix = inv_root @ middle @ inv_root
        matrix = 0.5 * (matrix + matrix.T)
        return cls(matrix, mean1 - matrix @ mean0)

    def potential(self, x) -> np.ndarray:
        x = _as_points(x, self.dimension)
        return 0.5 * np.einsum("ma,ab,mb->m", x, self.matrix, x) + x @ self.shift

    def gradient(self, x) -> np.ndarray:
        return _as_points(x, self.dimension) @ self.matrix.T + self.shift

    def hessian(self, x) -> np.ndarray:
        x = _as_points(x, self.dimension)
        return np.broadcast_to(self.matrix, (len(x), self.dimension, self.dimension)).copy()

    def conjugate(self, y) -> np.ndarray:
        centred = _as_points(y, self.dimension) - self.shift
        return 0.5 * np.einsum("ma,ab,mb->m", centred, self._inverse, centred)

    def conjugate_gradient(self, y) -> np.ndarray:
        return (_as_points(y, self.dimension) - self.shift) @ self._inverse.T


@dataclass
class MongeAmpereReport:
    """Monge–Ampère 残差 det(Hess φ)·σ̂₁(∇φ) − σ̂₀"""

    residual: np.ndarray
    interior: np.ndarray
    rms: float

    def to_dict(self) -> Dict[str, Any]:
        return {"rms": self.rms, "interior_nodes": int(self.interior.sum())}


def monge_ampere_residual(potential: BrenierPotential, sigma_hat0: GridDensity, sigma_hat1: GridDensity) -> MongeAmpereReport:
    """
    Monge–Ampère 残差场（内部节点，边界留一层）

    Returns:
        MongeAmpereReport，rms 为按 σ̂₀ 质量加权的均方根
    """
    grid = sigma_hat0.grid
    interior = np.zeros(grid.shape, dtype=bool)
    interior[tuple(slice(1, -1) for _ in grid.shape)] = True
    points = grid.points()[interior.ravel()]
    dets = np.linalg.det(potential.hessian(points))
    transported = sigma_hat1.evaluate(potential.gradient(points))
    source = sigma_hat0.values[interior]
    residual = np.zeros(grid.shape)
    residual[interior] = dets * transported - source
    weights = source / source.sum()
    rms = float(np.sqrt(np.sum(weights * residual[interior] ** 2)))
    logger.debug(f"[Monge–Ampère] 加权 RMS 残差 {rms:.3e}")
    return MongeAmpereReport(residual=residual, interior=interior, rms=rms)
