# coding=utf-8
"""
高斯混合与网格离散化
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Sequence

import numpy as np
from scipy.stats import multivariate_normal

from densitysteer.density.grid import Grid, GridDensity, finalize_density
from densitysteer.utils.errors import DomainError, SupportCoverageError


logger = logging.getLogger(__name__)

MIN_COVERED_MASS = 0.9


def _as_covariance(value: Any, n: int) -> np.ndarray:
    """对角列表或完整矩阵均可"""
    array = np.asarray(value, dtype=float)
    if array.ndim == 1:
        return np.diag(array)
    return array.reshape(n, n)


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """高斯混合 Σ cᵢ N(μᵢ, Σᵢ)"""

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float).ravel()
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        n = means.shape[1]
        covariances = np.array([_as_covariance(c, n) for c in self.covariances])
        if len(weights) != len(means) or len(weights) != len(covariances):
            raise DomainError("混合分量的权重、均值、协方差数量不一致")
        if np.any(weights <= 0):
            raise DomainError(f"混合权重必须为正: {weights.tolist()}")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise DomainError(f"混合权重之和必须为 1，当前为 {weights.sum():.15f}")
        for index, cov in enumerate(covariances):
            if np.max(np.abs(cov - cov.T)) > 1e-12 or np.any(np.linalg.eigvalsh(cov) <= 0):
                raise DomainError(f"第 {index} 个协方差不是对称正定矩阵")
        for name, value in (("weights", weights), ("means", means), ("covariances", covariances)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def dimension(self) -> int:
        return self.means.shape[1]

    def pdf(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        total = np.zeros(len(points))
        for weight, mean, cov in zip(self.weights, self.means, self.covariances):
            total += weight * multivariate_normal(mean=mean, cov=cov).pdf(points).reshape(-1)
        return total

    def support_box(self, width: float = 4.0):
        """均值 ± width·σ 的包围盒"""
        sigmas = np.sqrt(np.array([np.diag(c) for c in self.covariances]))
        return (self.means - width * sigmas).min(axis=0), (self.means + width * sigmas).max(axis=0)

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> "GaussianMixture":
        return cls(
            weights=np.asarray(config["weights"], dtype=float),
            means=np.asarray(config["means"], dtype=float),
            covariances=[np.asarray(c, dtype=float) for c in config["covariances"]],
        )

    def to_dict(self) -> Dict[str, List]:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
        }


def discretize(
    mix: GaussianMixture,
    grid: Grid,
    renormalize: bool = True,
    mass_tolerance: float = 1e-3,
) -> GridDensity:
    """
    在网格节点上采样高斯混合

    Args:
        mix: 高斯混合
        grid: 网格
        renormalize: 是否归一化到单位质量（记录截断质量）

    Returns:
        GridDensity

    Raises:
        SupportCoverageError: 归一化前质量 < 0.9
    """
    if mix.dimension != grid.dimension:
        raise DomainError(f"混合维数 {mix.dimension} 与网格维数 {grid.dimension} 不一致")
    values = mix.pdf(grid.points()).reshape(grid.shape)
    mass = float(values.sum() * grid.cell_volume)
    if mass < MIN_COVERED_MASS:
        raise SupportCoverageError(f"grid does not cover support: 网格内质量仅 {mass:.4f}")
    return finalize_density(values, grid, renormalize, stage="discretize", mass_tolerance=mass_tolerance)
