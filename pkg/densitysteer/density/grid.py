# coding=utf-8
"""
矩形网格与网格密度

密度按节点采样，积分使用 Riemann（单元体积）求积；离网求值使用多线性插值，
网格外取零。
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from densitysteer.utils.errors import DomainError, GridMismatchError


logger = logging.getLogger(__name__)

DEFAULT_MASS_TOLERANCE = 1e-3


@dataclass(frozen=True, eq=False)
class Grid:
    """各轴均匀的矩形网格"""

    axes: Tuple[np.ndarray, ...]

    def __post_init__(self):
        frozen_axes = []
        for index, axis in enumerate(self.axes):
            axis = np.array(axis, dtype=float).ravel()
            if axis.size < 2:
                raise DomainError(f"网格第 {index} 轴至少需要 2 个节点")
            steps = np.diff(axis)
            if np.any(steps <= 0):
                raise DomainError(f"网格第 {index} 轴节点必须严格递增")
            span = max(1.0, abs(axis[-1] - axis[0]))
            if np.max(np.abs(steps - steps.mean())) > 1e-12 * span * axis.size:
                raise DomainError(f"网格第 {index} 轴间距不均匀")
            axis.setflags(write=False)
            frozen_axes.append(axis)
        object.__setattr__(self, "axes", tuple(frozen_axes))

    @classmethod
    def from_bounds(cls, lower: Sequence[float], upper: Sequence[float], nodes: Union[int, Sequence[int]]) -> "Grid":
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        counts = [int(nodes)] * len(lower) if np.isscalar(nodes) else [int(c) for c in nodes]
        if not (len(lower) == len(upper) == len(counts)):
            raise DomainError("网格上下界与节点数的维数不一致")
        return cls(tuple(np.linspace(lo, hi, c) for lo, hi, c in zip(lower, upper, counts)))

    @property
    def dimension(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(axis.size for axis in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def spacing(self) -> np.ndarray:
        return np.array([(axis[-1] - axis[0]) / (axis.size - 1) for axis in self.axes])

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def lower(self) -> np.ndarray:
        return np.array([axis[0] for axis in self.axes])

    @property
    def upper(self) -> np.ndarray:
        return np.array([axis[-1] for axis in self.axes])

    @property
    def key(self) -> Tuple:
        """用于缓存与一致性比较的指纹"""
        return tuple((round(float(a[0]), 14), round(float(a[-1]), 14), a.size) for a in self.axes)

    def same_as(self, other: "Grid") -> bool:
        return self.key == other.key

    def points(self) -> np.ndarray:
        """全部节点 (N, n)，行主序"""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1).reshape(-1, self.dimension)

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        return np.all((points >= self.lower - 1e-12) & (points <= self.upper + 1e-12), axis=1)

    def clamp(self, points: np.ndarray) -> np.ndarray:
        return np.clip(np.atleast_2d(points), self.lower, self.upper)

    def interpolate(self, values: np.ndarray, points: np.ndarray, fill_value: Optional[float] = 0.0) -> np.ndarray:
        """多线性插值；fill_value=None 时先把点夹到网格内"""
        values = np.asarray(values, dtype=float).reshape(self.shape)
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if fill_value is None:
            points = self.clamp(points)
            fill_value = np.nan
        interpolator = RegularGridInterpolator(self.axes, values, method="linear", bounds_error=False, fill_value=fill_value)
        return interpolator(points)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "dimension": self.dimension,
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "nodes": list(self.shape),
        }


def covering_grid(points: np.ndarray, nodes: Union[int, Sequence[int]], pad: float = 0.1) -> Grid:
    """覆盖给定点集的包围盒网格，每侧按跨度比例外扩"""
    points = np.atleast_2d(points)
    lower = points.min(axis=0)
    upper = points.max(axis=0)
    span = np.where(upper - lower > 0, upper - lower, 1.0)
    return Grid.from_bounds(lower - pad * span, upper + pad * span, nodes)


@dataclass(frozen=True, eq=False)
class GridDensity:
    """网格上的非负密度"""

    grid: Grid
    values: np.ndarray
    provenance: Dict[str, Any] = field(default_factory=dict)
    mass_tolerance: float = DEFAULT_MASS_TOLERANCE
    check_mass: bool = True

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise DomainError("密度包含非有限值")
        peak = float(np.max(np.abs(values))) if values.size else 0.0
        if np.any(values < -1e-12 * max(peak, 1.0)):
            raise DomainError(f"密度出现负值 (最小值 {values.min():.3e})")
        values = np.maximum(values, 0.0)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.check_mass:
            mass = self.total_mass()
            if abs(mass - 1.0) > self.mass_tolerance:
                raise DomainError(f"密度质量 {mass:.6f} 超出 1 ± {self.mass_tolerance}")

    def total_mass(self) -> float:
        return float(self.values.sum() * self.grid.cell_volume)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """离网求值（多线性插值，网格外为零）"""
        return np.maximum(self.grid.interpolate(self.values, points, fill_value=0.0), 0.0)

    def normalized(self) -> "GridDensity":
        return GridDensity(self.grid, self.values / self.total_mass(), dict(self.provenance), self.mass_tolerance)

    def support_mask(self, floor: float = 1e-12) -> np.ndarray:
        peak = float(self.values.max())
        return self.values > floor * peak


def total_mass(a: GridDensity) -> float:
    """Σ a · cellvol"""
    return a.total_mass()


def l1_distance(a: GridDensity, b: GridDensity) -> float:
    """Σ |a − b| · cellvol"""
    if not a.grid.same_as(b.grid):
        raise GridMismatchError()
    return float(np.abs(a.values - b.values).sum() * a.grid.cell_volume)


def deposit_points(points: np.ndarray, masses: np.ndarray, grid: Grid) -> Tuple[np.ndarray, float]:
    """多线性散布（插值的伴随），返回网格密度与落在网格外的质量"""
    shape = np.array(grid.shape)
    position = (np.atleast_2d(points) - grid.lower) / grid.spacing
    inside = np.all((position >= -1e-9) & (position <= shape - 1 + 1e-9), axis=1)
    base = np.clip(np.floor(position).astype(int), 0, shape - 2)
    fraction = np.clip(position - base, 0.0, 1.0)
    deposited = np.zeros(grid.shape)
    kept = masses * inside
    for corner in itertools.product((0, 1), repeat=grid.dimension):
        corner = np.array(corner)
        weights = np.prod(np.where(corner == 1, fraction, 1.0 - fraction), axis=1) * kept
        np.add.at(deposited, tuple((base + corner).T), weights)
    return deposited / grid.cell_volume, float(masses[~inside].sum())


def moments(density: GridDensity) -> Tuple[np.ndarray, np.ndarray]:
    """求积得到的均值与协方差"""
    points = density.grid.points()
    weights = density.values.ravel() * density.grid.cell_volume
    weights = weights / weights.sum()
    mean = weights @ points
    centered = points - mean
    covariance = (centered * weights[:, None]).T @ centered
    return mean, covariance


def finalize_density(
    values: np.ndarray,
    grid: Grid,
    renormalize: bool,
    stage: str,
    mass_tolerance: float = DEFAULT_MASS_TOLERANCE,
    **diagnostics: Any,
) -> GridDensity:
    """按需归一化并记录被丢弃的质量"""
    values = np.maximum(np.asarray(values, dtype=float).reshape(grid.shape), 0.0)
    mass = float(values.sum() * grid.cell_volume)
    provenance = {"stage": stage, "pre_normalization_mass": mass, "discarded_mass": 1.0 - mass}
    provenance.update(diagnostics)
    if renormalize:
        if mass <= 0.0:
            raise DomainError(f"[{stage}] 密度总质量为零，无法归一化")
        if abs(1.0 - mass) > mass_tolerance:
            logger.warning(f"[{stage}] 归一化前质量 {mass:.6f}，丢弃质量 {1.0 - mass:.3e}")
        values = values / mass
    return GridDensity(grid, values, provenance, mass_tolerance, check_mass=renormalize)
