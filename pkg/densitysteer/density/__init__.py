# coding=utf-8
"""
密度模块 - 网格、网格密度、高斯混合与坐标变换
"""

from densitysteer.density.grid import (
    Grid,
    GridDensity,
    covering_grid,
    deposit_points,
    finalize_density,
    l1_distance,
    moments,
    total_mass,
)
from densitysteer.density.mixture import GaussianMixture, discretize
from densitysteer.density.transform import (
    hat_marginals,
    pullback_to_x,
    pushforward_diffeo,
    unhat_marginals,
)

__all__ = [
    "Grid",
    "GridDensity",
    "covering_grid",
    "deposit_points",
    "finalize_density",
    "l1_distance",
    "moments",
    "total_mass",
    "GaussianMixture",
    "discretize",
    "hat_marginals",
    "pullback_to_x",
    "pushforward_diffeo",
    "unhat_marginals",
]
