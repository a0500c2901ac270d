# coding=utf-8
"""测试共用夹具"""

import numpy as np
import pytest

from densitysteer.density.grid import Grid
from densitysteer.density.mixture import GaussianMixture, discretize
from densitysteer.transport.potentials import QuadraticPotential


def gaussian_1d(mean: float, variance: float) -> GaussianMixture:
    return GaussianMixture(weights=[1.0], means=[[mean]], covariances=[[[variance]]])


@pytest.fixture
def line_grid() -> Grid:
    return Grid.from_bounds([-4.0], [4.0], 401)


@pytest.fixture
def shifted_gaussians(line_grid):
    """N(−1, 0.25) → N(1, 0.25) 的一维端点密度"""
    rho0 = discretize(gaussian_1d(-1.0, 0.25), line_grid)
    rho1 = discretize(gaussian_1d(1.0, 0.25), line_grid)
    return rho0, rho1


@pytest.fixture
def plane_grid() -> Grid:
    return Grid.from_bounds([-2.0, -2.0], [2.0, 2.0], 81)


@pytest.fixture
def convex_quadratic() -> QuadraticPotential:
    """Hess φ ≻ I 的二次势，使 ψ̃₀ 凸"""
    return QuadraticPotential([[1.5, 0.2], [0.2, 1.3]], shift=[0.1, -0.2])


@pytest.fixture
def rng():
    return np.random.default_rng(0)
