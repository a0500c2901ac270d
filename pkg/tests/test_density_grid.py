# coding=utf-8
import numpy as np
import pytest
from numpy.testing import assert_allclose

from densitysteer.density.grid import Grid, GridDensity, covering_grid, l1_distance, moments
from densitysteer.density.mixture import GaussianMixture, discretize
from densitysteer.density.transform import hat_marginals, pullback_to_x, pushforward_diffeo, unhat_marginals
from densitysteer.geometry.maps import IdentityMap, LinearMap
from densitysteer.utils.errors import DomainError, GridMismatchError, SupportCoverageError

from tests.conftest import gaussian_1d


def test_grid_points_are_row_major():
    grid = Grid.from_bounds([0.0, 10.0], [1.0, 12.0], [2, 3])
    assert grid.shape == (2, 3)
    assert_allclose(grid.points()[:3], [[0.0, 10.0], [0.0, 11.0], [0.0, 12.0]])
    assert grid.cell_volume == pytest.approx(1.0)


def test_grid_rejects_bad_axes():
    with pytest.raises(DomainError):
        Grid((np.array([0.0, 0.1, 0.5]),))
    with pytest.raises(DomainError):
        Grid((np.array([0.0]),))
    with pytest.raises(DomainError):
        Grid.from_bounds([0.0, 0.0], [1.0], 5)


def test_interpolation_is_exact_for_linear_functions():
    grid = Grid.from_bounds([-1.0, -1.0], [1.0, 1.0], 11)
    values = (grid.points() @ np.array([2.0, -1.0]) + 0.5).reshape(grid.shape)
    samples = np.array([[0.13, -0.42], [0.9, 0.95]])
    assert_allclose(grid.interpolate(values, samples), samples @ np.array([2.0, -1.0]) + 0.5, atol=1e-12)
    assert grid.interpolate(values, [[3.0, 0.0]])[0] == 0.0


def test_grid_density_validation():
    grid = Grid.from_bounds([0.0], [1.0], 11)
    with pytest.raises(DomainError):
        GridDensity(grid, -np.ones(11))
    with pytest.raises(DomainError):
        GridDensity(grid, 2.0 * np.ones(11))
    relaxed = GridDensity(grid, 2.0 * np.ones(11), check_mass=False)
    assert relaxed.normalized().total_mass() == pytest.approx(1.0)


def test_l1_distance_requires_same_grid():
    a = discretize(gaussian_1d(0.0, 1.0), Grid.from_bounds([-6.0], [6.0], 121))
    b = discretize(gaussian_1d(0.0, 1.0), Grid.from_bounds([-6.0], [6.0], 241))
    assert l1_distance(a, a) == 0.0
    with pytest.raises(GridMismatchError):
        l1_distance(a, b)


def test_discretized_moments():
    rho = discretize(gaussian_1d(0.0, 1.0), Grid.from_bounds([-6.0], [6.0], 241))
    mean, cov = moments(rho)
    assert mean[0] == pytest.approx(0.0, abs=1e-10)
    assert cov[0, 0] == pytest.approx(1.0, abs=1e-4)
    assert rho.total_mass() == pytest.approx(1.0)


def test_discretize_reports_uncovered_support():
    with pytest.raises(SupportCoverageError):
        discretize(gaussian_1d(5.0, 0.1), Grid.from_bounds([-1.0], [1.0], 51))


def test_mixture_weight_validation():
    with pytest.raises(DomainError):
        GaussianMixture(weights=[0.5, 0.4], means=[[0.0], [1.0]], covariances=[[1.0], [1.0]])
    with pytest.raises(DomainError):
        GaussianMixture(weights=[1.0], means=[[0.0]], covariances=[[[-1.0]]])


def test_pushforward_by_linear_map_scales_variance():
    rho = discretize(gaussian_1d(0.0, 1.0), Grid.from_bounds([-6.0], [6.0], 241))
    zgrid = Grid.from_bounds([-12.0], [12.0], 481)
    sigma = pushforward_diffeo(rho, LinearMap([[2.0]]), zgrid)
    _, cov = moments(sigma)
    assert cov[0, 0] == pytest.approx(4.0, abs=1e-2)

    back = pullback_to_x(sigma, LinearMap([[2.0]]), rho.grid)
    assert l1_distance(back, rho) < 1e-2


def test_identity_pushforward_keeps_density(line_grid, shifted_gaussians):
    rho0, _ = shifted_gaussians
    sigma = pushforward_diffeo(rho0, IdentityMap(1), line_grid)
    assert l1_distance(sigma, rho0) < 1e-10


def test_hatting_preserves_mass_and_round_trips(plane_grid):
    sigma0 = discretize(
        GaussianMixture(weights=[1.0], means=[[-0.5, 0.0]], covariances=[[0.2, 0.2]]), plane_grid
    )
    sigma1 = discretize(
        GaussianMixture(weights=[1.0], means=[[0.5, 0.0]], covariances=[[0.2, 0.2]]), plane_grid
    )
    hat0, hat1 = hat_marginals(sigma0, sigma1, 2, nodes=321)
    assert hat0.grid.same_as(hat1.grid)
    assert hat0.provenance["pre_normalization_mass"] == pytest.approx(1.0, abs=2e-2)
    assert hat1.provenance["pre_normalization_mass"] == pytest.approx(1.0, abs=2e-2)

    back0, back1 = unhat_marginals(hat0, hat1, 2, plane_grid)
    assert l1_distance(back0, sigma0) < 5e-2
    assert l1_distance(back1, sigma1) < 5e-2


def test_hatting_detects_escaping_support(plane_grid):
    sigma = discretize(GaussianMixture(weights=[1.0], means=[[0.0, 0.0]], covariances=[[0.1, 0.1]]), plane_grid)
    tiny = Grid.from_bounds([-0.1, -0.1], [0.1, 0.1], 11)
    with pytest.raises(SupportCoverageError):
        hat_marginals(sigma, sigma, 2, hat_grid=tiny)


def test_covering_grid_pads_bounding_box():
    grid = covering_grid(np.array([[0.0, 0.0], [1.0, 2.0]]), 5, pad=0.1)
    assert_allclose(grid.lower, [-0.1, -0.2])
    assert_allclose(grid.upper, [1.1, 2.2])
