# coding=utf-8
import numpy as np
import pytest
from numpy.testing import assert_allclose

from densitysteer.bridge.kernels import (
    KernelOperator,
    brownian_kernel,
    chapman_kolmogorov_error,
    log_brownian_kernel,
    prior_kernel,
)
from densitysteer.density.grid import Grid
from densitysteer.utils.errors import DomainError


def test_brownian_kernel_has_unit_mass():
    grid = Grid.from_bounds([-3.0, -3.0], [3.0, 3.0], 121)
    values = np.exp(log_brownian_kernel(0.0, [0.1, -0.2], 1.0, grid.points(), 0.05))
    assert values.sum() * grid.cell_volume == pytest.approx(1.0, abs=1e-8)


def test_prior_kernel_has_unit_mass():
    grid = Grid.from_bounds([-3.5, -3.5], [3.5, 3.5], 141)
    zbar = np.array([0.2, -0.3])
    values = np.array([prior_kernel(0.0, zbar, 1.0, z, 0.1, 2) for z in grid.points()])
    assert values.sum() * grid.cell_volume == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("s,t", [(0.0, 1.0), (0.2, 0.7), (0.5, 0.9)])
def test_prior_kernel_is_brownian_in_one_dimension(s, t):
    for zbar, z in [(0.0, 0.3), (-0.4, 0.1), (1.2, 1.0)]:
        assert prior_kernel(s, zbar, t, z, 0.05, 1) == pytest.approx(brownian_kernel(s, zbar, t, z, 0.05), rel=1e-12)


def test_prior_kernel_mean_follows_state_transition():
    """先验核的峰值位于 Φ(t,s)z̄"""
    zbar = np.array([0.5, 1.0])
    peak = prior_kernel(0.0, zbar, 1.0, [1.5, 1.0], 0.05, 2)
    off_peak = prior_kernel(0.0, zbar, 1.0, [1.4, 1.0], 0.05, 2)
    assert peak > off_peak


def test_kernel_argument_checks():
    with pytest.raises(DomainError):
        brownian_kernel(0.5, 0.0, 0.5, 0.0, 0.1)
    with pytest.raises(DomainError):
        brownian_kernel(0.0, 0.0, 1.0, 0.0, 0.0)
    with pytest.raises(DomainError):
        brownian_kernel(0.0, [0.0, 0.0], 1.0, [0.0, 0.0], 0.1, n=3)


@pytest.mark.parametrize("factory", [
    lambda grid: KernelOperator.brownian(grid, 0.05),
    lambda grid: KernelOperator.gaussian_cost(grid, 0.2),
])
def test_separable_application_matches_dense(factory, rng):
    grid = Grid.from_bounds([-1.0, -0.5], [1.0, 1.5], [11, 9])
    operator = factory(grid)
    dense = operator.dense()
    assert dense.shape == (99, 99)
    g = rng.uniform(0.1, 1.0, size=grid.shape)
    f = rng.uniform(0.1, 1.0, size=grid.shape)
    expected_backward = (dense @ g.ravel() * grid.cell_volume).reshape(grid.shape)
    expected_forward = (dense.T @ f.ravel() * grid.cell_volume).reshape(grid.shape)
    assert_allclose(operator.apply_backward(g), expected_backward, rtol=1e-10)
    assert_allclose(operator.apply_forward(f), expected_forward, rtol=1e-10)


def test_prior_operator_normalization():
    grid = Grid.from_bounds([-1.0, -1.0], [1.0, 1.0], 15)
    backward = KernelOperator.prior(grid, grid, 0.05, 0.0, 0.5, normalize="backward")
    forward = KernelOperator.prior(grid, grid, 0.05, 0.0, 0.5, normalize="forward")
    assert_allclose(backward.dense().sum(axis=1) * grid.cell_volume, 1.0, rtol=1e-10)
    assert_allclose(forward.dense().sum(axis=0) * grid.cell_volume, 1.0, rtol=1e-10)
    with pytest.raises(DomainError):
        KernelOperator.prior(grid, grid, 0.05, 0.0, 0.5, normalize="both")


def test_log_application_handles_zero_entries():
    grid = Grid.from_bounds([-1.0], [1.0], 21)
    operator = KernelOperator.brownian(grid, 0.01)
    g = np.zeros(grid.shape)
    g[10] = 1.0
    out = operator.apply_backward(g)
    assert np.all(np.isfinite(out))
    assert out[10] == pytest.approx(operator.dense()[10, 10] * grid.cell_volume)


def test_chapman_kolmogorov_in_one_dimension():
    grid = Grid.from_bounds([-3.0], [3.0], 121)
    assert chapman_kolmogorov_error(grid, 0.05, 0.4) < 1e-6


def test_prior_kernel_covariance_on_short_interval():
    """t−s = 0.5 时转移密度为 N(Φ(t,s)z̄, 2εM(t,s))，区间长度只计一次"""
    s, t, eps = 0.3, 0.8, 0.1
    source = Grid.from_bounds([0.2, -0.3], [0.3, -0.2], 2)
    target = Grid.from_bounds([-0.45, -2.3], [0.55, 1.7], 201)
    operator = KernelOperator.prior(source, target, eps, s, t)
    weights = np.exp(operator.log_matrix[0]) * target.cell_volume
    assert weights.sum() == pytest.approx(1.0, abs=1e-6)
    points = target.points()
    mean = weights @ points
    assert_allclose(mean, [0.2 - 0.5 * 0.3, -0.3], atol=1e-6)
    centered = points - mean
    covariance = (centered * weights[:, None]).T @ centered
    expected = 2.0 * eps * np.array([[0.5 ** 3 / 3.0, 0.5 ** 2 / 2.0], [0.5 ** 2 / 2.0, 0.5]])
    assert_allclose(covariance, expected, rtol=1e-3)
