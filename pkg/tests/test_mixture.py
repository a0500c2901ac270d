# coding=utf-8
import numpy as np
import pytest

from densitysteer.bridge.fixed_point import annealed_fixed_point, epsilon_schedule, fixed_point, recover_factors
from densitysteer.bridge.kernels import KernelOperator
from densitysteer.bridge.mixture import CouplingBridge, coupling_snapshot
from densitysteer.bridge.transient import transient
from densitysteer.density.grid import Grid, l1_distance, moments
from densitysteer.density.mixture import discretize
from densitysteer.utils.errors import DomainError

from tests.conftest import gaussian_1d


def _bridge(grid, mean0, mean1, variance, eps):
    sigma0 = discretize(gaussian_1d(mean0, variance), grid)
    sigma1 = discretize(gaussian_1d(mean1, variance), grid)
    factors = fixed_point(KernelOperator.brownian(grid, eps), sigma0, sigma1, delta=1e-10, max_iter=20000)
    return factors, CouplingBridge.from_factors(factors, 1, eps)


@pytest.fixture(scope="module")
def shifted():
    grid = Grid.from_bounds([-4.0], [4.0], 401)
    factors, bridge = _bridge(grid, -1.0, 1.0, 0.25, 0.05)
    return grid, factors, bridge


def test_coupling_carries_unit_mass(shifted):
    _, _, bridge = shifted
    assert bridge.mass == pytest.approx(1.0, abs=1e-6)
    assert bridge.dropped_mass < 1e-8
    assert bridge.diagnostics["pairs"] == bridge.weights.size


def test_equal_gaussians_bridge_variance():
    """N(0,s²) 到自身的桥：中点方差 = s²/2 + c/2 + ε/2，c 为端点协方差"""
    grid = Grid.from_bounds([-4.0], [4.0], 401)
    variance, eps = 0.25, 0.05
    _, bridge = _bridge(grid, 0.0, 0.0, variance, eps)
    noise = 2.0 * eps
    cross = 0.5 * (np.sqrt(4.0 * variance ** 2 + noise ** 2) - noise)
    expected = 0.5 * variance + 0.5 * cross + 0.25 * noise
    snapshot = coupling_snapshot(bridge, grid, 0.5)
    _, covariance = moments(snapshot.sigma)
    assert covariance[0, 0] == pytest.approx(expected, abs=5e-4)
    assert covariance[0, 0] > variance + 1e-3


def test_shifted_bridge_moves_at_unit_speed(shifted):
    grid, _, bridge = shifted
    for t in (0.25, 0.5, 0.75):
        snapshot = coupling_snapshot(bridge, grid, t)
        mean, _ = moments(snapshot.sigma)
        assert mean[0] == pytest.approx(-1.0 + 2.0 * t, abs=1e-3)
    # 平移对称：均值处控制等于平移速度 2
    assert bridge.control(np.array([[0.0]]), 0.5)[0] == pytest.approx(2.0, abs=1e-2)


def test_coupling_and_factor_routes_agree(shifted):
    grid, factors, bridge = shifted
    recovered = recover_factors(factors, 1, grid)
    for t in (0.2, 0.5, 0.8):
        by_factors = transient(recovered, t, 0.05)
        by_coupling = coupling_snapshot(bridge, grid, t)
        assert l1_distance(by_factors.sigma, by_coupling.sigma) <= 2e-2
        core = by_coupling.sigma.values > 0.05 * by_coupling.sigma.values.max()
        np.testing.assert_allclose(by_coupling.control[core], by_factors.control[core], atol=5e-2)


def test_log_factors_multiply_to_density(shifted):
    grid, _, bridge = shifted
    snapshot = coupling_snapshot(bridge, grid, 0.4)
    support = snapshot.sigma.values > 0.0
    np.testing.assert_allclose(
        np.exp(snapshot.log_h_hat + snapshot.log_h)[support], snapshot.sigma.values[support], rtol=1e-10
    )


def test_narrow_kernel_keeps_unit_mass():
    """核宽与网格间距相当时耦合重构仍守恒质量"""
    grid = Grid.from_bounds([-4.0], [4.0], 201)
    sigma0 = discretize(gaussian_1d(-1.0, 0.25), grid)
    sigma1 = discretize(gaussian_1d(1.0, 0.25), grid)
    factors = annealed_fixed_point(
        lambda level: KernelOperator.brownian(grid, level),
        sigma0, sigma1, epsilon_schedule(1e-3, 0.1),
        delta=1e-10, max_iter=20000,
    )
    bridge = CouplingBridge.from_factors(factors, 1, 1e-3)
    for t in (0.2, 0.5, 0.8):
        snapshot = coupling_snapshot(bridge, grid, t)
        assert snapshot.sigma.provenance["pre_normalization_mass"] == pytest.approx(1.0, abs=1e-3)
        mean, _ = moments(snapshot.sigma)
        assert mean[0] == pytest.approx(-1.0 + 2.0 * t, abs=1e-2)


def test_coupling_is_only_for_interior_times(shifted):
    grid, _, bridge = shifted
    for t in (0.0, 1.0):
        with pytest.raises(DomainError):
            coupling_snapshot(bridge, grid, t)


def test_grid_escape_is_reported_as_mass_drift(shifted):
    _, _, bridge = shifted
    narrow = Grid.from_bounds([-1.0], [0.0], 51)
    with pytest.raises(DomainError) as exc_info:
        coupling_snapshot(bridge, narrow, 0.5)
    assert exc_info.value.code == "MASS_DRIFT"
