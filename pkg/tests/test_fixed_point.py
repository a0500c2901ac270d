# coding=utf-8
import numpy as np
import pytest

from densitysteer.bridge.fixed_point import (
    annealed_fixed_point,
    epsilon_schedule,
    fixed_point,
    recover_factors,
)
from densitysteer.bridge.kernels import KernelOperator
from densitysteer.bridge.transient import transient
from densitysteer.density.grid import Grid
from densitysteer.density.mixture import discretize
from densitysteer.utils.errors import ConvergenceError, DomainError

from tests.conftest import gaussian_1d


@pytest.fixture(scope="module")
def hat_problem():
    grid = Grid.from_bounds([-4.0], [4.0], 201)
    sigma0 = discretize(gaussian_1d(-1.0, 0.25), grid)
    sigma1 = discretize(gaussian_1d(1.0, 0.25), grid)
    return grid, sigma0, sigma1


def test_fixed_point_solves_schrodinger_system(hat_problem):
    grid, sigma0, sigma1 = hat_problem
    kernel = KernelOperator.brownian(grid, 0.1)
    factors = fixed_point(kernel, sigma0, sigma1, delta=1e-10, max_iter=20000)
    assert factors.iterations < 20000
    assert max(factors.equation_residuals) <= 1e-9
    assert factors.residual_history[-1][0] <= 1e-10
    assert factors.to_dict()["iterations"] == factors.iterations

    # ĥ₀ (K h₁) 与 h₁ (Kᵀ ĥ₀) 分别重现两端边缘
    row = factors.h0_hat * kernel.apply_backward(factors.h1)
    column = factors.h1 * kernel.apply_forward(factors.h0_hat)
    support0 = sigma0.support_mask()
    support1 = sigma1.support_mask()
    np.testing.assert_allclose(row[support0], sigma0.values[support0], atol=1e-8)
    np.testing.assert_allclose(column[support1], sigma1.values[support1], atol=1e-8)


def test_bridge_density_is_gauge_invariant(hat_problem):
    grid, sigma0, sigma1 = hat_problem
    kernel = KernelOperator.brownian(grid, 0.1)
    base = fixed_point(kernel, sigma0, sigma1, delta=1e-10, max_iter=20000, init=1.0)
    scaled = fixed_point(kernel, sigma0, sigma1, delta=1e-10, max_iter=20000, init=5.0)
    support = sigma0.support_mask()
    shift = scaled.log_h0_hat[support] - base.log_h0_hat[support]
    assert shift.mean() == pytest.approx(np.log(5.0), abs=1e-8)
    for t in (0.0, 0.5, 1.0):
        a = transient(recover_factors(base, 1, grid), t, 0.1, renormalize=True).sigma.values
        b = transient(recover_factors(scaled, 1, grid), t, 0.1, renormalize=True).sigma.values
        np.testing.assert_allclose(a, b, rtol=0.0, atol=1e-12)


def test_standard_normal_bridge_keeps_unit_mass():
    grid = Grid.from_bounds([-6.0], [6.0], 241)
    sigma = discretize(gaussian_1d(0.0, 1.0), grid)
    factors = fixed_point(KernelOperator.brownian(grid, 0.5), sigma, sigma, delta=1e-10, max_iter=20000)
    assert max(factors.equation_residuals) <= 1e-8
    recovered = recover_factors(factors, 1, grid)
    for t in (0.0, 0.25, 0.5, 0.75, 1.0):
        snapshot = transient(recovered, t, 0.5)
        assert snapshot.sigma.provenance["pre_normalization_mass"] == pytest.approx(1.0, abs=1e-3)


def test_small_epsilon_factors_span_more_than_three_hundred_decades(hat_problem):
    grid, sigma0, sigma1 = hat_problem
    factors = annealed_fixed_point(
        lambda level: KernelOperator.brownian(grid, level),
        sigma0, sigma1, epsilon_schedule(1e-3, 0.1),
        delta=1e-10, max_iter=20000,
    )
    assert max(factors.equation_residuals) <= 1e-8
    support = sigma0.support_mask()
    assert np.ptp(factors.log_h0_hat[support]) > np.log(1e300)
    assert np.all(np.isfinite(factors.log_h0_hat[support]))
    assert np.all(np.isneginf(factors.log_h0_hat[~support]))
    assert factors.total_iterations > factors.iterations
    assert factors.to_dict()["epsilon_schedule"][-1] == 1e-3


def test_epsilon_schedule():
    assert epsilon_schedule(1e-3, None) == (1e-3,)
    assert epsilon_schedule(1e-3, 1e-4) == (1e-3,)
    levels = epsilon_schedule(1e-3, 0.05, factor=2.0)
    assert levels[0] == 0.05 and levels[-1] == 1e-3
    assert all(a > b for a, b in zip(levels, levels[1:]))
    with pytest.raises(DomainError):
        epsilon_schedule(1e-3, 0.05, factor=1.0)


def test_fixed_point_reports_history_on_failure(hat_problem):
    grid, sigma0, sigma1 = hat_problem
    kernel = KernelOperator.brownian(grid, 0.1)
    with pytest.raises(ConvergenceError) as exc_info:
        fixed_point(kernel, sigma0, sigma1, delta=1e-12, max_iter=1)
    assert len(exc_info.value.history) == 1
    assert exc_info.value.exit_code == 3


def test_fixed_point_raises_when_equations_are_not_met(hat_problem):
    grid, sigma0, sigma1 = hat_problem
    kernel = KernelOperator.brownian(grid, 0.1)
    # 变化量先于方程残差达标
    with pytest.raises(ConvergenceError) as exc_info:
        fixed_point(kernel, sigma0, sigma1, delta=1e-3, max_iter=20000, residual_tol=1e-14)
    assert "方程相对残差" in exc_info.value.message
    assert exc_info.value.history


def test_annealing_shares_one_iteration_budget(hat_problem):
    grid, sigma0, sigma1 = hat_problem
    with pytest.raises(ConvergenceError):
        annealed_fixed_point(
            lambda level: KernelOperator.brownian(grid, level),
            sigma0, sigma1, epsilon_schedule(1e-3, 0.1),
            delta=1e-10, max_iter=5,
        )


def test_fixed_point_rejects_nonpositive_init(hat_problem):
    grid, sigma0, sigma1 = hat_problem
    with pytest.raises(DomainError):
        fixed_point(KernelOperator.brownian(grid, 0.1), sigma0, sigma1, init=0.0)


def test_recovery_in_one_dimension_is_interpolation(hat_problem):
    grid, sigma0, sigma1 = hat_problem
    factors = fixed_point(KernelOperator.brownian(grid, 0.1), sigma0, sigma1, delta=1e-10, max_iter=20000)
    recovered = recover_factors(factors, 1, grid)
    assert recovered.clamped_nodes == 0
    assert recovered.endpoint_correction == (0.0, 0.0)
    np.testing.assert_allclose(recovered.log_h1, factors.log_h1, atol=1e-12)
    np.testing.assert_allclose(recovered.log_h0_hat, factors.log_h0_hat, atol=1e-12)


def test_endpoint_matching_reproduces_marginals(hat_problem):
    grid, sigma0, sigma1 = hat_problem
    factors = fixed_point(KernelOperator.brownian(grid, 0.1), sigma0, sigma1, delta=1e-10, max_iter=20000)
    recovered = recover_factors(factors, 1, grid, marginals=(sigma0, sigma1))
    # 一维时 ẑ 与 z 网格重合，校正只是舍入量级
    assert max(recovered.endpoint_correction) < 1e-8
    start = np.exp(recovered.log_h0_hat + recovered.log_h_at0)
    end = np.exp(recovered.log_h_hat_at1 + recovered.log_h1)
    support0, support1 = sigma0.support_mask(), sigma1.support_mask()
    np.testing.assert_allclose(start[support0], sigma0.values[support0], rtol=1e-12)
    np.testing.assert_allclose(end[support1], sigma1.values[support1], rtol=1e-12)
