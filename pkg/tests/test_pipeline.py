# coding=utf-8
import numpy as np
import pytest

from densitysteer.bridge.pipeline import STAGE_FIXED_POINT, STAGE_PROPAGATION, SteeringProblem, steer_pipeline
from densitysteer.context import RunContext
from densitysteer.core.loader import load_builtin
from densitysteer.core.scenario import Scenario
from densitysteer.density.grid import Grid, l1_distance
from densitysteer.density.mixture import discretize
from densitysteer.geometry.maps import IdentityMap
from densitysteer.transport.interpolation import interpolate, transport_cost
from densitysteer.transport.potentials import QuadraticPotential
from densitysteer.utils.errors import ConfigurationError, PipelineStageError

from tests.conftest import gaussian_1d


SNAPSHOTS = tuple(np.round(np.linspace(0.0, 1.0, 21), 10))


def _problem(rho0, rho1, eps, **overrides):
    params = dict(
        tmap=IdentityMap(1),
        rho0=rho0,
        rho1=rho1,
        zgrid=rho0.grid,
        eps=eps,
        delta=1e-8,
        max_iter=20000,
        snapshots=SNAPSHOTS,
    )
    params.update(overrides)
    return SteeringProblem(**params)


@pytest.fixture(scope="module")
def solutions():
    grid = Grid.from_bounds([-4.0], [4.0], 401)
    rho0 = discretize(gaussian_1d(-1.0, 0.25), grid)
    rho1 = discretize(gaussian_1d(1.0, 0.25), grid)
    return {eps: steer_pipeline(_problem(rho0, rho1, eps)) for eps in (0.1, 0.01)}


def test_endpoints_are_reproduced(solutions):
    for solution in solutions.values():
        assert solution.endpoint_residuals["rho0"] <= 1e-3
        assert solution.endpoint_residuals["rho1"] <= 1e-3
        assert solution.times[0] == 0.0 and solution.times[-1] == 1.0
        assert len(solution.sigma) == len(SNAPSHOTS)


def test_snapshots_keep_unit_mass_without_renormalization(solutions):
    for solution in solutions.values():
        for sigma in solution.sigma:
            mass = sigma.provenance["pre_normalization_mass"]
            assert mass == pytest.approx(1.0, abs=1e-3)
            # 未归一化：保存的密度就是求积得到的密度
            assert sigma.total_mass() == pytest.approx(mass, rel=1e-12)
            assert np.all(sigma.values >= 0.0)


def test_midpoint_approaches_displacement_interpolation(solutions):
    """ε → 0 时 t=1/2 的密度趋于两端的位移插值 N(0, 0.25)"""
    grid = solutions[0.1].sigma[0].grid
    target = discretize(gaussian_1d(0.0, 0.25), grid)
    middle = SNAPSHOTS.index(0.5)
    coarse = l1_distance(solutions[0.1].sigma[middle], target)
    fine = l1_distance(solutions[0.01].sigma[middle], target)
    assert fine < coarse
    assert fine < 0.1


def test_control_cost_approaches_transport_cost(solutions):
    # 平移 2 的最小能量为 ½·2² = 2
    assert 1.8 <= solutions[0.01].control_cost() <= 2.5


def test_fokker_planck_residual_is_small(solutions):
    residual = solutions[0.01].fokker_planck_residual()
    assert residual["relative"] < 0.2


def test_diagnostics_cover_every_stage(solutions):
    diagnostics = solutions[0.1].diagnostics
    assert STAGE_FIXED_POINT in diagnostics
    assert diagnostics[STAGE_FIXED_POINT]["iterations"] >= 1
    assert solutions[0.1].to_dict()["epsilon"] == 0.1


def test_convergence_failure_carries_stage_label(shifted_gaussians):
    rho0, rho1 = shifted_gaussians
    with pytest.raises(PipelineStageError) as exc_info:
        steer_pipeline(_problem(rho0, rho1, 0.1, max_iter=1, delta=1e-12))
    assert exc_info.value.stage == STAGE_FIXED_POINT
    assert exc_info.value.exit_code == 3


def test_problem_validation(shifted_gaussians):
    rho0, rho1 = shifted_gaussians
    with pytest.raises(ConfigurationError):
        _problem(rho0, rho1, 0.0)
    with pytest.raises(ConfigurationError):
        _problem(rho0, rho1, 0.1, snapshots=(0.0, 0.5))


def test_reconstruction_routes_agree(shifted_gaussians):
    rho0, rho1 = shifted_gaussians
    snapshots = (0.0, 0.5, 1.0)
    coupled = steer_pipeline(_problem(rho0, rho1, 0.1, snapshots=snapshots))
    factored = steer_pipeline(_problem(rho0, rho1, 0.1, snapshots=snapshots, reconstruction="factors"))
    assert coupled.diagnostics[STAGE_PROPAGATION]["reconstruction"] == "coupling"
    assert "coupling" not in factored.diagnostics[STAGE_PROPAGATION]
    assert l1_distance(coupled.sigma[1], factored.sigma[1]) <= 2e-2
    # 端点两种方式都走因子路径
    assert l1_distance(coupled.sigma[0], factored.sigma[0]) <= 1e-12


def test_unknown_reconstruction_is_rejected(shifted_gaussians):
    rho0, rho1 = shifted_gaussians
    with pytest.raises(ConfigurationError) as exc_info:
        _problem(rho0, rho1, 0.1, reconstruction="spline")
    assert exc_info.value.field == "bridge.reconstruction"


def test_control_cost_decreases_towards_transport_cost(line_grid, shifted_gaussians):
    rho0, rho1 = shifted_gaussians
    levels = (0.05, 0.02, 0.01, 0.005)
    costs = [
        steer_pipeline(_problem(rho0, rho1, eps, anneal_from=0.1)).control_cost()
        for eps in levels
    ]
    for previous, current in zip(costs, costs[1:]):
        assert current <= 1.05 * previous
    reference = transport_cost(interpolate(QuadraticPotential([[1.0]], shift=[2.0]), 1), rho0)
    assert reference == pytest.approx(2.0, rel=1e-6)
    assert costs[-1] == pytest.approx(reference, rel=0.1)


@pytest.mark.slow
def test_builtin_van_der_pol_scenario():
    scenario = Scenario.from_config(load_builtin("example1"))
    solution = steer_pipeline(RunContext(scenario).build_problem())
    factors = solution.factors
    assert factors.total_iterations <= 5000
    assert max(factors.equation_residuals) <= 1e-8
    assert solution.endpoint_residuals["rho0"] <= 1e-3
    assert solution.endpoint_residuals["rho1"] <= 1e-3
    for sigma in solution.sigma:
        assert sigma.provenance["pre_normalization_mass"] == pytest.approx(1.0, abs=1e-3)


@pytest.mark.slow
def test_builtin_flat_system_scenario():
    scenario = Scenario.from_config(load_builtin("example2"))
    context = RunContext(scenario)
    solution = steer_pipeline(context.build_problem())
    assert solution.endpoint_residuals["rho0"] <= 5e-3
    assert solution.endpoint_residuals["rho1"] <= 5e-3
    # 全部质量留在 x₂ > −1
    assert np.all(context.xgrid.axes[1] > -1.0)
    for rho in solution.rho:
        assert rho.provenance["pre_normalization_mass"] == pytest.approx(1.0, abs=5e-3)
