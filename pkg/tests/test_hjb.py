# coding=utf-8
import numpy as np
import pytest
from numpy.testing import assert_allclose

from densitysteer.density.grid import Grid
from densitysteer.geometry.systems import get_builtin_system
from densitysteer.hjb.closed_form import (
    ValueFunction,
    hjb_residual,
    optimal_control_from_psi,
    psi_characteristic,
    riccati_oracle,
    solve_z0,
    value_lattice,
)
from densitysteer.hjb.envelopes import (
    convexity_margin,
    discrete_conjugate,
    dual_grid_for,
    lower_envelope,
    upper_envelope,
)
from densitysteer.hjb.hamiltonian import HamiltonianSpec
from densitysteer.hjb.strips import integrate_strip
from densitysteer.linear.brunovsky import HattingTransform
from densitysteer.transport.interpolation import ValueBoundary, interpolate
from densitysteer.transport.potentials import BrenierPotential, QuadraticPotential
from densitysteer.utils.errors import DomainError, SingularityError, SpectralConditionError


TIMES = np.linspace(0.0, 1.0, 5)


def _riccati_for(potential: QuadraticPotential, n: int, times):
    """ψ̃₀(z) = ½zᵀRᵀ(S − I)Rz + cᵀRz"""
    R = HattingTransform.for_dimension(n).source_map
    return riccati_oracle(R.T @ (potential.matrix - np.eye(n)) @ R, R.T @ potential.shift, 0.0, n, times)


class ConcavePotential(BrenierPotential):
    """φ(x) = −½‖x‖²，用于触发谱条件失败"""

    def __init__(self, n: int):
        self.dimension = n

    def potential(self, x):
        x = np.asarray(x, dtype=float).reshape(-1, self.dimension)
        return -0.5 * np.sum(x ** 2, axis=1)

    def gradient(self, x):
        return -np.asarray(x, dtype=float).reshape(-1, self.dimension)

    def hessian(self, x):
        x = np.asarray(x, dtype=float).reshape(-1, self.dimension)
        return np.broadcast_to(-np.eye(self.dimension), (len(x), self.dimension, self.dimension)).copy()

    def conjugate(self, y):
        raise NotImplementedError

    def conjugate_gradient(self, y):
        raise NotImplementedError


# ==================== Hamiltonian 与特征线 ====================


def test_linear_hamiltonian(rng):
    spec = HamiltonianSpec.linear(3)
    for _ in range(5):
        z, zeta = rng.normal(size=3), rng.normal(size=3)
        expected = z[1] * zeta[0] + z[2] * zeta[1] + 0.5 * zeta[2] ** 2
        assert spec.hamiltonian(z, zeta) == pytest.approx(expected, rel=1e-12)
    points, costates = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
    expected = [spec.hamiltonian(z, zeta) for z, zeta in zip(points, costates)]
    assert_allclose(spec.hamiltonian_field(points, costates), expected, rtol=1e-12)


def test_linear_lagrangian():
    spec = HamiltonianSpec.linear(2)
    z = np.array([0.3, -0.4])
    assert spec.lagrangian(z, [-0.4, 1.2]) == pytest.approx(0.72)
    assert spec.lagrangian(z, [0.0, 1.2]) == float("inf")


def test_strip_in_one_dimension_is_a_straight_line():
    strip = integrate_strip(HamiltonianSpec.linear(1), [0.2], [0.7], psi0=1.5, steps=10)
    assert strip.z[-1, 0] == pytest.approx(0.9, abs=1e-12)
    assert strip.psi[-1] == pytest.approx(1.5 + 0.5 * 0.7 ** 2, abs=1e-12)
    assert strip.to_dict()["steps"] == 10


def test_strip_for_double_integrator_matches_cubic():
    z0, zeta0 = np.array([0.1, -0.3]), np.array([0.8, 0.5])
    strip = integrate_strip(HamiltonianSpec.linear(2), z0, zeta0, psi0=0.0, steps=20)
    for t, z, zeta, psi in zip(strip.times, strip.z, strip.zeta, strip.psi):
        push = zeta0[1] - zeta0[0] * t
        assert_allclose(zeta, [zeta0[0], push], atol=1e-12)
        velocity = z0[1] + zeta0[1] * t - zeta0[0] * t ** 2 / 2
        position = z0[0] + z0[1] * t + zeta0[1] * t ** 2 / 2 - zeta0[0] * t ** 3 / 6
        assert_allclose(z, [position, velocity], atol=1e-12)
        energy = 0.5 * (zeta0[1] ** 2 * t - zeta0[1] * zeta0[0] * t ** 2 + zeta0[0] ** 2 * t ** 3 / 3)
        assert psi == pytest.approx(energy, abs=1e-12)


def test_hamiltonian_is_constant_along_linear_strip():
    spec = HamiltonianSpec.linear(3)
    strip = integrate_strip(spec, [0.1, 0.2, -0.1], [0.3, -0.2, 0.4], psi0=0.0, steps=50)
    path = strip.hamiltonian_path(spec)
    assert np.ptp(path) < 1e-10
    assert path[0] == pytest.approx(-strip.theta[0])


@pytest.mark.slow
def test_hamiltonian_is_conserved_for_flat_system():
    builtin = get_builtin_system("flat3d")
    tuple_ = builtin.build()
    spec = HamiltonianSpec.from_tuple(tuple_, guess=builtin.reference_point)
    z0 = tuple_.forward(np.array([0.1, 0.2, 0.1]))
    strip = integrate_strip(spec, z0, [0.1, -0.1, 0.2], psi0=0.0, steps=20, t_final=0.3)
    path = strip.hamiltonian_path(spec)
    assert np.ptp(path) < 1e-4


def test_singular_feedback_is_reported():
    spec = HamiltonianSpec(n=2, alpha=lambda z: 0.0, beta=lambda z: 1e-10)
    with pytest.raises(SingularityError):
        spec.feedback(np.zeros(2))
    with pytest.raises(SingularityError):
        integrate_strip(spec, [0.0, 0.0], [1.0, 1.0], psi0=0.0, steps=2)


# ==================== 包络 ====================


@pytest.fixture(scope="module")
def parabola():
    grid = Grid.from_bounds([-4.0], [4.0], 801)
    return grid, 0.5 * grid.axes[0] ** 2


@pytest.mark.parametrize("t", [0.25, 0.5, 1.0])
def test_upper_envelope_is_hopf_lax(parabola, t):
    grid, psi0 = parabola
    z = np.linspace(-2.0, 2.0, 9)[:, None]
    expected = z[:, 0] ** 2 / (2.0 * (1.0 + t))
    assert_allclose(upper_envelope(psi0, grid, z, t), expected, atol=1e-3)


@pytest.mark.parametrize("t", [0.25, 1.0])
def test_lower_envelope_agrees_for_convex_data(parabola, t):
    grid, psi0 = parabola
    z = np.linspace(-2.0, 2.0, 9)[:, None]
    expected = z[:, 0] ** 2 / (2.0 * (1.0 + t))
    assert_allclose(lower_envelope(psi0, grid, z, t), expected, atol=1e-3)


def test_discrete_conjugate_of_parabola(parabola):
    grid, psi0 = parabola
    dual = dual_grid_for(psi0, grid)
    assert dual.axes[0][0] < -3.9 and dual.axes[0][-1] > 3.9
    inner = Grid.from_bounds([-3.0], [3.0], 61)
    assert_allclose(discrete_conjugate(psi0, grid, inner), 0.5 * inner.axes[0] ** 2, atol=1e-4)


def test_lower_envelope_rejects_nonconvex_data(parabola):
    grid, psi0 = parabola
    assert convexity_margin(psi0, grid) == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(DomainError) as exc_info:
        lower_envelope(-psi0, grid, [[0.0]], 0.5)
    assert exc_info.value.code == "NOT_CONVEX"


# ==================== 闭式特征线与 Riccati ====================


def test_characteristic_matches_riccati(convex_quadratic, rng):
    boundary = ValueBoundary(potential=convex_quadratic, n=2)
    riccati = _riccati_for(convex_quadratic, 2, TIMES)
    z = rng.normal(scale=0.4, size=(6, 2))
    for t in TIMES:
        assert_allclose(psi_characteristic(boundary, z, t), riccati.value(z, t), atol=1e-7)


def test_spectral_margin_at_final_time_is_hessian_floor(convex_quadratic):
    solution = solve_z0(convex_quadratic, np.array([0.2, 0.1]), 1.0)
    assert solution.margin == pytest.approx(np.linalg.eigvalsh(convex_quadratic.matrix)[0], rel=1e-6)


def test_concave_potential_violates_spectral_condition():
    with pytest.raises(SpectralConditionError) as exc_info:
        solve_z0(ConcavePotential(1), np.array([0.3]), 1.0)
    assert exc_info.value.margin < 0


def test_upper_envelope_bounds_characteristic(convex_quadratic, plane_grid):
    boundary = ValueBoundary(potential=convex_quadratic, n=2)
    psi0 = boundary.psi0(plane_grid.points()).reshape(plane_grid.shape)
    z = np.array([[0.0, 0.0], [0.2, -0.1], [-0.15, 0.25]])
    exact = psi_characteristic(boundary, z, 0.5)
    envelope = upper_envelope(psi0, plane_grid, z, 0.5)
    assert np.all(envelope >= exact - 1e-9)
    assert np.all(envelope - exact < 0.1)


def test_control_from_value_lattice_matches_transport_velocity(convex_quadratic, rng):
    grid = Grid.from_bounds([-3.0, -3.0], [3.0, 3.0], 61)
    times = np.linspace(0.0, 1.0, 11)
    lattice = value_lattice("riccati_oracle", grid, times, riccati=_riccati_for(convex_quadratic, 2, times))
    interp = interpolate(convex_quadratic, 2)
    y = rng.normal(scale=0.2, size=(5, 2))
    z = interp.T_t(y, 0.5)
    controls = optimal_control_from_psi(HamiltonianSpec.linear(2), lattice, z, 0.5)
    assert_allclose(controls, interp.velocity_from_preimage(y, 0.5), atol=1e-6)


def test_hjb_residual_of_exact_solution():
    potential = QuadraticPotential([[1.5]], shift=[0.1])
    grid = Grid.from_bounds([-3.0], [3.0], 61)
    times = np.linspace(0.0, 1.0, 21)
    lattice = value_lattice("riccati_oracle", grid, times, riccati=_riccati_for(potential, 1, times))
    residual = hjb_residual(HamiltonianSpec.linear(1), lattice)
    assert residual["rms"] < 5e-3
    assert residual["interior_nodes"] == 19 * 59
    with pytest.raises(DomainError):
        hjb_residual(HamiltonianSpec.linear(1), lattice, weights=np.ones(7))


def test_lattices_agree_in_one_dimension():
    potential = QuadraticPotential([[1.5]], shift=[0.1])
    grid = Grid.from_bounds([-3.0], [3.0], 241)
    boundary = ValueBoundary(potential=potential, n=1)
    characteristic = value_lattice("characteristic", grid, TIMES, boundary=boundary)
    envelope = value_lattice("upper_envelope", grid, TIMES, boundary=boundary)
    inner = np.abs(grid.axes[0]) <= 1.5
    assert np.max(np.abs(characteristic.values[:, inner] - envelope.values[:, inner])) < 1e-3


def test_value_function_checks():
    grid = Grid.from_bounds([0.0], [1.0], 5)
    with pytest.raises(DomainError):
        ValueFunction(grid, [0.0, 1.0], np.zeros((3, 5)), "characteristic")
    with pytest.raises(DomainError):
        ValueFunction(grid, [0.0, 1.0], np.zeros((2, 5)), "guess")
    values = ValueFunction(grid, [0.0, 1.0], np.zeros((2, 5)), "upper_envelope")
    with pytest.raises(DomainError):
        values.at(0.5)
    with pytest.raises(DomainError):
        value_lattice("characteristic", grid, [0.0, 1.0])
