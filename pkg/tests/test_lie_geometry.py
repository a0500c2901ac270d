# coding=utf-8
import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.integrate import solve_ivp

from densitysteer.geometry.fields import ControlAffineSystem, ScalarField, VectorField
from densitysteer.geometry.lie import ad_power, check_linearizable, lie_bracket, lie_derivative
from densitysteer.geometry.linearizing import (
    build_tuple,
    closed_loop_rhs,
    linear_rhs,
    recover_control,
    sample_domain,
    tau_inverse,
)
from densitysteer.geometry.systems import get_builtin_system
from densitysteer.utils.errors import ConfigurationError, DomainError, RelativeDegreeError


@pytest.fixture(scope="module")
def flat3d():
    return get_builtin_system("flat3d")


@pytest.fixture(scope="module")
def flat3d_tuple(flat3d):
    return flat3d.build()


def _points(flat3d, count=8):
    return sample_domain(flat3d.system, [-1.0, -0.8, -1.0], [1.0, 1.5, 1.0], count, seed=3)


def test_flat3d_lie_derivatives(flat3d):
    sys, lam = flat3d.system, flat3d.lam
    for x in _points(flat3d):
        x1, x2, x3 = x
        assert lie_derivative(lam, sys.g, x) == pytest.approx(0.0, abs=1e-4)
        assert lie_derivative(lam, sys.f, x, 1) == pytest.approx(x3 - x2 ** 2, abs=1e-4)
        assert lie_derivative(lam, sys.f, x, 2) == pytest.approx(-x1 + x2, abs=1e-4)
        assert lie_derivative(lam, sys.f, x, 3) == pytest.approx(-x3 - x2, abs=1e-4)
        assert lie_derivative(lam, sys.f, x, 0) == pytest.approx(x1 + 0.5 * x2 ** 2)


def test_flat3d_brackets(flat3d):
    sys = flat3d.system
    for x in _points(flat3d):
        x2 = x[1]
        assert_allclose(lie_bracket(sys.f, sys.g, x), [-x2, 1.0, x2 - 1.0], atol=1e-6)
        assert_allclose(ad_power(sys.f, sys.g, 1, x), [-x2, 1.0, x2 - 1.0], atol=1e-6)
        assert_allclose(ad_power(sys.f, sys.g, 0, x), sys.g(x))


def test_linear_field_bracket_is_commutator(rng):
    A = rng.normal(size=(3, 3))
    B = rng.normal(size=(3, 3))
    xi = VectorField(3, lambda x: A @ x)
    eta = VectorField(3, lambda x: B @ x)
    x = rng.normal(size=3)
    assert_allclose(lie_bracket(xi, eta, x), (B @ A - A @ B) @ x, atol=1e-6)


def test_lie_derivative_order_checks(flat3d):
    with pytest.raises(DomainError):
        lie_derivative(flat3d.lam, flat3d.system.f, np.zeros(3), -1)
    with pytest.raises(DomainError):
        lie_derivative(flat3d.lam, flat3d.system.f, np.zeros(3), 5)


def test_flat3d_is_linearizable(flat3d):
    report = check_linearizable(flat3d.system, flat3d.reference_point, _points(flat3d))
    assert report.n == 3
    assert report.rank == 3
    assert report.passed
    assert report.to_dict()["passed"] is True


def test_excluded_samples_are_reported(flat3d):
    report = check_linearizable(flat3d.system, flat3d.reference_point, [np.array([0.0, -2.0, 0.0])])
    assert report.excluded_points == [[0.0, -2.0, 0.0]]


def test_rank_deficient_system_fails_check():
    f = VectorField(2, lambda x: np.zeros(2), jacobian=lambda x: np.zeros((2, 2)))
    g = VectorField(2, lambda x: np.array([0.0, 1.0]), jacobian=lambda x: np.zeros((2, 2)))
    report = check_linearizable(ControlAffineSystem(f=f, g=g), np.zeros(2))
    assert report.rank == 1
    assert not report.passed


def test_wrong_output_raises_relative_degree_error():
    builtin = get_builtin_system("brunovsky2d")
    lam = ScalarField(2, lambda x: x[1], gradient=lambda x: np.array([0.0, 1.0]))
    with pytest.raises(RelativeDegreeError) as exc_info:
        build_tuple(builtin.system, lam, builtin.sample_points)
    assert exc_info.value.exit_code == 4


def test_flat3d_feedback_terms(flat3d, flat3d_tuple):
    for x in _points(flat3d, 4):
        x1, x2, x3 = x
        assert flat3d_tuple.beta(x) == pytest.approx(1.0 / (1.0 + x2), rel=1e-4)
        assert flat3d_tuple.alpha(x) == pytest.approx((x3 + x2) / (1.0 + x2), rel=1e-4, abs=1e-6)


def test_tau_inverse_round_trip(flat3d, flat3d_tuple):
    for x in _points(flat3d):
        z = flat3d_tuple.forward(x)
        recovered = tau_inverse(flat3d_tuple, z, guess=flat3d.reference_point)
        assert_allclose(recovered, x, atol=1e-6)


def test_closed_loop_matches_linear_system(flat3d_tuple):
    def v(z, t):
        return -z[0] - 2.0 * z[1] - 2.0 * z[2]

    x0 = np.array([0.1, 0.2, 0.1])
    z0 = flat3d_tuple.forward(x0)
    horizon = np.linspace(0.0, 1.0, 6)
    nonlinear = solve_ivp(closed_loop_rhs(flat3d_tuple, v), (0.0, 1.0), x0, t_eval=horizon, rtol=1e-9, atol=1e-11)
    linear = solve_ivp(linear_rhs(3, v), (0.0, 1.0), z0, t_eval=horizon, rtol=1e-9, atol=1e-11)
    assert nonlinear.success and linear.success
    for k in range(len(horizon)):
        assert_allclose(flat3d_tuple.forward(nonlinear.y[:, k]), linear.y[:, k], atol=1e-4)


def test_recover_control_inverts_feedback(flat3d, flat3d_tuple):
    x = _points(flat3d, 1)[0]
    u = recover_control(flat3d_tuple, lambda z, t: 0.7, x, 0.0)
    assert flat3d_tuple.gamma(x) + flat3d_tuple.delta(x) * u == pytest.approx(0.7, abs=1e-6)


def test_unknown_builtin_system():
    with pytest.raises(ConfigurationError) as exc_info:
        get_builtin_system("pendulum")
    assert exc_info.value.field == "system.name"
