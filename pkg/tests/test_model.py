import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from rotpend.exceptions import InvalidParameterError
from rotpend.model import (
    Forcing,
    PendulumParams,
    derive_coefficients,
    energy,
    euler_lagrange_residual,
    forcing_bound,
    forcing_eval,
    forcing_l2_norm,
    kinetic_force,
    kinetic_matrix,
    kinetic_matrix_derivative,
    lagrangian,
    potential,
    potential_gradient,
)

positive = st.floats(min_value=0.05, max_value=20.0)


@pytest.mark.parametrize(
    "m, ell, alpha, beta",
    [
        ((1, 1), (1, 1), (2, 1), (2, 1)),
        ((10, 1), (0.1, 10), (11, 1), (1.1, 10)),
        ((1,), (1,), (1,), (1,)),
    ],
)
def test_derive_coefficients_examples(m, ell, alpha, beta):
    a, b = derive_coefficients(m, ell)
    np.testing.assert_allclose(a, alpha, rtol=1e-15)
    np.testing.assert_allclose(b, beta, rtol=1e-15)


@pytest.mark.parametrize("m, ell", [((1, -1), (1, 1)), ((1, 1), (0, 1)), ((1, 1), (1,)), ((np.nan,), (1,))])
def test_derive_coefficients_rejects_bad_input(m, ell):
    with pytest.raises(InvalidParameterError):
        derive_coefficients(m, ell)


def test_gravity_must_be_positive():
    with pytest.raises(InvalidParameterError):
        PendulumParams((1.0,), (1.0,), 0.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(positive, positive), min_size=1, max_size=5))
def test_alpha_decreasing_and_beta_positive(pairs):
    m, ell = zip(*pairs)
    a, b = derive_coefficients(m, ell)
    assert np.all(np.diff(a) < 0)
    assert a[-1] == m[-1]
    assert np.all(b > 0)


def test_kinetic_matrix_examples(unit_double):
    p1 = PendulumParams((1.0,), (1.0,))
    np.testing.assert_allclose(kinetic_matrix(p1, [0.7]), [[1.0]])
    np.testing.assert_allclose(kinetic_matrix(unit_double, [0.0, 0.0]), [[2, 1], [1, 1]])
    np.testing.assert_allclose(kinetic_matrix(unit_double, [0.0, np.pi / 2]), [[2, 0], [0, 1]], atol=1e-15)


def test_kinetic_matrix_matches_reference(rng):
    for _ in range(20):
        N = rng.integers(1, 5)
        m, ell = rng.uniform(0.1, 3, N), rng.uniform(0.1, 3, N)
        q = rng.uniform(-4, 4, N)
        p = PendulumParams(tuple(m), tuple(ell))
        np.testing.assert_allclose(kinetic_matrix(p, q), oracles.kinetic_matrix(m, ell, q), rtol=1e-13)


def test_kinetic_matrix_positive_definite(rng):
    p = PendulumParams((1.0, 2.0, 0.5), (0.3, 1.0, 2.0))
    q = rng.uniform(0, 2 * np.pi, (200, 3))
    assert np.all(np.linalg.eigvalsh(kinetic_matrix(p, q)) > 0)


def test_kinetic_matrix_derivative_examples(unit_double):
    assert np.all(kinetic_matrix_derivative(unit_double, [0.3, 1.0], [0.0, 0.0]) == 0)
    d = kinetic_matrix_derivative(unit_double, [0.0, 0.0], [1.0, 0.0])
    assert d[0, 1] == 0
    d = kinetic_matrix_derivative(unit_double, [np.pi / 2, 0.0], [1.0, 0.0])
    np.testing.assert_allclose(d[0, 1], -1.0, rtol=1e-12)


def test_kinetic_matrix_derivative_matches_finite_differences(rng):
    p = PendulumParams((1.0, 2.0, 0.5), (0.3, 1.0, 2.0))
    q, y = rng.normal(size=3), rng.normal(size=3)
    h = 1e-6
    fd = (kinetic_matrix(p, q + h * y) - kinetic_matrix(p, q - h * y)) / (2 * h)
    np.testing.assert_allclose(kinetic_matrix_derivative(p, q, y), fd, atol=1e-8)


def test_kinetic_force_is_half_gradient(rng):
    p = PendulumParams((1.0, 2.0, 0.5), (0.3, 1.0, 2.0))
    q, qd = rng.normal(size=3), rng.normal(size=3)
    h = 1e-6
    fd = np.array([
        0.5 * (qd @ kinetic_matrix(p, q + h * e) @ qd - qd @ kinetic_matrix(p, q - h * e) @ qd) / (2 * h)
        for e in np.eye(3)
    ])
    np.testing.assert_allclose(kinetic_force(p, q, qd), fd, atol=1e-8)


def test_potential_examples(unit_double):
    assert potential(unit_double, [0.0, 0.0]) == pytest.approx(3.0)
    assert potential(unit_double, [np.pi, np.pi]) == pytest.approx(-3.0)
    assert potential(unit_double, [np.pi / 2, np.pi / 2]) == pytest.approx(0.0, abs=1e-15)


def test_potential_gradient_examples(unit_double):
    np.testing.assert_allclose(potential_gradient(unit_double, [0.0, 0.0]), 0.0)
    np.testing.assert_allclose(potential_gradient(unit_double, [np.pi, np.pi]), 0.0, atol=1e-15)
    np.testing.assert_allclose(potential_gradient(PendulumParams((1.0,), (1.0,)), [np.pi / 2]), [-1.0])


def test_gravity_scales_potential():
    p = PendulumParams((1.0, 1.0), (1.0, 1.0), 9.81)
    assert potential(p, [0.0, 0.0]) == pytest.approx(3 * 9.81)


def test_lagrangian_and_energy_signs(unit_double):
    q, qd = np.array([0.2, -0.4]), np.array([1.0, 0.5])
    kin = 0.5 * qd @ kinetic_matrix(unit_double, q) @ qd
    assert lagrangian(unit_double, q, qd) == pytest.approx(kin + potential(unit_double, q))
    assert energy(unit_double, q, qd) == pytest.approx(kin - potential(unit_double, q))


def test_forcing_examples():
    f0 = Forcing.zero(2, 1.0)
    np.testing.assert_allclose(forcing_eval(f0, 0.3), [0.0, 0.0])
    assert forcing_bound(f0) == 0.0
    eps, T = 0.05, 2.0
    f = Forcing.single(3, T, 0, 1, 0.0, eps)
    np.testing.assert_allclose(forcing_eval(f, T / 4), [eps, 0.0, 0.0], atol=1e-15)
    assert forcing_bound(f) == pytest.approx(eps, rel=1e-2)
    assert forcing_bound(f) <= eps * (1 + 1e-12)
    assert forcing_l2_norm(f) == pytest.approx(eps * np.sqrt(T / 2))


def test_forcing_rejects_constant_term():
    with pytest.raises(InvalidParameterError):
        Forcing(1.0, (((0, 1.0, 0.0),),))


def test_forcing_is_periodic_and_zero_mean(rng):
    f = Forcing(1.5, (((1, 0.3, -0.2), (3, 0.1, 0.05)), ((2, 0.0, 0.4),)))
    t = rng.uniform(0, 1.5, 20)
    np.testing.assert_allclose(forcing_eval(f, t), forcing_eval(f, t + 1.5), atol=1e-14)
    grid = np.arange(400) * 1.5 / 400
    np.testing.assert_allclose(forcing_eval(f, grid).mean(axis=0), 0.0, atol=1e-14)


def test_euler_lagrange_residual_vanishes_at_equilibria():
    p = PendulumParams((1.0,), (1.0,))
    z = np.zeros(1)
    for q in (np.array([np.pi]), np.zeros(1)):
        np.testing.assert_allclose(euler_lagrange_residual(p, None, 0.0, q, z, z), 0.0, atol=1e-15)


def test_euler_lagrange_residual_matches_finite_differences(unit_double, rng):
    """Residual equals d/dt L_p - L_q - f along a smooth curve, each piece by finite differences."""
    p = unit_double
    f = Forcing.single(2, 1.0, 1, 2, 0.3, 0.1)
    c0, c1, c2 = rng.normal(size=(3, 2))
    q_of = lambda t: c0 + c1 * t + c2 * t**2  # noqa: E731
    qd_of = lambda t: c1 + 2 * c2 * t  # noqa: E731
    t, h = 0.37, 1e-5

    def L(q, qd):
        return lagrangian(p, q, qd)

    def Lp(t):
        q, qd = q_of(t), qd_of(t)
        return np.array([(L(q, qd + h * e) - L(q, qd - h * e)) / (2 * h) for e in np.eye(2)])

    dLp = (Lp(t + h) - Lp(t - h)) / (2 * h)
    q, qd = q_of(t), qd_of(t)
    Lq = np.array([(L(q + h * e, qd) - L(q - h * e, qd)) / (2 * h) for e in np.eye(2)])
    expected = dLp - Lq - forcing_eval(f, t)
    got = euler_lagrange_residual(p, f, t, q, qd, 2 * c2)
    np.testing.assert_allclose(got, expected, rtol=1e-5, atol=1e-5 * np.abs(expected).max())
