import mpmath
import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad_vec

from hybrid_mor.errors import DimensionError, SingularityError
from hybrid_mor.linalg import (
    as_matrix,
    expm,
    flow_integral,
    observability_rank,
    reachability_rank,
    solve_sylvester,
    spectral_radius,
    sylvester_flow,
)

seeds = st.integers(0, 2**32 - 1)


def _taylor_expm(a, t):
    """High-precision oracle: mpmath's exponential of ``a * t``."""
    with mpmath.workdps(40):
        m = mpmath.expm(mpmath.matrix((np.asarray(a) * t).tolist()))
        return np.array(m.tolist(), dtype=float)


def test_expm_zero_time_is_identity():
    a = np.random.default_rng(0).standard_normal((4, 4))
    assert np.array_equal(expm(a, 0.0), np.eye(4))


def test_expm_scalar():
    assert expm([[-1.0]], 1.0)[0, 0] == pytest.approx(0.367879441, abs=1e-9)


def test_expm_rejects_non_square():
    with pytest.raises(DimensionError):
        expm(np.ones((2, 3)), 1.0)


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_expm_matches_high_precision_oracle(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((4, 4))
    a *= 2.0 / np.linalg.norm(a, 2)
    t = rng.uniform(-1.0, 1.0)
    np.testing.assert_allclose(expm(a, t), _taylor_expm(a, t), rtol=1e-12, atol=1e-13)


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_expm_semigroup(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((4, 4))
    a *= rng.uniform(0.1, 2.0) / np.linalg.norm(a, 2)
    s, t = rng.uniform(0, 2.5, size=2)
    lhs = expm(a, s + t)
    rhs = expm(a, s) @ expm(a, t)
    assert np.max(np.abs(lhs - rhs)) <= 1e-9 * max(1.0, np.max(np.abs(lhs)))


def test_sylvester_degenerate_cases():
    M0 = np.arange(6.0).reshape(2, 3)
    np.testing.assert_allclose(solve_sylvester(np.zeros((2, 2)), np.eye(3), M0), M0)
    assert solve_sylvester([[2.0]], [[5.0]], [[6.0]])[0, 0] == pytest.approx(2.0)


def test_sylvester_singular_names_eigenvalue():
    with pytest.raises(SingularityError, match="eigenvalue"):
        solve_sylvester(np.diag([1.0, 2.0]), np.diag([2.0, 3.0]), np.ones((2, 2)))


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_sylvester_against_bartels_stewart(seed):
    # scipy solves A X + X B = Q with a Schur-based method, independent of the Kronecker route
    rng = np.random.default_rng(seed)
    a, b = rng.integers(1, 5, size=2)
    L = rng.standard_normal((a, a))
    R = rng.standard_normal((b, b)) + 4.0 * np.eye(b)
    M = rng.standard_normal((a, b))
    X = solve_sylvester(L, R, M)
    oracle = scipy.linalg.solve_sylvester(-L, R, M)
    np.testing.assert_allclose(X, oracle, rtol=1e-7, atol=1e-9)
    res = np.linalg.norm(X @ R - L @ X - M)
    assert res <= 1e-10 * (np.linalg.norm(M) + np.linalg.norm(X) * (np.linalg.norm(L) + np.linalg.norm(R)))


def test_spectral_radius_examples():
    assert spectral_radius(np.eye(3)) == 1.0
    assert spectral_radius(np.diag([0.5, -0.25])) == 0.5
    with pytest.raises(DimensionError):
        spectral_radius(np.ones((2, 3)))


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_spectral_radius_against_characteristic_polynomial(seed):
    a = np.random.default_rng(seed).standard_normal((5, 5))
    roots = np.roots(np.poly(a))
    assert spectral_radius(a) == pytest.approx(np.max(np.abs(roots)), rel=1e-8)


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_spectral_radius_of_exponential(seed):
    rng = np.random.default_rng(seed)
    V = rng.standard_normal((4, 4)) + 3 * np.eye(4)
    lam = rng.uniform(-2, 1, size=4)
    a = V @ np.diag(lam) @ np.linalg.inv(V)
    t = rng.uniform(0.1, 2.0)
    assert spectral_radius(expm(a, t)) == pytest.approx(np.exp(t * lam.max()), rel=1e-8)


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_flow_integral_against_quadrature(seed):
    rng = np.random.default_rng(seed)
    P, K, Q = rng.standard_normal((3, 3)), rng.standard_normal((3, 2)), rng.standard_normal((2, 2))
    tau = rng.uniform(-1.5, 1.5)
    E, W = flow_integral(P, K, Q, tau)
    oracle, _ = quad_vec(lambda s: scipy.linalg.expm(P * (tau - s)) @ K @ scipy.linalg.expm(Q * s), 0, tau, epsabs=1e-13)
    np.testing.assert_allclose(E, scipy.linalg.expm(P * tau), atol=1e-12)
    np.testing.assert_allclose(W, oracle, atol=1e-10)


def test_sylvester_flow_solves_ode():
    rng = np.random.default_rng(3)
    P, Q, K, X0 = rng.standard_normal((3, 3)), rng.standard_normal((2, 2)), rng.standard_normal((3, 2)), rng.standard_normal((3, 2))
    h = 1e-5
    X = sylvester_flow(P, Q, K, X0, 0.7)
    dX = (sylvester_flow(P, Q, K, X0, 0.7 + h) - sylvester_flow(P, Q, K, X0, 0.7 - h)) / (2 * h)
    np.testing.assert_allclose(dX, P @ X - X @ Q + K, atol=1e-6)
    # backward then forward returns the start
    back = sylvester_flow(P, Q, K, X, -0.7)
    np.testing.assert_allclose(back, X0, atol=1e-10)


def test_ranks_and_coercion():
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    assert observability_rank(A, [[1.0, 0.0]]) == 2
    assert observability_rank(A, [[0.0, 1.0]]) == 1
    assert reachability_rank(A, [[0.0], [1.0]]) == 2
    assert as_matrix(2.0).shape == (1, 1)
    assert as_matrix([1.0, 2.0]).shape == (1, 2)
    with pytest.raises(ValueError):
        as_matrix([[np.nan]])


def test_sylvester_flow_long_backward_span_stays_accurate():
    # backward from an arbitrary value with Q stable: X forgets X0 and settles on P X - X Q + K = 0
    P = np.array([[0.0, 0.7], [-0.7, 0.0]])
    Q = np.array([[-1.0, 0.4, 0.0], [0.0, -2.0, 0.3], [0.0, 0.0, -1.5]])
    K = np.arange(6.0).reshape(2, 3) - 2.0
    steady = scipy.linalg.solve_sylvester(P, -Q, -K)
    X = sylvester_flow(P, Q, K, np.ones((2, 3)), -60.0)
    np.testing.assert_allclose(X, steady, atol=1e-10)
