import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.linalg import expm

from rkproj import get_problem, stability_polynomial_rk44
from rkproj.problems import (LINEAR_DISSIPATIVE_L, PROBLEMS, burgers_flux, dominant_right_singular_vector,
                             expm_taylor, jacobi_eigh)


def test_registry():
    assert list(PROBLEMS) == ["lindiss", "oscillator", "burgers", "rigidbody"]
    with pytest.raises(KeyError, match="oscillator"):
        get_problem("kepler")
    assert get_problem("BURGERS", n=10).m == 10


def test_stability_polynomial_scalar_and_matrix():
    z = -0.7 + 0.2j
    assert stability_polynomial_rk44(z) == pytest.approx(sum(z**k / math.factorial(k) for k in range(5)))
    Z = 0.5 * LINEAR_DISSIPATIVE_L
    ref = sum(np.linalg.matrix_power(Z, k) / math.factorial(k) for k in range(5))
    np.testing.assert_allclose(stability_polynomial_rk44(Z), ref, rtol=1e-15, atol=1e-15)


@settings(max_examples=100, deadline=None)
@given(arrays(float, (4, 4), elements=st.floats(-5, 5, allow_nan=False)))
def test_jacobi_matches_numpy_eigh(M):
    A = M + M.T
    w, V = jacobi_eigh(A)
    np.testing.assert_allclose(w, np.linalg.eigvalsh(A)[::-1], atol=1e-11 * max(1.0, np.abs(A).max()))
    np.testing.assert_allclose(V.T @ V, np.eye(4), atol=1e-12)
    np.testing.assert_allclose(V @ np.diag(w) @ V.T, A, atol=1e-11 * max(1.0, np.abs(A).max()))


def test_dominant_singular_vector_matches_svd():
    P = stability_polynomial_rk44(0.5 * LINEAR_DISSIPATIVE_L)
    v = dominant_right_singular_vector(P)
    _, s, Vt = np.linalg.svd(P)
    ref = Vt[0] * np.sign(Vt[0][np.flatnonzero(np.abs(Vt[0]) > 1e-14)[0]])
    np.testing.assert_allclose(v, ref, atol=1e-13)
    assert np.linalg.norm(P @ v) == pytest.approx(s[0], rel=1e-14)


def test_expm_matches_scipy():
    rng = np.random.default_rng(1)
    for t in (0.0, 0.3, 2.0, 10.0):
        np.testing.assert_allclose(expm_taylor(t * LINEAR_DISSIPATIVE_L), expm(t * LINEAR_DISSIPATIVE_L),
                                   rtol=1e-13, atol=1e-15)
    A = rng.standard_normal((5, 5))
    np.testing.assert_allclose(expm_taylor(A), expm(A), rtol=1e-12)


def test_linear_dissipative_setup():
    prob = get_problem("lindiss")
    q0 = prob.q0
    assert np.linalg.norm(q0) == pytest.approx(1.0, abs=1e-15)
    assert q0[np.flatnonzero(np.abs(q0) > 1e-14)[0]] > 0
    assert prob.dissipative
    # the exact flow decays the energy, the RK4 step at dt = 0.5 amplifies it
    assert prob.invariants[0](prob.exact(0.5)) < 1.0
    P = stability_polynomial_rk44(0.5 * LINEAR_DISSIPATIVE_L)
    assert np.linalg.norm(P @ q0) > 1.0
    np.testing.assert_allclose(prob.exact(1.3), expm(1.3 * LINEAR_DISSIPATIVE_L) @ q0, rtol=1e-13)


def test_oscillator():
    prob = get_problem("oscillator")
    np.testing.assert_allclose(prob.rhs(0.0, np.array([2.0, 0.0])), [0.0, 0.5])
    np.testing.assert_allclose(prob.exact(math.pi / 2), [0.0, 1.0], atol=1e-16)
    with pytest.raises(ValueError):
        prob.rhs(0.0, np.zeros(2))


def test_burgers_grid_and_flux():
    prob = get_problem("burgers", n=50)
    x = prob.params["x"]
    assert prob.params["dx"] == 0.04 and x[0] == -1.0 and x[-1] == pytest.approx(0.96)
    np.testing.assert_allclose(prob.q0, np.exp(-30 * x**2))
    q = np.array([1.0, 2.0, -1.0])
    np.testing.assert_allclose(burgers_flux(q), [(1 + 2 + 4) / 6, (4 - 2 + 1) / 6, (1 - 1 + 1) / 6])
    with pytest.raises(ValueError):
        get_problem("burgers", n=3)


@settings(max_examples=100, deadline=None)
@given(arrays(float, 12, elements=st.floats(-3, 3, allow_nan=False)))
def test_burgers_semidiscretization_conserves_mass_and_energy(q):
    prob = get_problem("burgers", n=12)
    r = prob.rhs(0.0, q)
    scale = max(1.0, np.abs(q).max()) ** 2 / prob.params["dx"]
    assert abs(r.sum()) <= 1e-12 * scale * len(q)
    assert abs(q @ r) <= 1e-12 * scale * max(1.0, np.abs(q).max()) * len(q)


def test_rigid_body_casimirs_are_conserved_by_rhs():
    prob = get_problem("rigidbody")
    rng = np.random.default_rng(2)
    for _ in range(20):
        q = rng.standard_normal(3)
        r = prob.rhs(0.0, q)
        for inv in prob.invariants:
            assert abs(inv.gradient(q) @ r) <= 1e-14 * np.linalg.norm(q) ** 3
    np.testing.assert_allclose(prob.invariant_values(prob.q0), [2.0, prob.params["alpha"] + prob.params["beta"]])


@pytest.mark.parametrize("name", list(PROBLEMS))
def test_gradients_match_finite_differences(name):
    prob = get_problem(name)
    rng = np.random.default_rng(5)
    for inv in prob.invariants:
        for _ in range(3):
            q = prob.q0 + 0.2 * rng.standard_normal(prob.m)
            h = 1e-6
            fd = np.array([(inv(q + h * e) - inv(q - h * e)) / (2 * h) for e in np.eye(prob.m)])
            np.testing.assert_allclose(inv.gradient(q), fd, rtol=1e-7, atol=1e-8)
