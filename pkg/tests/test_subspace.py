import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rkproj import decompose, orthonormalize

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


@st.composite
def stage_sets(draw):
    m = draw(st.integers(1, 8))
    s = draw(st.integers(1, 8))
    R = draw(arrays(float, (s, m), elements=finite))
    g = draw(arrays(float, m, elements=finite))
    return R, g


def _svd_rank(R, rel):
    sv = np.linalg.svd(R, compute_uv=False)
    return int(np.sum(sv > rel * sv[0])) if sv.size and sv[0] > 0 else 0


@settings(max_examples=300, deadline=None)
@given(stage_sets())
def test_basis_is_orthonormal_and_reproduces_coefficients(data):
    R, _ = data
    basis = orthonormalize(R)
    V = basis.vectors
    np.testing.assert_allclose(V @ V.T, np.eye(basis.rank), atol=1e-10)
    np.testing.assert_allclose(basis.coeffs @ R, V, atol=1e-8 * max(1.0, np.abs(basis.coeffs).max(initial=0)))
    assert basis.rank <= min(R.shape)


@settings(max_examples=200, deadline=None)
@given(stage_sets())
def test_rank_matches_svd_on_well_separated_spectra(data):
    R, _ = data
    sv = np.linalg.svd(R, compute_uv=False)
    # only compare when the numerical rank is unambiguous and the input is not subnormal
    if sv.size and np.abs(R).max() >= np.finfo(float).tiny and np.all((sv / sv[0] > 1e-6) | (sv / sv[0] < 1e-14)):
        assert orthonormalize(R).rank == _svd_rank(R, 1e-10)


@settings(max_examples=300, deadline=None)
@given(stage_sets())
def test_pythagoras_and_idempotence(data):
    R, g = data
    basis = orthonormalize(R)
    split = decompose(g, basis)
    scale = max(1.0, g @ g)
    assert abs(split.g_s @ split.g_s + split.g_n @ split.g_n - g @ g) <= 1e-10 * scale
    again = decompose(split.g_s, basis)
    np.testing.assert_allclose(again.g_s, split.g_s, atol=1e-10 * np.sqrt(scale))
    np.testing.assert_allclose(again.g_n, 0, atol=1e-10 * np.sqrt(scale))
    assert np.all(np.abs(basis.vectors @ split.g_n) <= 1e-9 * np.sqrt(scale))


@settings(max_examples=300, deadline=None)
@given(stage_sets(), st.randoms(use_true_random=False))
def test_in_span_component_maximizes_alignment(data, rnd):
    R, g = data
    basis = orthonormalize(R)
    split = decompose(g, basis)
    if split.g_s_norm == 0:
        return
    best = abs(g @ split.g_s) / split.g_s_norm
    alpha = np.array([rnd.uniform(-1, 1) for _ in range(R.shape[0])])
    d = alpha @ R
    if np.linalg.norm(d) > 1e-8:
        assert abs(g @ d) / np.linalg.norm(d) <= best + 1e-9 * max(1.0, np.linalg.norm(g))
    # equality case: the maximizer is g_s itself and |g^T g_s| = |g_s|^2
    assert best == pytest.approx(split.g_s_norm, rel=1e-9, abs=1e-12)


@settings(max_examples=150, deadline=None)
@given(stage_sets(), st.permutations(range(8)))
def test_span_projection_independent_of_stage_order(data, perm):
    R, g = data
    idx = [i for i in perm if i < R.shape[0]]
    a = decompose(g, orthonormalize(R))
    b = decompose(g, orthonormalize(R[idx]))
    s1 = np.linalg.svd(R, compute_uv=False)
    if s1.size and s1[0] > 0 and np.all((s1 / s1[0] > 1e-6) | (s1 / s1[0] < 1e-14)):
        np.testing.assert_allclose(a.g_s, b.g_s, atol=1e-7 * max(1.0, np.linalg.norm(g)))


@settings(max_examples=200, deadline=None)
@given(stage_sets())
def test_combination_rebuilds_component(data):
    R, g = data
    split = decompose(g, orthonormalize(R))
    np.testing.assert_allclose(split.combo @ R, split.g_s, atol=1e-7 * max(1.0, np.linalg.norm(g))
                               * max(1.0, np.abs(split.combo).max(initial=0)))


def test_duplicate_and_zero_stages_are_dropped():
    r = np.array([1.0, 2.0, 0.0])
    R = np.array([r, 2 * r, np.zeros(3), [0.0, 0.0, 1.0]])
    basis = orthonormalize(R)
    assert basis.rank == 2
    assert np.all(basis.coeffs[:, 2] == 0)


def test_all_zero_stages_give_empty_basis():
    basis = orthonormalize(np.zeros((4, 3)))
    assert basis.rank == 0 and basis.vectors.shape == (0, 3)
    split = decompose(np.ones(3), basis)
    assert split.g_s_norm == 0 and np.array_equal(split.g_n, np.ones(3))


def test_subnormal_stages_give_empty_basis():
    assert orthonormalize(np.array([[5e-324, 0.0], [0.0, 1e-310]])).rank == 0
    assert orthonormalize(np.array([[1e-300, 0.0], [0.0, 1e-300]])).rank == 2


def test_rank_caps_at_dimension():
    rng = np.random.default_rng(3)
    assert orthonormalize(rng.standard_normal((8, 3))).rank == 3


def test_near_dependent_vector_uses_relative_tolerance():
    R = np.array([[1e6, 0.0], [1e6, 1e-5]])
    assert orthonormalize(R).rank == 1
    assert orthonormalize(R, drop_tol=1e-13).rank == 2
    # a uniform rescaling does not change the decision
    assert orthonormalize(R * 1e-9).rank == 1


def test_decompose_checks_dimension():
    with pytest.raises(ValueError):
        decompose(np.ones(4), orthonormalize(np.eye(3)))
