import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, strategies as st

from loopflow.errors import NotSkewHermitian, Singular
from loopflow.matrix_core import (EPSILON, EPSILON_BAR, ID3, J, PI0_PERP, bracket,
                                  check_structural_constants, dagger, embed2, frob,
                                  is_skew_hermitian, is_traceless, is_unitary, mexp_skew,
                                  polar_unitarize, random_skew_hermitian, random_unitary,
                                  unitarity_defect)

seeds = st.integers(0, 2**32 - 1)


def test_structural_constants():
    assert check_structural_constants(1e-15)
    np.testing.assert_allclose(J @ J, -np.eye(2), atol=1e-15)
    np.testing.assert_allclose(J @ EPSILON, 1j * EPSILON, atol=1e-15)
    np.testing.assert_allclose(J @ EPSILON_BAR, -1j * EPSILON_BAR, atol=1e-15)
    np.testing.assert_allclose(PI0_PERP @ PI0_PERP, PI0_PERP, atol=1e-15)


def test_mexp_zero_and_diagonal():
    np.testing.assert_array_equal(mexp_skew(np.zeros((3, 3))), ID3)
    th = np.array([0.3, -1.2, 2.5])
    np.testing.assert_allclose(mexp_skew(np.diag(1j * th)), np.diag(np.exp(1j * th)), atol=1e-15)


def test_mexp_matches_scipy(rng):
    for _ in range(20):
        M = random_skew_hermitian(rng, scale=2.0)
        np.testing.assert_allclose(mexp_skew(M), scipy.linalg.expm(M), atol=1e-12)


def test_mexp_stack(rng):
    M = random_skew_hermitian(rng, (4, 5, 3, 3))
    E = mexp_skew(M)
    assert E.shape == (4, 5, 3, 3)
    np.testing.assert_allclose(E[2, 3], scipy.linalg.expm(M[2, 3]), atol=1e-12)


def test_mexp_rejects_non_skew():
    with pytest.raises(NotSkewHermitian):
        mexp_skew(np.eye(3))


@given(seeds)
def test_mexp_inverse_and_det(seed):
    M = random_skew_hermitian(np.random.default_rng(seed), scale=3.0)
    E = mexp_skew(M)
    assert frob(E @ mexp_skew(-M) - ID3) < 1e-12
    assert abs(np.linalg.det(E) - np.exp(np.trace(M))) < 1e-12
    assert unitarity_defect(E) < 1e-13


@given(seeds)
def test_jacobi_identity(seed):
    rng = np.random.default_rng(seed)
    A, B, C = (rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)) for _ in range(3))
    jac = bracket(A, bracket(B, C)) + bracket(B, bracket(C, A)) + bracket(C, bracket(A, B))
    assert frob(jac) < 1e-12


def test_predicates():
    assert is_skew_hermitian(np.diag([1j, 2j, -3j]))
    assert not is_skew_hermitian(np.eye(3))
    assert is_traceless(np.diag([1, -1, 0]))
    assert not is_traceless(np.eye(3))
    assert is_unitary(np.diag([1j, -1, 1]))
    assert not is_unitary(2 * np.eye(3))
    assert is_traceless(np.diag([1.0, -1.0 + 1e-11, 0]), tol=1e-10)
    assert not is_traceless(np.diag([1.0, -1.0 + 1e-11, 0]), tol=1e-12)


def test_polar_fixed_point_and_scalar(rng):
    U = random_unitary(rng)
    np.testing.assert_allclose(polar_unitarize(U), U, atol=1e-14)
    np.testing.assert_allclose(polar_unitarize(1.01 * np.eye(3)), np.eye(3), atol=1e-15)


def test_polar_matches_scipy(rng):
    for _ in range(10):
        U = random_unitary(rng)
        E = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        E = 0.5 * (E + dagger(E))
        E *= 1e-3 / frob(E)
        M = U @ (np.eye(3) + E)
        P = polar_unitarize(M)
        Q, _ = scipy.linalg.polar(M)
        np.testing.assert_allclose(P, Q, atol=1e-13)
        assert frob(P - U) < 2e-3


def test_polar_rejects_far_from_unitary():
    with pytest.raises(Singular):
        polar_unitarize(np.diag([1.0, 1.0, 0.0]))
    with pytest.raises(Singular):
        polar_unitarize(3 * np.eye(3))


def test_embed2():
    g = np.array([[1, 2], [3, 4]])
    G = embed2(g, 1.0)
    np.testing.assert_array_equal(G, [[1, 2, 0], [3, 4, 0], [0, 0, 1]])
    assert embed2(g)[2, 2] == 0
