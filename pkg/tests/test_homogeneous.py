from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from loopflow.errors import IrrationalInput
from loopflow.frame_geometry import harmonicity_residual
from loopflow.homogeneous import (HomogeneousParams, angle_from_frames, closure_from_holonomy,
                                  conformal_change, conformal_connection, cover_lcm,
                                  flatness_all_lambda, holonomy, homogeneous_frames,
                                  homogeneous_immersion, legendrian_closure, maslov_class,
                                  metric, parse_fraction)
from loopflow.matrix_core import frob, unitarity_defect

CLIFFORD = HomogeneousParams("1/3", "1/3")
TORUS = HomogeneousParams("1/2", "1/4")


def test_parse_fraction():
    assert parse_fraction("1/3") == Fraction(1, 3)
    assert parse_fraction(2) == Fraction(2)
    assert isinstance(parse_fraction(0.25), float)


def test_params_validation():
    with pytest.raises(ValueError):
        HomogeneousParams("1/2", "1/2")
    with pytest.raises(ValueError):
        HomogeneousParams(0, "1/2")
    assert CLIFFORD.is_clifford and not TORUS.is_clifford
    assert TORUS.r3sq == Fraction(1, 4)
    np.testing.assert_allclose(np.sum(TORUS.radii ** 2), 1.0, atol=1e-15)


def test_clifford_fixture():
    imm = homogeneous_immersion(CLIFFORD, 128, 128)
    assert np.abs(imm.beta - np.pi).max() < 1e-12
    assert imm.residual_max("legendrian") < 1e-12
    assert imm.residual_max("norm") < 1e-14
    assert maslov_class(CLIFFORD) == (0, 0)
    assert legendrian_closure(CLIFFORD) == (1, 1)


def test_torus_fixture():
    imm = homogeneous_immersion(TORUS, 64, 64)
    X, Y = np.meshgrid(imm.xs, imm.ys, indexing="ij")
    np.testing.assert_allclose(imm.beta, X * (1 - 3 / 2) + Y * (1 - 3 / 4) + np.pi, atol=1e-10)
    assert harmonicity_residual(imm.beta, imm.hx, imm.hy) < 1e-12
    assert maslov_class(TORUS) == (Fraction(-1, 2), Fraction(1, 4))
    assert legendrian_closure(TORUS) == (2, 4)
    assert cover_lcm(TORUS) == 4


def test_frames_are_unitary_and_carry_the_angle():
    for params in (CLIFFORD, TORUS, HomogeneousParams(0.2, 0.5)):
        F, imm = homogeneous_frames(params, 24, 24)
        assert unitarity_defect(F).max() < 1e-14
        np.testing.assert_allclose(angle_from_frames(F), imm.beta, atol=1e-12)


def test_conformality_of_exact_derivatives():
    imm = homogeneous_immersion(TORUS, 16, 16)
    # the coordinates are not conformal, but the Legendrian condition is exact
    assert imm.residual_max("legendrian") < 1e-15


def test_holonomy_values():
    # frozen from the spectral horizontal-lift integration
    assert abs(holonomy(CLIFFORD, "x") - np.exp(-2j * np.pi / 3)) < 1e-12
    assert abs(holonomy(TORUS, "x") - (-1)) < 1e-12
    assert abs(holonomy(TORUS, "y") - (-1j)) < 1e-12


def test_closure_confirmed_by_holonomy():
    assert closure_from_holonomy(CLIFFORD, tol=1e-10) == (1, 1)
    assert closure_from_holonomy(TORUS, tol=1e-10) == (2, 4)


@given(st.integers(1, 11), st.integers(1, 11), st.integers(12, 24))
def test_closure_agrees_with_holonomy(a, b, d):
    assume(a + b < d)
    params = HomogeneousParams(Fraction(a, d), Fraction(b, d))
    assert closure_from_holonomy(params, kmax=4 * d) == legendrian_closure(params)


def test_irrational_input():
    with pytest.raises(IrrationalInput):
        legendrian_closure(HomogeneousParams(0.2, 0.3))


def test_conformal_change():
    for params in (CLIFFORD, TORUS):
        L = conformal_change(params)
        np.testing.assert_allclose(L.T @ metric(params) @ L, np.eye(2), atol=1e-14)


def test_conformal_connection_is_flat_for_all_lambda():
    for params in (CLIFFORD, TORUS, HomogeneousParams("1/6", "1/6")):
        field, cd = conformal_connection(params)
        assert flatness_all_lambda(field) < 1e-13
        x, c = cd.structure_residual()
        assert x < 1e-14 and c < 1e-14
    _, cd = conformal_connection(CLIFFORD)
    assert abs(cd.a) < 1e-12
    _, cd = conformal_connection(TORUS)
    assert abs(cd.a) > 0.1
