import numpy as np
import pytest
import scipy.linalg

from loopflow.cli import hand_built_quasi_finite, su2_generator
from loopflow.errors import BranchJump, CurvatureTooLarge, NotInU3C0
from loopflow.frame_geometry import (ConnectionField, FrameFamily, based_loop_transform,
                                     conserved_loop, default_lambdas, diff2, diff4,
                                     extract_immersion, flatness_residual,
                                     gauge_to_finite_type, harmonicity_residual,
                                     integrate_frame, integrate_frame_family, midpoints,
                                     monodromy_defect, perp_projector, quasi_finite_defect,
                                     tau_u, unwrap_grid)
from loopflow.homogeneous import HomogeneousParams, homogeneous_frames
from loopflow.lax_flow import integrate_flow, random_admissible_state, vacuum_state
from loopflow.loop_algebra import tau_alg
from loopflow.matrix_core import PI0_PERP, dagger, frob, random_complex, random_unitary


@pytest.fixture(scope="module")
def flow65():
    s = random_admissible_state(0, seed=1)
    grid = integrate_flow(s, 65, 65, 1 / 64)
    conn = ConnectionField.from_state_grid(grid)
    return grid, conn


@pytest.fixture(scope="module")
def family65(flow65):
    grid, conn = flow65
    return integrate_frame_family(conn, default_lambdas(8))


def test_default_lambdas_contain_twist_pairs():
    lam = default_lambdas(16)
    assert abs(lam[0] - 1) < 1e-15
    fam = FrameFamily(lam, np.zeros((16, 1, 1, 3, 3)), 1.0, 1.0)
    assert len(fam.twist_pairs()) == 16
    with pytest.raises(ValueError):
        FrameFamily(lam[1:2], np.zeros((1, 1, 1, 3, 3)), 1.0, 1.0)


def test_difference_stencils_on_polynomials():
    x = np.linspace(0.0, 1.0, 11)
    h = x[1] - x[0]
    np.testing.assert_allclose(diff4(x**4, h, 0), 4 * x**3, atol=1e-10)
    np.testing.assert_allclose(diff2(x**2, h, 0), 2 * x, atol=1e-12)
    np.testing.assert_allclose(midpoints(x**3), (x[:-1] + h / 2) ** 3, atol=1e-14)
    with pytest.raises(ValueError):
        diff4(x[:4], h, 0)


def test_diff4_convergence():
    err = []
    for n in (33, 65):
        x = np.linspace(0, 2, n)
        err.append(np.abs(diff4(np.sin(3 * x), x[1] - x[0], 0) - 3 * np.cos(3 * x)).max())
    assert 12 < err[0] / err[1] < 40


def test_vacuum_frames_match_expm():
    # A_x and A_y of the vacuum commute, so F = expm(x A_x + y A_y)
    n = 65
    h = 1.0 / (n - 1)
    grid = integrate_flow(vacuum_state(0, 0.9 + 0.2j), n, n, h)
    conn = ConnectionField.from_state_grid(grid)
    lam = np.exp(0.3j)
    F = integrate_frame(conn, lam)
    Ax, Ay = conn.at(lam)
    for i, j in [(0, 0), (10, 50), (64, 64), (64, 0)]:
        expect = scipy.linalg.expm(i * h * Ax[0, 0] + j * h * Ay[0, 0])
        np.testing.assert_allclose(F[i, j], expect, atol=5e-8)
    assert np.array_equal(F[0, 0], np.eye(3))


def test_commuting_constant_connection(rng):
    U = random_unitary(rng)
    A = U @ np.diag([1.0j, -0.5j, 0.2j]) @ dagger(U)
    B = U @ np.diag([0.3j, 0.7j, -1j]) @ dagger(U)
    conn = ConnectionField.constant(A, B, 33, 33, 1 / 32, 1 / 32)
    F = integrate_frame(conn)
    np.testing.assert_allclose(F[-1, -1], scipy.linalg.expm(A + B), atol=1e-10)
    assert monodromy_defect(F, 8, axis=0) < 1e-10


def test_curvature_gate(rng):
    A = random_complex(rng)
    A = 0.5 * (A - dagger(A))
    B = random_complex(rng)
    B = 0.5 * (B - dagger(B))
    conn = ConnectionField.constant(A, B, 9, 9, 0.1, 0.1)
    assert flatness_residual(conn).max() > 1e-3
    with pytest.raises(CurvatureTooLarge):
        integrate_frame(conn)
    with pytest.raises(ValueError):
        integrate_frame(conn, lam=2.0, flat_tol=None)


def test_flatness_is_second_order():
    s = random_admissible_state(0, seed=1)
    res = []
    for n in (33, 65):
        grid = integrate_flow(s, n, n, 1 / (n - 1))
        res.append(flatness_residual(ConnectionField.from_state_grid(grid), 1j, 2).max())
    assert 3.5 < res[0] / res[1] < 4.5


def test_family_twist_and_unitarity(family65):
    assert family65.unitarity_residual() < 1e-12
    assert len(family65.twist_pairs()) == 8
    assert family65.twist_residual() < 1e-10


def test_threads_agree(flow65):
    _, conn = flow65
    lam = default_lambdas(4)
    a = integrate_frame_family(conn, lam, threads=1)
    b = integrate_frame_family(conn, lam, threads=3)
    np.testing.assert_array_equal(a.frames, b.frames)


def test_immersion_residuals_from_flow(family65):
    imm = extract_immersion(family65.base, family65.hx, family65.hy)
    assert imm.residual_max("norm") < 1e-12
    assert imm.residual_max("legendrian") < 1e-4
    assert imm.residual_max("conformality_norm") < 1e-3
    np.testing.assert_allclose(imm.u_hat[0, 0], [0, 0, 1], atol=0)


def test_conserved_loop(flow65, family65):
    grid, _ = flow65
    loop, drift = conserved_loop(family65, grid)
    assert loop.distance(grid.loop(0, 0)) == 0
    assert drift < 1e-6


def test_based_loop_transform(flow65, family65):
    _, conn = flow65
    E, (gx, gy) = based_loop_transform(family65, conn)
    i1 = family65.index_of(1.0)
    assert frob(E[i1] - np.eye(3)).max() < 1e-12
    assert frob(gx[i1]).max() == 0 and frob(gy[i1]).max() == 0
    # E_lam is unitary and Gamma_lam is skew-Hermitian on the circle
    assert frob(dagger(E) @ E - np.eye(3)).max() < 1e-10
    assert frob(gx + dagger(gx)).max() < 1e-12


def test_projector_and_transported_tau(rng):
    F = random_unitary(rng)
    P = perp_projector(F)
    np.testing.assert_allclose(P @ P, P, atol=1e-14)
    np.testing.assert_allclose(P @ F[:, 2], 0, atol=1e-14)
    M = random_complex(rng)
    np.testing.assert_allclose(tau_u(np.eye(3), M), tau_alg(M), atol=1e-15)
    assert frob(perp_projector(np.eye(3)) - PI0_PERP) == 0


def test_homogeneous_frames_recover_angle():
    F, imm = homogeneous_frames(HomogeneousParams("1/2", "1/4"), 32, 32)
    got = extract_immersion(F, imm.hx, imm.hy)
    X, Y = np.meshgrid(got.xs, got.ys, indexing="ij")
    expect = -0.5 * X + 0.25 * Y + np.pi
    np.testing.assert_allclose(got.beta, expect, atol=1e-12)


def test_unwrap_grid():
    x = np.linspace(0, 6, 40)
    phase = 1.3 * x[:, None] - 0.7 * x[None, :]
    wrapped = np.angle(np.exp(1j * phase))
    out = unwrap_grid(wrapped)
    np.testing.assert_allclose(out - out[0, 0], phase - phase[0, 0], atol=1e-12)
    with pytest.raises(BranchJump):
        unwrap_grid(np.angle(np.exp(2.9j * np.arange(40.0)[:, None] + 0 * phase)))


def test_harmonicity_residual():
    x = np.linspace(0, 1, 17)
    X, Y = np.meshgrid(x, x, indexing="ij")
    h = x[1] - x[0]
    assert harmonicity_residual(2 * X - 3 * Y + 1, h) < 1e-12
    assert harmonicity_residual(X**2 - Y**2, h) < 1e-10
    assert harmonicity_residual(X**2, h) == pytest.approx(2.0)


def test_gauge_round_trip_vacuum():
    S = su2_generator(0.7, 0.3 + 0.2j)
    family, grid, conn, G0 = hand_built_quasi_finite(vacuum_state(0), 33, S)
    res = gauge_to_finite_type(family, grid, conn)
    assert res.residual < 1e-5
    np.testing.assert_allclose(res.G, dagger(G0), atol=1e-10)
    assert res.family.unitarity_residual() < 1e-10


def test_gauge_round_trip_flow():
    S = su2_generator(0.4, -0.5j)
    family, grid, conn, G0 = hand_built_quasi_finite(random_admissible_state(0, seed=1), 65, S)
    res = gauge_to_finite_type(family, grid, conn)
    assert res.residual < 1e-5
    assert frob(res.G - dagger(G0)).max() < 1e-7
    assert res.lax_residual < 1e-2


def test_quasi_finite_defect_rejects_bad_data(flow65):
    grid, conn = flow65
    bx, by = quasi_finite_defect(grid, conn)
    assert frob(bx).max() < 1e-15 and frob(by).max() < 1e-15
    bad = ConnectionField(conn.ax.copy(), conn.ay, conn.hx, conn.hy)
    bad.ax[..., 2, 2, 2] += 0.1j
    with pytest.raises(NotInU3C0):
        quasi_finite_defect(grid, bad)
