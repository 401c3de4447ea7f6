"""Dense 3x3 complex matrix kernels and the fixed structural constants.

Matrices are plain ``numpy`` complex arrays of shape ``(3, 3)``; every kernel
also accepts a stack ``(..., 3, 3)`` and works along the last two axes.
2x2 objects (su(2), the Borel group) live in the upper-left block.

All norms are Frobenius norms.
"""
import numpy as np

from .errors import NotSkewHermitian, Singular

DEFAULT_TOL = 1e-10

J = np.array([[0.0, -1.0], [1.0, 0.0]], dtype=complex)
EPSILON = 0.5 * np.array([1.0, -1.0j])
EPSILON_BAR = 0.5 * np.array([1.0, 1.0j])
PI0_PERP = np.diag([1.0, 1.0, 0.0]).astype(complex)
ID3 = np.eye(3, dtype=complex)

# block-diagonal helpers diag(J, 1) and diag(-J, 1) used by the automorphism
JJ = np.eye(3, dtype=complex)
JJ[:2, :2] = J
MJ = np.eye(3, dtype=complex)
MJ[:2, :2] = -J


def check_structural_constants(tol=1e-15):
    """Assert the algebraic identities the rest of the package relies on."""
    I2 = np.eye(2)
    assert np.abs(J @ J + I2).max() <= tol
    assert np.abs(J @ EPSILON - 1j * EPSILON).max() <= tol
    assert np.abs(J @ EPSILON_BAR + 1j * EPSILON_BAR).max() <= tol
    assert np.abs(PI0_PERP @ PI0_PERP - PI0_PERP).max() <= tol
    assert np.abs(PI0_PERP - PI0_PERP.conj().T).max() <= tol
    return True


check_structural_constants()


def dagger(M):
    return np.conj(np.swapaxes(M, -1, -2))


def frob(M):
    """Frobenius norm over the last two axes."""
    return np.sqrt(np.sum(np.abs(M) ** 2, axis=(-2, -1)))


def bracket(M, N):
    """Commutator ``MN - NM``."""
    return M @ N - N @ M


def is_skew_hermitian(M, tol=DEFAULT_TOL):
    return bool(np.all(frob(M + dagger(M)) <= tol))


def is_unitary(M, tol=DEFAULT_TOL):
    n = M.shape[-1]
    return bool(np.all(frob(dagger(M) @ M - np.eye(n)) <= tol))


def is_traceless(M, tol=DEFAULT_TOL):
    return bool(np.all(np.abs(np.trace(M, axis1=-2, axis2=-1)) <= tol))


def unitarity_defect(M):
    n = M.shape[-1]
    return frob(dagger(M) @ M - np.eye(n))


def mexp_skew(M, tol=DEFAULT_TOL):
    """Exponential of a skew-Hermitian matrix (or stack).

    Uses the unitary eigendecomposition of the Hermitian matrix ``iM``, so the
    result is unitary up to roundoff.
    """
    M = np.asarray(M, dtype=complex)
    if not is_skew_hermitian(M, tol):
        raise NotSkewHermitian(
            f"skew-Hermitian defect {np.max(frob(M + dagger(M))):.3e} > {tol:g}")
    H = 1j * M
    H = 0.5 * (H + dagger(H))
    w, V = np.linalg.eigh(H)
    # M = -i V diag(w) V^dagger
    return (V * np.exp(-1j * w)[..., None, :]) @ dagger(V)


def polar_unitarize(M, max_defect=0.5):
    """Unitary polar factor ``M (M^dagger M)^(-1/2)``.

    This is the nearest unitary matrix to ``M`` in Frobenius norm. Intended for
    drift control, so ``M`` must already be close to unitary.
    """
    M = np.asarray(M, dtype=complex)
    H = dagger(M) @ M
    w, V = np.linalg.eigh(0.5 * (H + dagger(H)))
    if np.any(w <= 1e-14 * np.maximum(1.0, np.max(np.abs(w)))):
        raise Singular("matrix is not invertible")
    defect = np.max(frob(H - np.eye(M.shape[-1])))
    if defect >= max_defect:
        raise Singular(f"matrix too far from unitary (defect {defect:.3e})")
    inv_sqrt = (V * (1.0 / np.sqrt(w))[..., None, :]) @ dagger(V)
    return M @ inv_sqrt


def embed2(g, corner=0.0):
    """Place 2x2 block(s) in the upper-left of 3x3 matrices.

    ``corner`` is the (3, 3) entry: 0 for algebra elements, 1 for group ones.
    """
    g = np.asarray(g, dtype=complex)
    out = np.zeros(g.shape[:-2] + (3, 3), dtype=complex)
    out[..., :2, :2] = g
    out[..., 2, 2] = corner
    return out


def random_complex(rng, shape=(3, 3), scale=1.0):
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def random_skew_hermitian(rng, shape=(3, 3), scale=1.0):
    M = random_complex(rng, shape, scale)
    return 0.5 * (M - dagger(M))


def random_unitary(rng, n=3):
    Q, R = np.linalg.qr(random_complex(rng, (n, n)))
    d = np.diagonal(R)
    return Q * (d / np.abs(d))
