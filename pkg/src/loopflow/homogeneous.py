"""The homogeneous Hamiltonian stationary tori and their exact data.

For ``r1^2 + r2^2 + r3^2 = 1`` the map

    f(x, y) = (r1 e^{i((1-r1^2)x - r2^2 y)}, r2 e^{i(-r1^2 x + (1-r2^2)y)},
               r3 e^{i(-r1^2 x - r2^2 y)})

is a Legendrian immersion into S^5 whose Lagrangian angle is affine. The
module provides the immersion with exact derivatives, a unitary framing,
the Maslov class, cover multiplicities, a numerical holonomy oracle and the
constant loop connection in conformal coordinates.
"""
from dataclasses import dataclass
from fractions import Fraction
from math import lcm

import numpy as np

from .errors import IrrationalInput
from .frame_geometry import ConnectionField, ImmersionData, unwrap_grid
from .killing_field import ConnectionData
from .loop_algebra import eigenspace_project
from .matrix_core import PI0_PERP, dagger, frob, mexp_skew


def parse_fraction(value):
    """``'1/3'``, ``Fraction`` or int give an exact value; floats stay floats."""
    if isinstance(value, (Fraction, int)):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value.strip())
    return float(value)


@dataclass(frozen=True)
class HomogeneousParams:
    """Squared radii ``r1^2`` and ``r2^2``; ``r3`` is derived."""

    r1sq: object
    r2sq: object

    def __post_init__(self):
        object.__setattr__(self, "r1sq", parse_fraction(self.r1sq))
        object.__setattr__(self, "r2sq", parse_fraction(self.r2sq))
        if not (0 < self.r1sq < 1 and 0 < self.r2sq < 1 and self.r1sq + self.r2sq < 1):
            raise ValueError("need r1^2, r2^2 > 0 and r1^2 + r2^2 < 1")

    @property
    def rational(self):
        return isinstance(self.r1sq, Fraction) and isinstance(self.r2sq, Fraction)

    @property
    def r3sq(self):
        return 1 - self.r1sq - self.r2sq

    @property
    def radii(self):
        return np.sqrt([float(self.r1sq), float(self.r2sq), float(self.r3sq)])

    @property
    def generators(self):
        """Diagonal ``A``, ``B`` in u(3) with ``f(x, y) = exp(xA + yB) f(0, 0)``."""
        s1, s2 = float(self.r1sq), float(self.r2sq)
        A = np.diag([1j * (1 - s1), -1j * s1, -1j * s1])
        B = np.diag([-1j * s2, 1j * (1 - s2), -1j * s2])
        return A, B

    @property
    def is_clifford(self):
        return self.r1sq == Fraction(1, 3) and self.r2sq == Fraction(1, 3)


def grid_axes(nx, ny, lx=2 * np.pi, ly=2 * np.pi):
    """Periodic grid without the closing row: spacing ``l / n``."""
    return np.arange(nx) * (lx / nx), np.arange(ny) * (ly / ny), lx / nx, ly / ny


def _phases(params, x, y):
    A, B = params.generators
    a, b = np.diagonal(A).imag, np.diagonal(B).imag
    return x[..., None] * a + y[..., None] * b, 1j * a, 1j * b


def homogeneous_immersion(params, nx=128, ny=128, lx=2 * np.pi, ly=2 * np.pi):
    """The lift ``f`` on a grid, with exact first derivatives and closed-form angle."""
    xs, ys, hx, hy = grid_axes(nx, ny, lx, ly)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    ph, ka, kb = _phases(params, X, Y)
    u = params.radii * np.exp(1j * ph)
    cx, cy, c0 = lagrangian_angle_homogeneous(params)
    beta = float(cx) * X + float(cy) * Y + c0
    return ImmersionData(u, beta, hx, hy, du_dx=ka * u, du_dy=kb * u)


def homogeneous_frames(params, nx=128, ny=128, lx=2 * np.pi, ly=2 * np.pi):
    """Unitary frames ``(e1, e2, f)`` with ``e1`` along ``df/dx``."""
    imm = homogeneous_immersion(params, nx, ny, lx, ly)
    r1, r2, r3 = params.radii
    s1 = float(params.r1sq)
    e1 = imm.du_dx / (r1 * np.sqrt(1 - s1))
    e2 = (np.sqrt(1 - s1) / r2 * imm.du_dy + r1 * r2 * e1) / r3
    return np.stack([e1, e2, imm.u_hat], axis=-1), imm


def angle_from_frames(F):
    return unwrap_grid(np.angle(np.linalg.det(F)))


def lagrangian_angle_homogeneous(params):
    """Affine coefficients ``(c_x, c_y, c_0)`` of the Lagrangian angle."""
    return 1 - 3 * params.r1sq, 1 - 3 * params.r2sq, np.pi


def maslov_class(params):
    """Angle increments over the loops ``(2 pi t, 0)`` and ``(0, 2 pi t)``, in units of 2 pi."""
    cx, cy, _ = lagrangian_angle_homogeneous(params)
    return cx, cy


def legendrian_closure(params):
    """Smallest ``(k_x, k_y)`` making ``k * (1 - 3 r^2)`` integral."""
    if not params.rational:
        raise IrrationalInput("closure needs rational r1^2 and r2^2")
    mx, my = maslov_class(params)
    return mx.denominator, my.denominator


def holonomy(params, direction="x", n=256):
    """Phase picked up by the horizontal lift around one period loop.

    The loop ``t -> f(t e)`` is closed in projective space. The section
    ``g = f conj(f3) / |f3|`` is periodic in C^3; the horizontal lift is
    ``e^{i theta} g`` with ``theta' = -Im <g', g>``, integrated with
    spectral differentiation and the trapezoid rule.
    """
    t = 2 * np.pi * np.arange(n) / n
    zero = np.zeros_like(t)
    x, y = (t, zero) if direction == "x" else (zero, t)
    f = params.radii * np.exp(1j * _phases(params, x, y)[0])
    g = f * (np.conj(f[:, 2]) / np.abs(f[:, 2]))[:, None]
    k = np.fft.fftfreq(n, d=1.0 / n)
    dg = np.fft.ifft(1j * k[:, None] * np.fft.fft(g, axis=0), axis=0)
    rate = -np.imag(np.sum(dg * np.conj(g), axis=-1))
    theta = np.sum(rate) * (2 * np.pi / n)
    return complex(np.exp(1j * theta))


def closure_from_holonomy(params, kmax=64, tol=1e-10, n=256):
    """Smallest ``k`` with ``h^(3k) = 1`` in each direction.

    The cube accounts for the cyclic group of order 3 acting on the lift
    through the centre of SU(3).
    """
    out = []
    for d in ("x", "y"):
        h = holonomy(params, d, n)
        k = next((k for k in range(1, kmax + 1) if abs(h ** (3 * k) - 1) < tol), None)
        out.append(k)
    return tuple(out)


def metric(params):
    """Constant first fundamental form ``g_ij = Re <f_i, f_j>``."""
    A, B = params.generators
    p = params.radii.astype(complex)
    fx, fy = A @ p, B @ p
    re = lambda u, v: float(np.real(np.vdot(v, u)))
    return np.array([[re(fx, fx), re(fx, fy)], [re(fy, fx), re(fy, fy)]])


def conformal_change(params):
    """``L`` with ``(x, y) = L (s, t)`` turning the metric into the identity."""
    w, V = np.linalg.eigh(metric(params))
    return V @ np.diag(w ** -0.5) @ V.T


def conformal_connection(params, nx=5, ny=5, hs=0.1, ht=None):
    """The constant loop connection of the torus in conformal coordinates.

    Returns ``(ConnectionField, ConnectionData)``. The frame at the origin is
    ``(f_s, f_t, f)`` (orthonormal there), and the loop family is formed by
    placing the eigenspace components of ``A(d/dz)`` at degrees -2, -1, 0.
    """
    ht = hs if ht is None else ht
    A, B = params.generators
    L = conformal_change(params)
    As, At = L[0, 0] * A + L[1, 0] * B, L[0, 1] * A + L[1, 1] * B
    p = params.radii.astype(complex)
    for sign in (1.0, -1.0):
        F0 = np.stack([As @ p, sign * At @ p, p], axis=-1)
        Fi = dagger(F0)
        cs, ct = Fi @ As @ F0, sign * (Fi @ At @ F0)
        az = 0.5 * (cs - 1j * ct)
        if frob(eigenspace_project(az, 1)) < 1e-12:
            break
    else:  # pragma: no cover - both orientations fail only for invalid params
        raise ValueError("no orientation gives a conformal Legendrian frame")
    lead, X, C = (eigenspace_project(az, 2), eigenspace_project(az, 3),
                  eigenspace_project(az, 0))
    a = complex(-1j * lead[0, 0])
    coeffs_z = np.stack([lead, X, C, np.zeros((3, 3)), np.zeros((3, 3))])
    coeffs_zb = -dagger(coeffs_z[::-1])
    ax = coeffs_z + coeffs_zb
    ay = 1j * (coeffs_z - coeffs_zb)
    field = ConnectionField.constant(ax, ay, nx, ny, hs, ht, kmin=-2)
    return field, ConnectionData(X, C, a, hs, ht)


def flatness_all_lambda(field):
    """Max over degrees of ``[A_x, A_y]`` for a constant loop connection."""
    from .loop_algebra import loop_bracket
    br, _ = loop_bracket(field.ax[0, 0], field.kmin, field.ay[0, 0], field.kmin)
    return float(frob(br).max())


def cover_lcm(params):
    kx, ky = legendrian_closure(params)
    return lcm(kx, ky)


__all__ = [
    "HomogeneousParams", "homogeneous_immersion", "homogeneous_frames",
    "lagrangian_angle_homogeneous", "maslov_class", "legendrian_closure",
    "holonomy", "closure_from_holonomy", "metric", "conformal_change",
    "conformal_connection", "flatness_all_lambda", "angle_from_frames",
    "parse_fraction", "grid_axes", "PI0_PERP", "mexp_skew",
]
