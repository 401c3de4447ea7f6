"""Formal Killing fields built from the recursion on ``ad pi``.

With ``A(d/dz) = lam^-2 ia pi + lam^-1 X + C`` a formal solution of
``dY = [Y, A]`` is sought as ``Y = (1 + W)^-1 lam^-2 ia pi (1 + W)`` with
``W = sum_n W_n lam^n`` taking values in the off-block part ``V_perp``.
Multiplying by a polynomial ``P(lam^-4)`` and truncating gives candidates
for polynomial Killing fields whose defect ``R`` has only four Fourier modes.
"""
from dataclasses import dataclass

import numpy as np

from .errors import GridTooCoarse, TruncationTooShallow, ZeroAngleDerivative
from .loop_algebra import eigenspace_project, loop_bracket, restrict_band, twist_defect
from .matrix_core import PI0_PERP, bracket, dagger, frob

DEFAULT_ORDER = 12
ZERO_A = 1e-12


def v_decompose(M):
    """Split into the block-diagonal part (kernel of ad pi) and the off-block part."""
    M = np.asarray(M, dtype=complex)
    v = np.zeros_like(M)
    v[..., :2, :2] = M[..., :2, :2]
    v[..., 2, 2] = M[..., 2, 2]
    return v, M - v


def ad_pi(M):
    return bracket(PI0_PERP, M)


# ---------------------------------------------------------------------------
# derivatives


def _d_axis(a, h, axis, scheme):
    if scheme == "central":
        if a.shape[axis] < 3:
            return np.zeros_like(a)
        return np.gradient(a, h, axis=axis, edge_order=2)
    if scheme == "spectral":
        n = a.shape[axis]
        k = 2j * np.pi * np.fft.fftfreq(n, d=h)
        if n % 2 == 0:
            k[n // 2] = 0
        shape = [1] * a.ndim
        shape[axis] = n
        return np.fft.ifft(np.fft.fft(a, axis=axis) * k.reshape(shape), axis=axis)
    raise ValueError("scheme must be 'central' or 'spectral'")


def d_z(a, hx, hy, scheme="central"):
    """``d/dz = (d/dx - i d/dy) / 2`` on grids indexed ``(x, y, ...)``."""
    return 0.5 * (_d_axis(a, hx, 0, scheme) - 1j * _d_axis(a, hy, 1, scheme))


def d_zbar(a, hx, hy, scheme="central"):
    return 0.5 * (_d_axis(a, hx, 0, scheme) + 1j * _d_axis(a, hy, 1, scheme))


# ---------------------------------------------------------------------------
# connection data


@dataclass
class ConnectionData:
    """``X = A_-1(d/dz)`` and ``C = A_0(d/dz)`` on a grid, plus the constant ``a``.

    ``scheme`` selects central or (for periodic grids without the closing
    row) spectral differentiation.
    """

    X: np.ndarray
    C: np.ndarray
    a: complex
    hx: float = 1.0
    hy: float = 1.0
    scheme: str = "central"

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=complex)
        self.C = np.asarray(self.C, dtype=complex)
        if self.X.ndim == 2:
            self.X = self.X[None, None]
        if self.C.ndim == 2:
            self.C = np.broadcast_to(self.C, self.X.shape).copy()

    @property
    def shape(self):
        return self.X.shape[:2]

    def dz(self, a):
        return d_z(a, self.hx, self.hy, self.scheme)

    def dzbar(self, a):
        return d_zbar(a, self.hx, self.hy, self.scheme)

    def structure_residual(self):
        """Distance of ``X`` from ``u(3)^C_-1`` and of ``C`` from ``u(3)^C_0``."""
        return (float(twist_defect(self.X, 3).max()), float(twist_defect(self.C, 0).max()))

    def a_z(self):
        """Coefficients of ``A(d/dz)`` on degrees -2..0."""
        lead = np.broadcast_to(1j * self.a * PI0_PERP, self.X.shape)
        return np.stack([lead, self.X, self.C], axis=-3)

    def a_zbar(self):
        """Coefficients of ``A(d/dzbar)`` on degrees 0..2, fixed by reality."""
        lead = np.broadcast_to(1j * np.conj(self.a) * PI0_PERP, self.X.shape)
        return np.stack([-dagger(self.C), -dagger(self.X), lead], axis=-3)

    @classmethod
    def from_connection_field(cls, conn, tol=1e-8, scheme="central"):
        """Read ``X``, ``C`` and ``a`` from a loop connection with band containing [-2, 0]."""
        k = lambda deg: -conn.kmin + deg
        az = lambda deg: 0.5 * (conn.ax[..., k(deg), :, :] - 1j * conn.ay[..., k(deg), :, :])
        lead = az(-2)
        a = complex(np.mean(-1j * lead[..., 0, 0]))
        drift = frob(lead - 1j * a * PI0_PERP).max()
        if drift > tol:
            raise ValueError(f"leading coefficient is not the constant ia pi ({drift:.3e})")
        return cls(az(-1), az(0), a, conn.hx, conn.hy, scheme)


# ---------------------------------------------------------------------------
# recursion


@dataclass
class KillingSeries:
    """The coefficients ``W_0 .. W_N`` and the derived truncation of ``Y``.

    ``W`` has shape ``(N + 1, nx, ny, 3, 3)``; ``Y`` has shape
    ``(nx, ny, N + 1, 3, 3)`` holding degrees ``-2 .. N - 2``.
    """

    conn: ConnectionData
    W: np.ndarray
    Y: np.ndarray

    @property
    def N(self):
        return self.W.shape[0] - 1

    @property
    def a(self):
        return self.conn.a

    @property
    def y_kmin(self):
        return -2

    def y(self, m):
        return self.Y[..., m + 2, :, :]

    def invariants(self):
        """Residuals of the structural properties of the series."""
        a, X = self.a, self.conn.X
        w1 = -1j / a * ad_pi(X)
        return {
            "w0": float(frob(self.W[0]).max()),
            "w1": float(frob(self.W[1] - w1).max()) if self.N >= 1 else 0.0,
            "vperp": float(max(frob(v_decompose(w)[0]).max() for w in self.W)),
            "twist": float(max(twist_defect(w, n % 4).max() for n, w in enumerate(self.W))),
            "lead_m2": float(frob(self.y(-2) - 1j * a * PI0_PERP).max()),
            "lead_m1": float(frob(self.y(-1) - X).max()) if self.N >= 1 else 0.0,
        }


def killing_recursion(conn, N=DEFAULT_ORDER, with_derivatives=True):
    """Run the recursion for ``W_n`` up to order ``N`` and assemble ``Y``.

    ``with_derivatives=False`` drops the ``d/dz`` terms, which is exact for
    spatially constant data.
    """
    a = conn.a
    if abs(a) < ZERO_A:
        raise ZeroAngleDerivative("a = 0: the recursion needs a nonzero angle derivative")
    if N < 1:
        raise ValueError("N must be at least 1")
    X, C = conn.X, conn.C
    W = np.zeros((N + 1,) + X.shape, dtype=complex)
    W[1] = -1j / a * ad_pi(X)
    for n in range(2, N + 1):
        S = np.zeros(X.shape, dtype=complex)
        for k in range(1, n - 1):
            # W_0 = 0, so only 1 <= k <= n - 2 contributes
            S += W[k] @ X @ W[n - 1 - k]
        S += bracket(C, W[n - 2])
        if with_derivatives:
            S += conn.dz(W[n - 2])
        W[n] = 1j / a * ad_pi(S)
    return KillingSeries(conn, W, _assemble_y(W, a))


def _assemble_y(W, a):
    """``Y = lam^-2 ia (1 + W)^-1 pi (1 + W)`` degree by degree.

    The inverse is the geometric-series recursion ``U_n = -sum_k W_k U_{n-k}``.
    """
    N = W.shape[0] - 1
    shape = W.shape[1:]
    U = np.zeros_like(W)
    U[0] = np.eye(3)
    for n in range(1, N + 1):
        for k in range(1, n + 1):
            U[n] -= W[k] @ U[n - k]
    T = W.copy()
    T[0] = np.eye(3)
    Y = np.zeros(shape[:-2] + (N + 1,) + shape[-2:], dtype=complex)
    for n in range(N + 1):
        acc = np.zeros(shape, dtype=complex)
        for j in range(n + 1):
            acc += U[j] @ PI0_PERP @ T[n - j]
        Y[..., n, :, :] = 1j * a * acc
    return Y


def killing_residual_by_degree(series, margin=0):
    """Coefficients of ``dY - [Y, A]`` split by direction and degree.

    ``margin`` drops that many nodes at every edge, where nested one-sided
    differences are least accurate.

    The ``d/dz`` part at degree ``m`` needs ``Y`` through degree ``m + 2`` and
    is reported for ``m <= N - 4``; the ``d/dzbar`` part needs only ``Y``
    through ``m`` and is reported for ``m <= N - 2``. Returns two dicts
    ``{degree: max norm over the grid}``.
    """
    conn = series.conn
    Y = series.Y
    N = series.N
    out = {}
    for name, A, akmin, deriv, top in (("z", conn.a_z(), -2, conn.dz, N - 4),
                                        ("zbar", conn.a_zbar(), 0, conn.dzbar, N - 2)):
        br, k0 = loop_bracket(Y, -2, A, akmin)
        br, _ = restrict_band(br, k0, -2, N - 2)
        res = deriv(Y) - br
        if margin:
            res = res[margin:-margin, margin:-margin]
        out[name] = {m: float(frob(res[..., m + 2, :, :]).max(initial=0.0))
                     for m in range(-2, top + 1)}
    return out["z"], out["zbar"]


def killing_residual(series, max_degree=None, margin=0):
    """Max over nodes and retained degrees of ``|dY - [Y, A]|``."""
    rz, rzb = killing_residual_by_degree(series, margin)
    vals = [v for m, v in list(rz.items()) + list(rzb.items())
            if max_degree is None or m <= max_degree]
    return max(vals, default=0.0)


def stability_scan(conn, orders, degree):
    """Residual at degrees ``<= degree`` for increasing truncation orders.

    A residual that never decreases as the order grows signals derivative
    noise: :class:`GridTooCoarse` is raised.
    """
    vals = [killing_residual(killing_recursion(conn, n), degree) for n in orders]
    if len(vals) > 1 and vals[0] > 1e-8 and all(b >= a for a, b in zip(vals, vals[1:])):
        raise GridTooCoarse(f"residual does not decrease with the order: {vals}")
    return vals


# ---------------------------------------------------------------------------
# polynomial candidates


@dataclass
class Candidate:
    """``Z_<=`` and the defect ``R = dZ_<= + [A, Z_<=]``.

    ``R`` maps a degree in {-1, 0, 1, 2} to the pair of grids
    ``(R(d/dz), R(d/dzbar))`` computed directly; ``R_formula`` holds the
    same pairs from the closed expressions in ``Z_-1`` and ``Z_0``.
    """

    Z: np.ndarray
    kmin: int
    R: dict
    R_formula: dict
    agreement: float
    out_of_band: float


def polynomial_candidate(P, series):
    """Truncate ``P(lam) Y`` to degrees ``-2-4p .. 0``, ``P = sum a_k lam^-4k``."""
    conn = series.conn
    P = [complex(c) for c in P]
    p = len(P) - 1
    nodes = series.Y.shape[:-3]
    lo = -2 - 4 * max(p, 0)
    Z = np.zeros(nodes + (1 - lo, 3, 3), dtype=complex)
    if P and 4 * p > series.N - 2:
        raise TruncationTooShallow(f"need N >= {4 * p + 2} for a polynomial of degree {p}")
    for m in range(lo, 1):
        for k, c in enumerate(P):
            if c != 0 and -2 <= m + 4 * k <= series.N - 2:
                Z[..., m - lo, :, :] += c * series.y(m + 4 * k)
    Rz, kz = _defect(Z, lo, conn.a_z(), -2, conn.dz)
    Rzb, kzb = _defect(Z, lo, conn.a_zbar(), 0, conn.dzbar)

    def mode(c, k0, m):
        i = m - k0
        return c[..., i, :, :] if 0 <= i < c.shape[-3] else np.zeros(nodes + (3, 3), complex)

    R = {m: (mode(Rz, kz, m), mode(Rzb, kzb, m)) for m in (-1, 0, 1, 2)}
    out = 0.0
    for c, k0 in ((Rz, kz), (Rzb, kzb)):
        for i in range(c.shape[-3]):
            if not -1 <= k0 + i <= 2:
                out = max(out, float(frob(c[..., i, :, :]).max(initial=0)))
    Rf = _defect_formula(Z[..., -lo - 1, :, :], Z[..., -lo, :, :], conn)
    agree = max(float(frob(R[m][j] - Rf[m][j]).max(initial=0)) for m in R for j in (0, 1))
    return Candidate(Z, lo, R, Rf, agree, out)


def _defect(Z, zk, A, ak, deriv):
    br, k0 = loop_bracket(A, ak, Z, zk)
    dZ, _ = restrict_band(deriv(Z), zk, k0, k0 + br.shape[-3] - 1)
    return dZ + br, k0


def _defect_formula(z_m1, z_0, conn):
    """``R`` from ``Z_-1`` and ``Z_0`` alone."""
    X, C = conn.X, conn.C
    A1 = -dagger(X)
    A2 = 1j * np.conj(conn.a) * PI0_PERP
    zero = np.zeros_like(z_0)
    return {
        -1: (conn.dz(z_m1) + bracket(X, z_0) + bracket(C, z_m1), zero),
        0: (conn.dz(z_0) + bracket(C, z_0), zero),
        1: (zero, bracket(A1, z_0) + bracket(A2, z_m1)),
        2: (zero, bracket(A2, z_0)),
    }


def fermeture_residual(cand, conn):
    """Defect of ``dbar R(dz) - d R(dzbar) = [A(dz), R(dzbar)] - [A(dzbar), R(dz)]``.

    Evaluated on ``R`` from the closed formulas, degree by degree.
    """
    nodes = conn.X.shape[:-2]
    rz = np.stack([cand.R_formula[m][0] for m in (-1, 0, 1, 2)], axis=-3)
    rzb = np.stack([cand.R_formula[m][1] for m in (-1, 0, 1, 2)], axis=-3)
    lhs = conn.dzbar(rz) - conn.dz(rzb)
    b1, k1 = loop_bracket(conn.a_z(), -2, rzb, -1)
    b2, k2 = loop_bracket(conn.a_zbar(), 0, rz, -1)
    lo, hi = min(k1, k2, -1), max(k1 + b1.shape[-3], k2 + b2.shape[-3], 3) - 1
    full = (restrict_band(lhs, -1, lo, hi)[0] - restrict_band(b1, k1, lo, hi)[0]
            + restrict_band(b2, k2, lo, hi)[0])
    del nodes
    return float(frob(full).max(initial=0))


def eigenspace_residual_y(series):
    """Twist residual of the ``Y`` coefficients."""
    return float(max(twist_defect(series.y(m), m % 4).max() for m in range(-2, series.N - 1)))


def random_constant_data(rng, a=1.0, scale=0.5):
    """Constant ``X`` in ``u(3)^C_-1`` and ``C`` in ``u(3)^C_0`` with ``C`` in su(2)."""
    from .matrix_core import random_complex
    X = eigenspace_project(random_complex(rng, scale=scale), 3)
    C = random_complex(rng, scale=scale)
    C = eigenspace_project(0.5 * (C - dagger(C)), 0)
    return ConnectionData(X, C, a)
