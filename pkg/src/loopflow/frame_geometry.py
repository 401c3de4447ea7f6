"""Extended frames, the immersion they carry, and the based-loop picture.

Frames solve ``dF = F A`` with ``F(0, 0) = Id``; the immersion is the third
column of the frame at ``lam = 1`` and the Lagrangian angle is ``arg det F``.
The gauge step turns a quasi-finite-type solution into a finite-type one.
"""
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (BranchJump, CurvatureTooLarge, IwasawaFailure, LoopflowError,
                     NotInU3C0, TruncationError, UnitarityDrift)
from .lax_flow import StateGrid, band_for, connection_coeffs
from .loop_algebra import (based_split_coeffs, evaluate_coeffs, iwasawa_group_su2,
                           loop_bracket, loop_mul, restrict_band, tau_alg, tau_group)
from .matrix_core import ID3, PI0_PERP, dagger, frob, polar_unitarize, unitarity_defect

RENORM_EVERY = 16
FLAT_GATE = 1e-6
UNITARITY_TOL = 1e-8


def default_lambdas(n=16):
    """``e^{2 pi i j / n}``; contains 1 and, for ``4 | n``, every pair (lam, i lam)."""
    return np.exp(2j * np.pi * np.arange(n) / n)


def worker_count():
    try:
        return max(1, int(os.environ.get("LOOPFLOW_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# finite differences and interpolation


def _take(a, sl, axis):
    idx = [slice(None)] * a.ndim
    idx[axis] = sl
    return a[tuple(idx)]


def diff2(a, h, axis):
    """Second-order derivative along ``axis`` (central inside, one-sided at ends)."""
    return np.gradient(a, h, axis=axis, edge_order=2)


def diff4(a, h, axis):
    """Fourth-order derivative along ``axis``; needs at least 5 samples."""
    n = a.shape[axis]
    if n < 5:
        raise ValueError("fourth-order differences need at least 5 samples")
    out = np.empty_like(a)
    t = lambda s: _take(a, s, axis)

    def put(s, v):
        idx = [slice(None)] * a.ndim
        idx[axis] = s
        out[tuple(idx)] = v

    put(slice(2, -2), (t(slice(0, -4)) - 8 * t(slice(1, -3)) + 8 * t(slice(3, -1))
                       - t(slice(4, None))) / (12 * h))
    f = [t(i) for i in range(5)]
    put(0, (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h))
    put(1, (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * h))
    g = [t(n - 1 - i) for i in range(5)]
    put(n - 1, -(-25 * g[0] + 48 * g[1] - 36 * g[2] + 16 * g[3] - 3 * g[4]) / (12 * h))
    put(n - 2, -(-3 * g[0] - 10 * g[1] + 18 * g[2] - 6 * g[3] + g[4]) / (12 * h))
    return out


def midpoints(a, axis=0):
    """Values halfway between consecutive samples, by local cubic interpolation.

    RK4 needs the coefficient at half steps, which a node grid does not hold.
    Four-point stencils keep the interpolation error at ``O(h^4)``.
    """
    a = np.moveaxis(a, axis, 0)
    n = a.shape[0]
    if n < 2:
        raise ValueError("need at least two samples")
    if n == 2:
        out = 0.5 * (a[0] + a[1])[None]
    elif n == 3:
        out = np.stack([(3 * a[0] + 6 * a[1] - a[2]) / 8, (-a[0] + 6 * a[1] + 3 * a[2]) / 8])
    else:
        out = np.empty((n - 1,) + a.shape[1:], dtype=a.dtype)
        out[1:-1] = (-a[:-3] + 9 * a[1:-2] + 9 * a[2:-1] - a[3:]) / 16
        out[0] = (5 * a[0] + 15 * a[1] - 5 * a[2] + a[3]) / 16
        out[-1] = (5 * a[-1] + 15 * a[-2] - 5 * a[-3] + a[-4]) / 16
    return np.moveaxis(out, 0, axis)


# ---------------------------------------------------------------------------
# connections


@dataclass
class ConnectionField:
    """Loop-valued connection ``A = A_x dx + A_y dy`` sampled on a grid.

    ``ax`` and ``ay`` have shape ``(nx, ny, nk, 3, 3)`` and hold Fourier
    coefficients from degree ``kmin``.
    """

    ax: np.ndarray
    ay: np.ndarray
    hx: float
    hy: float
    kmin: int = -2

    @property
    def shape(self):
        return self.ax.shape[:2]

    def at(self, lam):
        return (evaluate_coeffs(self.ax, self.kmin, lam),
                evaluate_coeffs(self.ay, self.kmin, lam))

    @classmethod
    def from_state_grid(cls, grid: StateGrid):
        ax, ay = connection_coeffs(grid.coeffs, grid.p)
        return cls(ax, ay, grid.hx, grid.hy, -2)

    @classmethod
    def constant(cls, ax, ay, nx, ny, hx, hy, kmin=0):
        """Spatially constant connection. ``ax``/``ay`` are (nk, 3, 3) or a single matrix."""
        ax = np.asarray(ax, dtype=complex)
        ay = np.asarray(ay, dtype=complex)
        if ax.ndim == 2:
            ax, ay = ax[None], ay[None]
        shape = (nx, ny) + ax.shape
        return cls(np.broadcast_to(ax, shape).copy(), np.broadcast_to(ay, shape).copy(), hx, hy, kmin)


def flatness_residual(conn, lam=1.0, order=2):
    """Node-wise ``|d_x A_y - d_y A_x + [A_x, A_y]|`` at one spectral value.

    ``order=2`` uses central differences and returns the interior nodes only;
    ``order=4`` uses fourth-order stencils on the whole grid.
    """
    Ax, Ay = conn.at(lam)
    if order == 2:
        dxAy = (Ay[2:, 1:-1] - Ay[:-2, 1:-1]) / (2 * conn.hx)
        dyAx = (Ax[1:-1, 2:] - Ax[1:-1, :-2]) / (2 * conn.hy)
        a, b = Ax[1:-1, 1:-1], Ay[1:-1, 1:-1]
    elif order == 4:
        dxAy = diff4(Ay, conn.hx, 0)
        dyAx = diff4(Ax, conn.hy, 1)
        a, b = Ax, Ay
    else:
        raise ValueError("order must be 2 or 4")
    return frob(dxAy - dyAx + a @ b - b @ a)


# ---------------------------------------------------------------------------
# frames


def _rk4_frames(F, A0, Am, A1, h):
    k1 = F @ A0
    k2 = (F + 0.5 * h * k1) @ Am
    k3 = (F + 0.5 * h * k2) @ Am
    k4 = (F + h * k3) @ A1
    return F + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _march_frames(F0, A, h, renorm_every):
    """Integrate ``F' = F A`` through the samples of ``A`` along axis 0."""
    n = A.shape[0]
    mids = midpoints(A, 0)
    out = np.empty((n,) + F0.shape, dtype=complex)
    out[0] = F0
    F = F0
    for i in range(1, n):
        F = _rk4_frames(F, A[i - 1], mids[i - 1], A[i], h)
        if renorm_every and i % renorm_every == 0:
            F = polar_unitarize(F)
        out[i] = F
    return out


def integrate_frames_from_values(Ax, Ay, hx, hy, renorm_every=RENORM_EVERY, F0=None):
    """Frame grid from matrix-valued ``Ax``, ``Ay`` of shape ``(nx, ny, 3, 3)``.

    x-axis first, then every y-column in one batch.
    """
    F0 = ID3 if F0 is None else F0
    row = _march_frames(F0, Ax[:, 0], hx, renorm_every)                       # (nx, 3, 3)
    cols = _march_frames(row, np.swapaxes(Ay, 0, 1), hy, renorm_every)        # (ny, nx, 3, 3)
    F = np.swapaxes(cols, 0, 1)
    if renorm_every:
        # the last partial block of steps is not yet polished
        F = polar_unitarize(F)
        F[0, 0] = F0
    return np.ascontiguousarray(F)


def integrate_frame(conn, lam=1.0, flat_tol=FLAT_GATE, flat_order=4,
                    renorm_every=RENORM_EVERY, unitarity_tol=UNITARITY_TOL):
    """Solve ``dF = F A_lam`` on the grid of ``conn`` with ``F(0, 0) = Id``.

    The connection is refused with :class:`CurvatureTooLarge` when its
    flatness residual exceeds ``flat_tol``. Classical RK4 with cubic
    interpolation for half-step values and polar re-unitarization every
    ``renorm_every`` steps.
    """
    if abs(abs(lam) - 1.0) > 1e-12:
        raise ValueError("lambda must lie on the unit circle")
    if flat_tol is not None:
        res = flatness_residual(conn, lam, order=flat_order)
        if res.size and res.max() > flat_tol:
            raise CurvatureTooLarge(f"flatness residual {res.max():.3e} > {flat_tol:g}")
    Ax, Ay = conn.at(lam)
    F = integrate_frames_from_values(Ax, Ay, conn.hx, conn.hy, renorm_every)
    drift = unitarity_defect(F).max()
    if drift > unitarity_tol:
        raise UnitarityDrift(f"unitarity defect {drift:.3e} > {unitarity_tol:g}")
    return F


@dataclass
class FrameFamily:
    """Frames for several spectral values; ``frames`` has shape ``(nl, nx, ny, 3, 3)``."""

    lambdas: np.ndarray
    frames: np.ndarray
    hx: float
    hy: float

    def __post_init__(self):
        self.lambdas = np.asarray(self.lambdas, dtype=complex)
        if self.index_of(1.0) is None:
            raise ValueError("the sample lam = 1 is required")

    def index_of(self, lam, tol=1e-12):
        d = np.abs(self.lambdas - lam)
        i = int(np.argmin(d))
        return i if d[i] <= tol else None

    def at(self, lam):
        i = self.index_of(lam)
        if i is None:
            raise KeyError(f"lambda {lam} not sampled")
        return self.frames[i]

    @property
    def base(self):
        return self.at(1.0)

    def twist_pairs(self):
        return [(i, j) for i, lam in enumerate(self.lambdas)
                if (j := self.index_of(1j * lam)) is not None]

    def twist_residual(self, pairs=None):
        """Max ``|tau(F_lam) - F_{i lam}|`` over sampled pairs."""
        pairs = self.twist_pairs() if pairs is None else pairs
        worst = 0.0
        for i, j in pairs:
            worst = max(worst, float(frob(tau_group(self.frames[i]) - self.frames[j]).max()))
        return worst

    def unitarity_residual(self):
        return float(unitarity_defect(self.frames).max())


def integrate_frame_family(conn, lambdas=None, threads=None, **kw):
    """Frames at every sample; samples are independent and may run in threads."""
    lambdas = default_lambdas() if lambdas is None else np.asarray(lambdas, dtype=complex)
    threads = worker_count() if threads is None else threads
    run = lambda lam: integrate_frame(conn, lam, **kw)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            frames = list(pool.map(run, lambdas))
    else:
        frames = [run(lam) for lam in lambdas]
    return FrameFamily(lambdas, np.stack(frames), conn.hx, conn.hy)


def monodromy_defect(F, nperiod, axis=0):
    """``max |F(s + L) - M F(s)|`` with ``M = F(L)`` along one grid axis.

    For a connection periodic with period ``L`` (``nperiod`` grid steps) both
    sides solve the same frame equation, so the defect measures closure
    error of the integration.
    """
    F = np.moveaxis(F, axis, 0)
    M = F[nperiod, 0]
    return float(frob(F[nperiod:] - M @ F[:F.shape[0] - nperiod]).max())


# ---------------------------------------------------------------------------
# immersion


@dataclass
class ImmersionData:
    """Legendrian lift, Lagrangian angle, conformal factor and residual grids.

    ``du_dx`` and ``du_dy`` may carry exact derivatives; otherwise they are
    formed by second-order finite differences.
    """

    u_hat: np.ndarray       # (nx, ny, 3)
    beta: np.ndarray        # (nx, ny)
    hx: float
    hy: float
    rho: np.ndarray = None
    degenerate: np.ndarray = None
    du_dx: np.ndarray = None
    du_dy: np.ndarray = None
    residuals: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.du_dx is None:
            self.du_dx = diff2(self.u_hat, self.hx, 0)
        if self.du_dy is None:
            self.du_dy = diff2(self.u_hat, self.hy, 1)
        if self.rho is None or self.degenerate is None:
            speed = np.linalg.norm(self.du_dx, axis=-1)
            self.degenerate = speed <= 1e-8
            with np.errstate(divide="ignore"):
                self.rho = np.where(self.degenerate, np.nan, np.log(np.maximum(speed, 1e-300)))
        self.residuals.setdefault("norm", np.abs(np.linalg.norm(self.u_hat, axis=-1) - 1.0))
        cx, cy = conformality_residuals(self)
        self.residuals.setdefault("conformality_norm", cx)
        self.residuals.setdefault("conformality_angle", cy)
        self.residuals.setdefault("legendrian", legendrian_residual(self))

    @property
    def shape(self):
        return self.beta.shape

    @property
    def xs(self):
        return self.hx * np.arange(self.shape[0])

    @property
    def ys(self):
        return self.hy * np.arange(self.shape[1])

    def residual_max(self, name):
        r = self.residuals[name]
        if self.degenerate is not None and r.shape == self.degenerate.shape:
            r = r[~self.degenerate]
        return float(np.max(r, initial=0.0))


def hermitian(u, v):
    """``<u, v> = sum u_k conj(v_k)`` over the last axis."""
    return np.sum(u * np.conj(v), axis=-1)


def conformality_residuals(imm):
    nx_ = np.linalg.norm(imm.du_dx, axis=-1)
    ny_ = np.linalg.norm(imm.du_dy, axis=-1)
    return np.abs(nx_ - ny_), np.abs(np.real(hermitian(imm.du_dx, imm.du_dy)))


def legendrian_residual(imm):
    """``|<d_x u, u>| + |<d_y u, u>|`` per node."""
    return np.abs(hermitian(imm.du_dx, imm.u_hat)) + np.abs(hermitian(imm.du_dy, imm.u_hat))


def unwrap_grid(phase, max_jump=0.9 * np.pi):
    """Unwrap wrapped angles along the first row, then up every column.

    Raises :class:`BranchJump` when a nearest-branch step is at least
    ``max_jump``: then the grid is too coarse to follow the angle.
    """
    def steps(d):
        w = (d + np.pi) % (2 * np.pi) - np.pi
        if w.size and np.abs(w).max() >= max_jump:
            raise BranchJump(f"angle jump {np.abs(w).max():.3f} between neighbours")
        return w

    out = np.empty_like(phase, dtype=float)
    row = phase[:, 0]
    out[:, 0] = row[0] + np.concatenate([[0.0], np.cumsum(steps(np.diff(row)))])
    d = steps(np.diff(phase, axis=1))
    out[:, 1:] = out[:, :1] + np.cumsum(d, axis=1)
    return out


def extract_immersion(F, hx, hy, max_jump=0.9 * np.pi):
    """Lift, angle and conformal factor from frames at ``lam = 1``."""
    u = F[..., :, 2]
    beta = unwrap_grid(np.angle(np.linalg.det(F)), max_jump)
    return ImmersionData(np.ascontiguousarray(u), beta, hx, hy)


def harmonicity_residual(beta, hx, hy=None):
    """Max over interior nodes of the five-point Laplacian."""
    hy = hx if hy is None else hy
    b = np.asarray(beta, dtype=float)
    # differences of differences keep affine data exact up to rounding of b
    lx = ((b[2:, 1:-1] - b[1:-1, 1:-1]) - (b[1:-1, 1:-1] - b[:-2, 1:-1])) / hx ** 2
    ly = ((b[1:-1, 2:] - b[1:-1, 1:-1]) - (b[1:-1, 1:-1] - b[1:-1, :-2])) / hy ** 2
    return float(np.max(np.abs(lx + ly), initial=0.0))


# ---------------------------------------------------------------------------
# based loops


def _conj(F, M):
    return F @ M @ dagger(F)


def based_loop_transform(family, conn):
    """``E_lam = F_lam F^-1`` and ``Gamma_lam = F (A_lam - A) F^-1``.

    Returns ``E`` of shape ``(nl, nx, ny, 3, 3)`` and ``(Gamma_x, Gamma_y)``
    of the same shape. ``Gamma`` is built from the connection, not by
    differencing ``E``.
    """
    F = family.base
    E = family.frames @ dagger(F)[None]
    A1x, A1y = conn.at(1.0)
    gx, gy = [], []
    for lam in family.lambdas:
        Ax, Ay = conn.at(lam)
        gx.append(_conj(F, Ax - A1x))
        gy.append(_conj(F, Ay - A1y))
    return E, (np.stack(gx), np.stack(gy))


def perp_projector(F):
    """``F diag(1, 1, 0) F^-1``: orthogonal projection onto the complement of ``u``."""
    return _conj(F, PI0_PERP)


def gamma_loop(F, conn, lam, component="x"):
    """``gamma_lam``: the conjugated non-constant part of ``A_lam``."""
    c = conn.ax if component == "x" else conn.ay
    c = c.copy()
    if conn.kmin <= 0 < conn.kmin + c.shape[-3]:
        c[..., -conn.kmin, :, :] = 0
    return _conj(F, evaluate_coeffs(c, conn.kmin, lam))


def tau_u(F, M):
    """The automorphism ``tau`` transported by the frame."""
    Fi = dagger(F)
    return F @ tau_alg(Fi @ M @ F) @ Fi


def conserved_loop(family, grid):
    """``eta0 = F_lam xi_lam F_lam^-1`` at every node and sample.

    Returns the loop at the origin, which equals ``xi(0, 0)``, and the
    largest node-to-origin drift over all samples.
    """
    drift = 0.0
    for lam, F in zip(family.lambdas, family.frames):
        eta0 = _conj(F, grid.evaluate(lam))
        drift = max(drift, float(frob(eta0 - eta0[0, 0]).max()))
    return grid.loop(0, 0), drift


# ---------------------------------------------------------------------------
# quasi-finite to finite type


@dataclass
class GaugeResult:
    family: FrameFamily
    grid: StateGrid
    G: np.ndarray
    conn: ConnectionField
    residual: float
    lax_residual: float
    tail: float


def quasi_finite_defect(grid, conn, tol=1e-6):
    """The defect ``B = (lam^4p xi dz)_su - A``; must be a ``u(3)^C_0``-valued 1-form.

    Returns ``(Bx, By)`` as ``(nx, ny, 3, 3)`` grids.
    """
    ax, ay = connection_coeffs(grid.coeffs, grid.p)
    dx, _ = restrict_band(conn.ax, conn.kmin, -2, 2)
    dy, _ = restrict_band(conn.ay, conn.kmin, -2, 2)
    dx = ax - dx
    dy = ay - dy
    for d in (dx, dy):
        off = np.delete(d, 2, axis=-3)
        if off.size and frob(off).max() > tol:
            raise NotInU3C0(f"defect has non-constant Fourier modes ({frob(off).max():.3e})")
        b = d[..., 2, :, :]
        bad = np.abs(b[..., 2, :]).max(initial=0) + np.abs(b[..., :, 2]).max(initial=0)
        bad = max(bad, np.abs(np.trace(b, axis1=-2, axis2=-1)).max(initial=0))
        if bad > tol:
            raise NotInU3C0(f"defect leaves the sl(2) block ({bad:.3e})")
    return dx[..., 2, :, :], dy[..., 2, :, :]


def _theta(F, grid, K):
    """``(lam^4p eta)_+`` and ``(i lam^4p eta)_+`` with ``eta = F xi F^-1``."""
    eta = F[:, :, None] @ grid.coeffs @ dagger(F)[:, :, None]
    lo = band_for(grid.p)[0] + 4 * grid.p
    _, (tx, _) = based_split_coeffs(eta, lo)
    _, (ty, _) = based_split_coeffs(1j * eta, lo)
    tail = 0.0
    if tx.shape[-3] > K + 1:
        tail = float(max(frob(tx[..., K + 1:, :, :]).max(), frob(ty[..., K + 1:, :, :]).max()))
        if tail > 1e-8:
            raise TruncationError(f"dropped tail {tail:.3e} above degree {K}")
    tx, _ = restrict_band(tx, 0, 0, K)
    ty, _ = restrict_band(ty, 0, 0, K)
    return tx, ty, tail


def _rk4_plus(V, T0, Tm, T1, h, K):
    def f(T, U):
        out, _ = loop_mul(T, 0, U, 0)
        return out[..., :K + 1, :, :]

    k1 = f(T0, V)
    k2 = f(Tm, V + 0.5 * h * k1)
    k3 = f(Tm, V + 0.5 * h * k2)
    k4 = f(T1, V + h * k3)
    return V + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _integrate_plus(tx, ty, hx, hy, K):
    """Solve ``dV = Theta V``, ``V(0) = Id`` for a Lambda^+ loop of depth ``K``."""
    nx, ny = tx.shape[:2]
    V0 = np.zeros((K + 1, 3, 3), dtype=complex)
    V0[0] = ID3
    mx = midpoints(tx[:, 0], 0)
    row = np.empty((nx, K + 1, 3, 3), dtype=complex)
    row[0] = V = V0
    for i in range(1, nx):
        V = _rk4_plus(V, tx[i - 1, 0], mx[i - 1], tx[i, 0], hx, K)
        row[i] = V
    my = midpoints(ty, 1)
    out = np.empty((nx, ny, K + 1, 3, 3), dtype=complex)
    out[:, 0] = V = row
    for j in range(1, ny):
        V = _rk4_plus(V, ty[:, j - 1], my[:, j - 1], ty[:, j], hy, K)
        out[:, j] = V
    return out


def gauge_to_finite_type(family, grid, conn, K=None, tol=1e-6, post_tol=1e-5):
    """Gauge a quasi-finite-type solution into finite-type form.

    ``family`` holds the frames ``F_lam`` of the connection ``conn`` and
    ``grid`` a solution of ``d xi = [xi, A]`` whose induced connection
    differs from ``A`` by a ``u(3)^C_0``-valued defect. Returns a
    :class:`GaugeResult` with ``F^G = F G``, ``xi^G = G^-1 xi G``, the gauge
    ``G`` and the gauged connection; raises :class:`IwasawaFailure` when the
    postcondition residual exceeds ``post_tol``.
    """
    p = grid.p
    K = 8 * p + 4 if K is None else K
    quasi_finite_defect(grid, conn, tol)
    F = family.base
    tx, ty, tail = _theta(F, grid, K)
    V = _integrate_plus(tx, ty, grid.hx, grid.hy, K)
    W0 = dagger(F) @ V[..., 0, :, :]
    blk = W0[..., :2, :2]
    leak = np.abs(W0[..., 2, :2]).max() + np.abs(W0[..., :2, 2]).max() + np.abs(W0[..., 2, 2] - 1).max()
    if leak > tol:
        raise IwasawaFailure(f"degree-0 block is not in the fixed subgroup ({leak:.3e})")
    det = np.linalg.det(blk)
    blk = blk / np.sqrt(det)[..., None, None]
    G = np.empty(W0.shape, dtype=complex)
    for idx in np.ndindex(W0.shape[:2]):
        try:
            G[idx] = iwasawa_group_su2(blk[idx], tol=1e-8)[0]
        except LoopflowError as exc:
            raise IwasawaFailure(f"node {idx}: {exc}") from exc
    # the square root branch may flip sign; the fixed subgroup contains -Id on the block
    G = _continuous_sign(G)
    Gi = dagger(G)
    frames = family.frames @ G[None]
    xiG = Gi[:, :, None] @ grid.coeffs @ G[:, :, None]
    new_grid = StateGrid(p, xiG, grid.hx, grid.hy, grid.max_leak, grid.order)
    dGx = diff4(G, grid.hx, 0)
    dGy = diff4(G, grid.hy, 1)
    axG = Gi[:, :, None] @ conn.ax @ G[:, :, None]
    ayG = Gi[:, :, None] @ conn.ay @ G[:, :, None]
    if conn.kmin <= 0 < conn.kmin + conn.ax.shape[-3]:
        axG[..., -conn.kmin, :, :] += Gi @ dGx
        ayG[..., -conn.kmin, :, :] += Gi @ dGy
    connG = ConnectionField(axG, ayG, conn.hx, conn.hy, conn.kmin)
    res = finite_type_residual(new_grid, connG)
    lax = lax_residual(new_grid, connG)
    if res > post_tol:
        raise IwasawaFailure(f"gauged connection residual {res:.3e} > {post_tol:g}")
    return GaugeResult(FrameFamily(family.lambdas, frames, family.hx, family.hy),
                       new_grid, G, connG, res, lax, tail)


def _continuous_sign(G):
    """Pick the sign of each 2x2 block so that ``G`` varies continuously from the origin."""
    s = np.ones(G.shape[:2])
    ref = G[:, 0, :2, :2]
    for i in range(1, G.shape[0]):
        if np.real(np.trace(dagger(ref[i - 1] * s[i - 1, 0]) @ ref[i])) < 0:
            s[i, 0] = -1.0
        else:
            s[i, 0] = 1.0
    blk = G[..., :2, :2]
    for j in range(1, G.shape[1]):
        dots = np.real(np.trace(dagger(blk[:, j - 1] * s[:, j - 1, None, None]) @ blk[:, j],
                                axis1=-2, axis2=-1))
        s[:, j] = np.where(dots < 0, -1.0, 1.0)
    out = G.copy()
    out[..., :2, :2] *= s[..., None, None]
    return out


def finite_type_residual(grid, conn):
    """Max ``|(lam^4p xi dz)_su - A|`` over nodes and coefficients."""
    ax, ay = connection_coeffs(grid.coeffs, grid.p)
    bx, _ = restrict_band(conn.ax, conn.kmin, -2, 2)
    by, _ = restrict_band(conn.ay, conn.kmin, -2, 2)
    return float(max(frob(ax - bx).max(), frob(ay - by).max()))


def lax_residual(grid, conn):
    """Max coefficient norm of ``d xi + [A, xi]`` with second-order differences."""
    c = grid.coeffs
    lo = grid.kmin
    out = 0.0
    for comp, h, axis in ((conn.ax, grid.hx, 0), (conn.ay, grid.hy, 1)):
        dc = diff2(c, h, axis)
        br, k0 = loop_bracket(comp, conn.kmin, c, lo)
        dc, _ = restrict_band(dc, lo, k0, k0 + br.shape[-3] - 1)
        out = max(out, float(frob(dc + br).max()))
    return out
