"""The finite-type Lax system on polynomial twisted loops.

A state is a real twisted loop ``xi`` with band ``[-2-4p, 2+4p]``. The two
commuting vector fields are

    X1(xi) = [xi, (lam^4p xi)_su],   X2(xi) = [xi, (i lam^4p xi)_su]

where ``(.)_su`` is the projection onto real twisted loops along
``Lambda^+_b``. Integrating them over the plane gives ``xi(x, y)`` together
with the flat connection ``A = (lam^4p xi dz)_su``.
"""
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InvariantDrift
from .loop_algebra import (
    LaurentLoop,
    evaluate_coeffs,
    loop_bracket,
    reality_defect_coeffs,
    restrict_band,
    split_su_b,
    twist_defect_coeffs,
    eigenspace_project,
)
from .matrix_core import DEFAULT_TOL, dagger, frob, random_complex

DEFAULT_STEP = 1.0 / 512
LEAK_TOL = 1e-10


def band_for(p):
    return (-2 - 4 * p, 2 + 4 * p)


def is_vacuum_lowest(M, tol=DEFAULT_TOL):
    """``M`` has the form ``diag(ia, ia, 0)``."""
    off = M - np.diag(np.diagonal(M))
    return (np.abs(off).max() <= tol and abs(M[0, 0] - M[1, 1]) <= tol
            and abs(M[2, 2]) <= tol)


@dataclass(frozen=True)
class LaxState:
    """A point of the finite-dimensional phase space for degree ``p``."""

    p: int
    xi: LaurentLoop
    tol: float = field(default=DEFAULT_TOL, repr=False, compare=False)

    def __post_init__(self):
        if self.p < 0:
            raise ValueError("p must be non-negative")
        lo, hi = band_for(self.p)
        if self.xi.band != (lo, hi):
            raise ValueError(f"band must be {(lo, hi)}, got {self.xi.band}")
        object.__setattr__(self, "xi", LaurentLoop(self.xi.coeffs, lo, twisted=True, real=True))
        if self.xi.reality_residual() > self.tol:
            raise InvariantDrift("state is not real", residual=self.xi.reality_residual())
        if self.xi.twist_residual() > self.tol:
            raise InvariantDrift("state is not twisted", residual=self.xi.twist_residual())
        if not is_vacuum_lowest(self.xi.coeffs[0], self.tol):
            raise InvariantDrift("lowest coefficient is not of the form diag(ia, ia, 0)")

    @property
    def coeffs(self):
        return self.xi.coeffs

    @property
    def a(self):
        return complex(-1j * self.xi.coeffs[0][0, 0])

    def to_json(self):
        return {"p": self.p, "xi": self.xi.to_json()}

    @classmethod
    def from_json(cls, obj):
        return cls(int(obj["p"]), LaurentLoop.from_json(obj["xi"]))


def vacuum_state(p=0, a=1.0):
    """Only the extreme coefficients ``diag(ia, ia, 0)`` and its conjugate."""
    lo, hi = band_for(p)
    c = np.zeros((hi - lo + 1, 3, 3), dtype=complex)
    c[0] = np.diag([1j * a, 1j * a, 0])
    c[-1] = -dagger(c[0])
    return LaxState(p, LaurentLoop(c, lo))


def random_admissible_state(p=0, a=1.0, scale=0.5, seed=None):
    """Vacuum plus Gaussian noise in degrees ``-4p-1 .. 4p+1``.

    The noise is projected onto the right eigenspace of tau degree by degree
    and then made real by the symmetry ``xi_{-k} = -xi_k^dagger``.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    lo, hi = band_for(p)
    state = vacuum_state(p, a)
    c = np.array(state.coeffs)
    for k in range(-4 * p - 1, 1):
        M = random_complex(rng, scale=scale)
        if k == 0:
            M = 0.5 * (M - dagger(M))
        M = eigenspace_project(M, k % 4)
        c[k - lo] = M
        if k < 0:
            c[-k - lo] = -dagger(M)
    return LaxState(p, LaurentLoop(c, lo))


def connection_coeffs(c, p):
    """``(lam^4p xi)_su`` and ``(i lam^4p xi)_su`` as band [-2, 2] stacks.

    Only ``xi_{-4p-2}``, ``xi_{-4p-1}`` and ``xi_{-4p}`` enter.
    """
    c0 = c[..., 0, :, :]
    c1 = c[..., 1, :, :]
    c2 = c[..., 2, :, :]
    ax = np.empty(c.shape[:-3] + (5, 3, 3), dtype=complex)
    ay = np.empty_like(ax)
    ax[..., 0, :, :] = c0
    ax[..., 1, :, :] = c1
    ax[..., 2, :, :] = split_su_b(c2, check=False)[0]
    ax[..., 3, :, :] = -dagger(c1)
    ax[..., 4, :, :] = -dagger(c0)
    ay[..., 0, :, :] = 1j * c0
    ay[..., 1, :, :] = 1j * c1
    ay[..., 2, :, :] = split_su_b(1j * c2, check=False)[0]
    ay[..., 3, :, :] = 1j * dagger(c1)
    ay[..., 4, :, :] = 1j * dagger(c0)
    return ax, ay


def vector_field_coeffs(c, p, direction, leak_tol=LEAK_TOL):
    """Batched X1 (``direction='x'``) or X2 (``'y'``). Returns ``(coeffs, leak)``."""
    lo, hi = band_for(p)
    ax, ay = connection_coeffs(c, p)
    A = ax if direction in ("x", "X1", 1) else ay
    out, k0 = loop_bracket(c, lo, A, -2)
    return restrict_band(out, k0, lo, hi, tol=leak_tol)


def vector_field(state, direction="x", leak_tol=LEAK_TOL):
    """Tangent vector X1 or X2 at ``state`` as a loop on the state's band."""
    out, _ = vector_field_coeffs(state.coeffs, state.p, direction, leak_tol)
    return LaurentLoop(out, state.xi.kmin, twisted=True, real=True)


def connection_from_state(state):
    """The connection ``A(d/dx)``, ``A(d/dy)`` as loops with band [-2, 2]."""
    ax, ay = connection_coeffs(state.coeffs, state.p)
    return (LaurentLoop(ax, -2, twisted=True, real=True),
            LaurentLoop(ay, -2, twisted=True, real=True))


class _Tracker:
    def __init__(self):
        self.leak = 0.0


def _rk4(c, p, h, direction, tracker, leak_tol):
    def f(u):
        out, leak = vector_field_coeffs(u, p, direction, leak_tol)
        tracker.leak = max(tracker.leak, leak)
        return out

    k1 = f(c)
    k2 = f(c + 0.5 * h * k1)
    k3 = f(c + 0.5 * h * k2)
    k4 = f(c + h * k3)
    return c + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _march(c, p, h, n, direction, tracker, leak_tol):
    """RK4 ``n - 1`` steps; returns the ``n`` visited states stacked on axis 0."""
    out = np.empty((n,) + c.shape, dtype=complex)
    out[0] = c
    for i in range(1, n):
        c = _rk4(c, p, h, direction, tracker, leak_tol)
        out[i] = c
    return out


@dataclass
class StateGrid:
    """States ``xi(i hx, j hy)`` on an ``nx`` by ``ny`` grid anchored at the origin."""

    p: int
    coeffs: np.ndarray  # (nx, ny, nk, 3, 3)
    hx: float
    hy: float
    max_leak: float = 0.0
    order: str = "xy"

    def __post_init__(self):
        if self.hx <= 0 or self.hy <= 0:
            raise ValueError("grid spacing must be positive")
        lo, hi = band_for(self.p)
        if self.coeffs.shape[2] != hi - lo + 1:
            raise ValueError("coefficient stack does not match the band of p")

    @property
    def nx(self):
        return self.coeffs.shape[0]

    @property
    def ny(self):
        return self.coeffs.shape[1]

    @property
    def kmin(self):
        return band_for(self.p)[0]

    @property
    def xs(self):
        return self.hx * np.arange(self.nx)

    @property
    def ys(self):
        return self.hy * np.arange(self.ny)

    def state(self, i, j):
        return LaxState(self.p, LaurentLoop(self.coeffs[i, j], self.kmin), tol=1e-8)

    def loop(self, i, j):
        return LaurentLoop(self.coeffs[i, j], self.kmin, twisted=True, real=True)

    def evaluate(self, lam):
        return evaluate_coeffs(self.coeffs, self.kmin, lam)


def integrate_flow(initial, nx, ny, hx=DEFAULT_STEP, hy=None, order="xy",
                   leak_tol=LEAK_TOL, check_tol=1e-8):
    """Integrate both commuting flows over a grid starting from ``initial``.

    With ``order='xy'`` the x-flow is integrated along the base row and then
    every y-column is integrated from it (all columns in one batch);
    ``order='yx'`` does the reverse. Classical RK4 throughout.

    Raises :class:`BandLeak` when a vector-field evaluation leaves the band
    and :class:`InvariantDrift` when a produced state breaks reality,
    twisting, or the constancy of the lowest coefficient beyond ``check_tol``.
    """
    hy = hx if hy is None else hy
    if initial.a == 0:
        warnings.warn("a = 0: minimal sector, the Killing recursion will not apply",
                      stacklevel=2)
    p = initial.p
    tracker = _Tracker()
    c0 = np.array(initial.coeffs)
    if order == "xy":
        row = _march(c0, p, hx, nx, "x", tracker, leak_tol)          # (nx, nk, 3, 3)
        grid = _march(row, p, hy, ny, "y", tracker, leak_tol)        # (ny, nx, ...)
        grid = np.swapaxes(grid, 0, 1)
    elif order == "yx":
        col = _march(c0, p, hy, ny, "y", tracker, leak_tol)          # (ny, ...)
        grid = _march(col, p, hx, nx, "x", tracker, leak_tol)        # (nx, ny, ...)
    else:
        raise ValueError("order must be 'xy' or 'yx'")
    grid = np.ascontiguousarray(grid)
    out = StateGrid(p, grid, hx, hy, tracker.leak, order)
    _check_grid(out, c0[0], check_tol)
    return out


def _check_grid(grid, lowest0, tol):
    c = grid.coeffs
    checks = {
        "reality": reality_defect_coeffs(c, grid.kmin),
        "twist": twist_defect_coeffs(c, grid.kmin),
        "lowest coefficient drift": frob(c[..., 0, :, :] - lowest0),
    }
    for name, resid in checks.items():
        if resid.size and resid.max() > tol:
            idx = np.unravel_index(np.argmax(resid), resid.shape)
            raise InvariantDrift(f"{name} residual {resid.max():.3e} at node {idx}",
                                 index=tuple(int(i) for i in idx), residual=float(resid.max()))


def flow_to(initial, x, y, h=DEFAULT_STEP, order="xy", leak_tol=LEAK_TOL):
    """Integrate a single state to ``(x, y)`` along an L-shaped path."""
    tracker = _Tracker()
    c = np.array(initial.coeffs)
    legs = [("x", x), ("y", y)] if order == "xy" else [("y", y), ("x", x)]
    for direction, length in legs:
        n = int(round(abs(length) / h))
        step = np.sign(length) * h if n else 0.0
        for _ in range(n):
            c = _rk4(c, initial.p, step, direction, tracker, leak_tol)
    return LaxState(initial.p, LaurentLoop(c, initial.xi.kmin), tol=1e-8)


def flow_commutation_defect(initial, x=1.0, y=1.0, h=DEFAULT_STEP):
    """Distance between x-then-y and y-then-x integration to ``(x, y)``."""
    a = flow_to(initial, x, y, h, "xy")
    b = flow_to(initial, x, y, h, "yx")
    return a.xi.distance(b.xi)


def default_spectral_samples(n=8):
    return np.exp(2j * np.pi * (np.arange(n) + 0.25) / n)


@dataclass
class FlowDiagnostics:
    """Per-node residual grids of a :class:`StateGrid` and their maxima."""

    reality: np.ndarray
    twist: np.ndarray
    norm_drift: np.ndarray
    lowest_drift: np.ndarray
    spectral_drift: np.ndarray
    band_leak: float

    def summary(self):
        return {
            "reality": float(self.reality.max()),
            "twist": float(self.twist.max()),
            "band_leak": float(self.band_leak),
            "norm_drift": float(self.norm_drift.max()),
            "lowest_drift": float(self.lowest_drift.max()),
            "spectral_drift": float(self.spectral_drift.max()),
        }


def spectral_invariants(c, kmin, lambdas):
    """``tr(xi_lam^j)`` for j = 1, 2, 3; shape ``(len(lambdas), ..., 3)``."""
    out = []
    for lam in lambdas:
        M = evaluate_coeffs(c, kmin, lam)
        M2 = M @ M
        out.append(np.stack([np.trace(M, axis1=-2, axis2=-1),
                             np.trace(M2, axis1=-2, axis2=-1),
                             np.trace(M2 @ M, axis1=-2, axis2=-1)], axis=-1))
    return np.stack(out)


def conserved_diagnostics(grid, lambdas=None):
    """Residuals of everything the exact flow preserves, node by node.

    Drifts are measured against the origin node.
    """
    lambdas = default_spectral_samples() if lambdas is None else lambdas
    c = grid.coeffs
    c0 = c[0, 0]
    norms = np.sum(np.abs(c) ** 2, axis=(-3, -2, -1))
    spec = np.zeros(c.shape[:2])
    for lam in lambdas:
        inv = spectral_invariants(c, grid.kmin, [lam])[0]
        inv0 = spectral_invariants(c0, grid.kmin, [lam])[0]
        spec = np.maximum(spec, np.abs(inv - inv0).max(axis=-1))
    return FlowDiagnostics(
        reality=reality_defect_coeffs(c, grid.kmin),
        twist=twist_defect_coeffs(c, grid.kmin),
        norm_drift=np.abs(norms - norms[0, 0]),
        lowest_drift=frob(c[..., 0, :, :] - c0[0]),
        spectral_drift=spec,
        band_leak=grid.max_leak,
    )
