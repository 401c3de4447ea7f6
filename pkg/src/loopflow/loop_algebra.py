"""Laurent loops in u(3)^C, the order-4 automorphism tau and the splittings.

Loop coefficients are stored as arrays ``(..., nk, 3, 3)`` together with the
lowest degree ``kmin``; degree ``k`` sits at index ``k - kmin``. The array
helpers here (``loop_mul``, ``su_split_coeffs`` ...) work on stacks so whole
grids can be processed at once. :class:`LaurentLoop` wraps a single loop for
the public API and JSON serialization.

Conventions
-----------
* ``tau(M) = -diag(-J, 1) M^T diag(J, 1)``; ``u(3)^C_a`` is its eigenspace for
  the eigenvalue ``i**a``.
* A loop is *real* when ``xi_{-k} = -(xi_k)^dagger`` (u(3)-valued on the
  circle) and *twisted* when ``xi_k`` lies in ``u(3)^C_{k mod 4}``.
* The Borel factor is lower triangular with positive diagonal.
"""
from dataclasses import dataclass

import numpy as np

from .errors import BandLeak, DetNotOne, NotInU3C0, NotTwisted, Singular
from .matrix_core import DEFAULT_TOL, JJ, MJ, dagger, embed2, frob

# ---------------------------------------------------------------------------
# the automorphism and its eigenspaces


def tau_alg(M):
    """Lie algebra automorphism of order 4 on u(3)^C."""
    return -MJ @ np.swapaxes(M, -1, -2) @ JJ


def tau_group(G):
    """Group extension ``diag(-J,1) (G^T)^-1 diag(J,1)``."""
    G = np.asarray(G, dtype=complex)
    det = np.linalg.det(G)
    if np.any(np.abs(det) < 1e-14):
        raise Singular("tau_group needs an invertible matrix")
    return MJ @ np.linalg.inv(np.swapaxes(G, -1, -2)) @ JJ


def eigenspace_project(M, a):
    """Projection onto ``u(3)^C_a``: the average of ``i**(-a j) tau^j(M)``."""
    out = np.zeros_like(np.asarray(M, dtype=complex))
    T = np.asarray(M, dtype=complex)
    for j in range(4):
        out = out + (1j) ** (-(a * j) % 4) * T
        T = tau_alg(T)
    return 0.25 * out


def twist_defect(M, a):
    return frob(M - eigenspace_project(M, a))


def split_su_b(xi, tol=DEFAULT_TOL, check=True):
    """Split a traceless upper-left 2x2 block into su(2) + b parts.

    ``b`` is the Lie algebra of the Borel group: lower triangular, real
    traceless diagonal. Works on stacks.
    """
    xi = np.asarray(xi, dtype=complex)
    if check:
        off = np.abs(xi[..., 2, :]).max(initial=0.0) + np.abs(xi[..., :, 2]).max(initial=0.0)
        tr = np.abs(xi[..., 0, 0] + xi[..., 1, 1]).max(initial=0.0)
        if off > tol or tr > tol:
            raise NotInU3C0(f"not a traceless 2x2 block (off-block {off:.2e}, trace {tr:.2e})")
    alpha = xi[..., 0, 0]
    beta = xi[..., 0, 1]
    gamma = xi[..., 1, 0]
    delta = xi[..., 1, 1]
    # su part [[i s, c], [-conj(c), -i s]] with s = Im of the average diagonal
    s = 0.5 * (alpha.imag - delta.imag)
    su = np.zeros_like(xi)
    su[..., 0, 0] = 1j * s
    su[..., 1, 1] = -1j * s
    su[..., 0, 1] = beta
    su[..., 1, 0] = -np.conj(beta)
    return su, xi - su


@dataclass(frozen=True)
class BorelElement:
    """Element of the Borel group: 2x2 lower triangular, positive diagonal, det 1."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape == (3, 3):
            m = m[:2, :2]
        object.__setattr__(self, "matrix", m)
        if not is_borel(m):
            raise ValueError("not an element of the Borel subgroup")

    @property
    def embedded(self):
        return embed2(self.matrix, corner=1.0)


def is_borel(b, tol=1e-10):
    b = np.asarray(b)
    if b.shape[-1] == 3:
        b = b[..., :2, :2]
    d1, d2 = b[..., 0, 0], b[..., 1, 1]
    return bool(
        np.all(np.abs(b[..., 0, 1]) <= tol)
        and np.all(np.abs(d1.imag) <= tol) and np.all(np.abs(d2.imag) <= tol)
        and np.all(d1.real > 0) and np.all(d2.real > 0)
        and np.all(np.abs(d1 * d2 - 1) <= tol)
    )


def iwasawa_group_su2(g, tol=DEFAULT_TOL):
    """Factor ``g = f b`` with ``f`` in SU(2) and ``b`` in the Borel group.

    ``g`` is a 2x2 matrix of determinant one, or a 3x3 matrix whose
    upper-left block is used. ``b`` is obtained as the lower-triangular
    "reverse Cholesky" factor of ``g^dagger g``; then ``f = g b^-1``.
    Both factors are returned embedded in 3x3 with corner entry 1.
    """
    g = np.asarray(g, dtype=complex)
    if g.shape[-1] == 3:
        g = g[..., :2, :2]
    det = np.linalg.det(g)
    if np.any(np.abs(det) < 1e-14):
        raise Singular("Iwasawa factorization of a singular matrix")
    if np.any(np.abs(det - 1) > tol):
        raise DetNotOne(f"det deviates from 1 by {np.max(np.abs(det - 1)):.3e}")
    H = dagger(g) @ g
    t2 = np.sqrt(H[..., 1, 1].real)
    s = H[..., 1, 0] / t2
    t1 = np.sqrt(H[..., 0, 0].real - np.abs(s) ** 2)
    b = np.zeros_like(g)
    b[..., 0, 0] = t1
    b[..., 1, 0] = s
    b[..., 1, 1] = t2
    binv = np.zeros_like(g)
    binv[..., 0, 0] = 1.0 / t1
    binv[..., 1, 0] = -s / (t1 * t2)
    binv[..., 1, 1] = 1.0 / t2
    f = g @ binv
    return embed2(f, 1.0), embed2(b, 1.0)


# ---------------------------------------------------------------------------
# coefficient-array kernels


def loop_mul(a, akmin, b, bkmin):
    """Product of two loops given as coefficient stacks."""
    na, nb = a.shape[-3], b.shape[-3]
    shape = np.broadcast_shapes(a.shape[:-3], b.shape[:-3]) + (na + nb - 1, 3, 3)
    out = np.zeros(shape, dtype=complex)
    for i in range(na):
        ai = a[..., i, :, :]
        for j in range(nb):
            out[..., i + j, :, :] += ai @ b[..., j, :, :]
    return out, akmin + bkmin


def loop_bracket(a, akmin, b, bkmin):
    na, nb = a.shape[-3], b.shape[-3]
    shape = np.broadcast_shapes(a.shape[:-3], b.shape[:-3]) + (na + nb - 1, 3, 3)
    out = np.zeros(shape, dtype=complex)
    for i in range(na):
        ai = a[..., i, :, :]
        for j in range(nb):
            bj = b[..., j, :, :]
            out[..., i + j, :, :] += ai @ bj - bj @ ai
    return out, akmin + bkmin


def restrict_band(c, kmin, lo, hi, tol=None):
    """Return coefficients on ``[lo, hi]``.

    Degrees outside the input band are zero-filled. When ``tol`` is given,
    mass dropped outside ``[lo, hi]`` above ``tol`` raises :class:`BandLeak`.
    Returns ``(coeffs, leak)`` where ``leak`` is the largest dropped norm.
    """
    n = c.shape[-3]
    kmax = kmin + n - 1
    out = np.zeros(c.shape[:-3] + (hi - lo + 1, 3, 3), dtype=complex)
    s_lo, s_hi = max(lo, kmin), min(hi, kmax)
    if s_lo <= s_hi:
        out[..., s_lo - lo:s_hi - lo + 1, :, :] = c[..., s_lo - kmin:s_hi - kmin + 1, :, :]
    dropped = [k for k in range(kmin, kmax + 1) if k < lo or k > hi]
    leak = 0.0
    if dropped:
        idx = [k - kmin for k in dropped]
        leak = float(np.max(frob(c[..., idx, :, :])))
    if tol is not None and leak > tol:
        raise BandLeak(f"out-of-band mass {leak:.3e} exceeds {tol:g}")
    return out, leak


def su_split_coeffs(c, kmin, check=False, tol=DEFAULT_TOL):
    """Twisted splitting into a real loop plus a loop in Lambda^+_b.

    Returns ``(su, su_kmin), (plus, 0)``. The degree-0 coefficient must be in
    ``u(3)^C_0`` (a traceless 2x2 block) whenever it is present.
    """
    n = c.shape[-3]
    kmax = kmin + n - 1
    neg = max(0, -kmin)
    su_lo, su_hi = -neg, neg
    su = np.zeros(c.shape[:-3] + (su_hi - su_lo + 1, 3, 3), dtype=complex)
    plus_hi = max(kmax, neg, 0)
    plus = np.zeros(c.shape[:-3] + (plus_hi + 1, 3, 3), dtype=complex)
    for k in range(kmin, kmax + 1):
        ck = c[..., k - kmin, :, :]
        if k < 0:
            su[..., k - su_lo, :, :] += ck
            su[..., -k - su_lo, :, :] -= dagger(ck)
            plus[..., -k, :, :] += dagger(ck)
        elif k == 0:
            s0, b0 = split_su_b(ck, tol=tol, check=check)
            su[..., -su_lo, :, :] += s0
            plus[..., 0, :, :] += b0
        else:
            plus[..., k, :, :] += ck
    return (su, su_lo), (plus, 0)


def based_split_coeffs(c, kmin):
    """Splitting into a based loop (zero at lambda=1) plus a loop in Lambda^+."""
    n = c.shape[-3]
    kmax = kmin + n - 1
    neg = max(0, -kmin)
    om_lo = -neg
    om = np.zeros(c.shape[:-3] + (2 * neg + 1, 3, 3), dtype=complex)
    plus_hi = max(kmax, neg, 0)
    plus = np.zeros(c.shape[:-3] + (plus_hi + 1, 3, 3), dtype=complex)
    for k in range(kmin, kmax + 1):
        ck = c[..., k - kmin, :, :]
        if k < 0:
            ckd = dagger(ck)
            # ck (lam^k - 1) - ck^dagger (lam^-k - 1)
            om[..., k - om_lo, :, :] += ck
            om[..., -k - om_lo, :, :] -= ckd
            om[..., -om_lo, :, :] += ckd - ck
            # ck + ck^dagger (lam^-k - 1)
            plus[..., 0, :, :] += ck - ckd
            plus[..., -k, :, :] += ckd
        else:
            plus[..., k, :, :] += ck
    return (om, om_lo), (plus, 0)


def evaluate_coeffs(c, kmin, lam):
    """Evaluate loop(s) at a point (or array of points) of the circle."""
    lam = np.asarray(lam, dtype=complex)
    n = c.shape[-3]
    powers = lam[..., None] ** np.arange(kmin, kmin + n)
    if lam.ndim == 0:
        return np.tensordot(powers, c, axes=([0], [-3]))
    return np.einsum("sk,...kab->s...ab", powers, c)


def reality_defect_coeffs(c, kmin):
    """Max over degrees of ``|xi_{-k} + xi_k^dagger|`` for each loop in the stack."""
    n = c.shape[-3]
    kmax = kmin + n - 1
    K = max(abs(kmin), abs(kmax))
    full, _ = restrict_band(c, kmin, -K, K)
    resid = frob(full + dagger(full[..., ::-1, :, :]))
    return resid.max(axis=-1)


def twist_defect_coeffs(c, kmin):
    n = c.shape[-3]
    out = np.zeros(c.shape[:-3])
    for i in range(n):
        out = np.maximum(out, twist_defect(c[..., i, :, :], (kmin + i) % 4))
    return out


# ---------------------------------------------------------------------------
# single loops


@dataclass(frozen=True)
class LaurentLoop:
    """Finite Laurent polynomial ``sum_k coeffs[k - kmin] lam**k``.

    ``twisted`` and ``real`` are claims about the loop; use
    :meth:`reality_residual` / :meth:`twist_residual` (or :meth:`validate`)
    to test them.
    """

    coeffs: np.ndarray
    kmin: int = 0
    twisted: bool = False
    real: bool = False

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if c.ndim != 3 or c.shape[1:] != (3, 3):
            raise ValueError(f"coeffs must have shape (nk, 3, 3), got {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "kmin", int(self.kmin))

    @classmethod
    def zeros(cls, kmin, kmax, **flags):
        return cls(np.zeros((kmax - kmin + 1, 3, 3), dtype=complex), kmin, **flags)

    @classmethod
    def from_dict(cls, terms, **flags):
        """Build from ``{degree: matrix}``."""
        if not terms:
            return cls.zeros(0, 0, **flags)
        lo, hi = min(terms), max(terms)
        c = np.zeros((hi - lo + 1, 3, 3), dtype=complex)
        for k, M in terms.items():
            c[k - lo] = M
        return cls(c, lo, **flags)

    @property
    def kmax(self):
        return self.kmin + self.coeffs.shape[0] - 1

    @property
    def band(self):
        return (self.kmin, self.kmax)

    def degrees(self):
        return range(self.kmin, self.kmax + 1)

    def coeff(self, k):
        if self.kmin <= k <= self.kmax:
            return self.coeffs[k - self.kmin]
        return np.zeros((3, 3), dtype=complex)

    def __call__(self, lam):
        return evaluate_coeffs(self.coeffs, self.kmin, lam)

    evaluate = __call__

    def with_band(self, kmin, kmax, tol=DEFAULT_TOL):
        c, _ = restrict_band(self.coeffs, self.kmin, kmin, kmax, tol=tol)
        return LaurentLoop(c, kmin, self.twisted, self.real)

    def trimmed(self, tol=0.0):
        """Drop vanishing end coefficients (keeps at least degree 0)."""
        norms = frob(self.coeffs)
        nz = np.nonzero(norms > tol)[0]
        if nz.size == 0:
            return LaurentLoop.zeros(0, 0, twisted=self.twisted, real=self.real)
        return LaurentLoop(self.coeffs[nz[0]:nz[-1] + 1], self.kmin + nz[0],
                           self.twisted, self.real)

    def _aligned(self, other):
        lo = min(self.kmin, other.kmin)
        hi = max(self.kmax, other.kmax)
        a, _ = restrict_band(self.coeffs, self.kmin, lo, hi)
        b, _ = restrict_band(other.coeffs, other.kmin, lo, hi)
        return a, b, lo

    def __add__(self, other):
        a, b, lo = self._aligned(other)
        return LaurentLoop(a + b, lo, self.twisted and other.twisted, self.real and other.real)

    def __sub__(self, other):
        a, b, lo = self._aligned(other)
        return LaurentLoop(a - b, lo, self.twisted and other.twisted, self.real and other.real)

    def __neg__(self):
        return LaurentLoop(-self.coeffs, self.kmin, self.twisted, self.real)

    def __mul__(self, scalar):
        real = self.real and np.isreal(scalar)
        return LaurentLoop(scalar * self.coeffs, self.kmin, self.twisted, bool(real))

    __rmul__ = __mul__

    def shift(self, n):
        """Multiply by ``lam**n``; twisting survives only for n divisible by 4."""
        return LaurentLoop(self.coeffs, self.kmin + n, self.twisted and n % 4 == 0, False)

    def matmul(self, other):
        c, k = loop_mul(self.coeffs, self.kmin, other.coeffs, other.kmin)
        return LaurentLoop(c, k, self.twisted and other.twisted, False)

    def bracket(self, other):
        c, k = loop_bracket(self.coeffs, self.kmin, other.coeffs, other.kmin)
        return LaurentLoop(c, k, self.twisted and other.twisted, self.real and other.real)

    def conjugated(self, g):
        """Pointwise conjugation ``g xi g^-1`` by a constant matrix."""
        return LaurentLoop(g @ self.coeffs @ np.linalg.inv(g), self.kmin)

    def distance(self, other):
        a, b, _ = self._aligned(other)
        return float(np.max(frob(a - b), initial=0.0))

    def norm_sq(self):
        """Sum over degrees of squared Frobenius norms."""
        return float(np.sum(np.abs(self.coeffs) ** 2))

    def reality_residual(self):
        return float(reality_defect_coeffs(self.coeffs, self.kmin))

    def twist_residual(self):
        return float(twist_defect_coeffs(self.coeffs, self.kmin))

    def validate(self, tol=DEFAULT_TOL):
        if self.real and self.reality_residual() > tol:
            raise ValueError(f"reality residual {self.reality_residual():.3e} > {tol:g}")
        if self.twisted and self.twist_residual() > tol:
            raise NotTwisted(f"twist residual {self.twist_residual():.3e} > {tol:g}")
        return self

    def to_json(self):
        out = {}
        for k in self.degrees():
            M = self.coeff(k).reshape(-1)
            out[str(k)] = [[float(z.real), float(z.imag)] for z in M]
        return {"band": [self.kmin, self.kmax], "coeffs": out,
                "twisted": bool(self.twisted), "real": bool(self.real)}

    @classmethod
    def from_json(cls, obj):
        kmin, kmax = obj["band"]
        c = np.zeros((kmax - kmin + 1, 3, 3), dtype=complex)
        for key, entries in obj["coeffs"].items():
            k = int(key)
            if not kmin <= k <= kmax:
                raise BandLeak(f"degree {k} outside declared band {kmin}..{kmax}")
            vals = np.array([complex(re, im) for re, im in entries])
            c[k - kmin] = vals.reshape(3, 3)
        return cls(c, kmin, bool(obj.get("twisted", False)), bool(obj.get("real", False)))


def loop_split_twisted(xi, tol=DEFAULT_TOL):
    """Split a twisted loop as (real twisted loop) + (loop in Lambda^+_b).

    The two outputs add up to ``xi`` coefficientwise.
    """
    if xi.twist_residual() > tol:
        raise NotTwisted(f"input twist residual {xi.twist_residual():.3e} > {tol:g}")
    (su, su_lo), (plus, plo) = su_split_coeffs(xi.coeffs, xi.kmin, check=True, tol=tol)
    return (LaurentLoop(su, su_lo, twisted=True, real=True),
            LaurentLoop(plus, plo, twisted=True, real=False))


def loop_split_based(xi):
    """Split a loop as (based loop, u(3)-valued and zero at 1) + (loop in Lambda^+)."""
    (om, olo), (plus, plo) = based_split_coeffs(xi.coeffs, xi.kmin)
    return LaurentLoop(om, olo, real=True), LaurentLoop(plus, plo)
