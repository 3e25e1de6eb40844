"""Polynomial and rational transfer-function algebra in the forward-shift operator q.

Coefficients are always stored in descending powers of ``q``.  A causal
filter such as ``q / (q - 0.3)`` is therefore ``RationalTF([1, 0], [1, -0.3])``.
Improper transfer functions (numerator degree above the denominator degree)
are first-class values; when applied to a finite record they are split into a
pure advance ``q**k`` and a proper remainder.
"""

import numpy as np
from scipy import signal

ZERO_PAD = "zeropad"
TRUNCATE = "truncate"

CANCEL_TOL = 1e-8
STABILITY_MARGIN = 1e-9


class AlgebraicLoopError(ValueError):
    """Raised when ``1 + G C`` vanishes identically."""


def _as_coeffs(coeffs):
    c = np.atleast_1d(np.asarray(coeffs, dtype=float)).ravel()
    nz = np.flatnonzero(c)
    if nz.size == 0:
        return np.zeros(1)
    return c[nz[0]:].copy()


class Poly:
    """Real polynomial in q with coefficients in descending powers."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        if isinstance(coeffs, Poly):
            c = coeffs.coeffs.copy()
        else:
            c = _as_coeffs(coeffs)
        c.setflags(write=False)
        self.coeffs = c

    @classmethod
    def from_roots(cls, roots, gain=1.0):
        roots = np.asarray(roots, dtype=complex).ravel()
        return cls(gain * np.real(np.poly(roots)) if roots.size else [gain])

    @property
    def degree(self):
        return len(self.coeffs) - 1

    @property
    def is_zero(self):
        return len(self.coeffs) == 1 and self.coeffs[0] == 0.0

    @property
    def lead(self):
        return self.coeffs[0]

    def roots(self):
        if self.degree < 1:
            return np.empty(0, dtype=complex)
        return np.roots(self.coeffs).astype(complex)

    def __call__(self, z):
        return np.polyval(self.coeffs, z)

    def __mul__(self, other):
        return poly_mul(self, _poly(other))

    __rmul__ = __mul__

    def __add__(self, other):
        return Poly(np.polyadd(self.coeffs, _poly(other).coeffs))

    __radd__ = __add__

    def __sub__(self, other):
        return Poly(np.polysub(self.coeffs, _poly(other).coeffs))

    def __rsub__(self, other):
        return _poly(other) - self

    def __neg__(self):
        return Poly(-self.coeffs)

    def __eq__(self, other):
        if not isinstance(other, Poly):
            return NotImplemented
        return np.array_equal(self.coeffs, other.coeffs)

    def __hash__(self):
        return hash(self.coeffs.tobytes())

    def __repr__(self):
        return f"Poly({self.coeffs.tolist()})"


def _poly(p):
    return p if isinstance(p, Poly) else Poly(p)


def poly_mul(a, b):
    """Product of two polynomials (coefficient convolution)."""
    a, b = _poly(a), _poly(b)
    if a.is_zero or b.is_zero:
        return Poly([0.0])
    return Poly(np.convolve(a.coeffs, b.coeffs))


def q_power(k):
    """``q**k`` as a polynomial, k >= 0."""
    return Poly(np.r_[1.0, np.zeros(k)])


class RationalTF:
    """Discrete-time SISO transfer function ``num(q) / den(q)``.

    The denominator is normalized to be monic.  The zero transfer function is
    stored canonically as ``0 / 1``.
    """

    __slots__ = ("num", "den")

    def __init__(self, num, den=1.0):
        num, den = _poly(num), _poly(den)
        if den.is_zero:
            raise ZeroDivisionError("transfer function denominator is identically zero")
        if num.is_zero:
            num, den = Poly([0.0]), Poly([1.0])
        else:
            scale = den.lead
            num, den = Poly(num.coeffs / scale), Poly(den.coeffs / scale)
        self.num = num
        self.den = den

    @classmethod
    def from_roots(cls, zeros=(), poles=(), gain=1.0):
        return cls(Poly.from_roots(zeros, gain), Poly.from_roots(poles))

    @classmethod
    def constant(cls, c):
        return cls([c], [1.0])

    @classmethod
    def shift(cls, k):
        """``q**k``; negative ``k`` gives a pure delay."""
        if k >= 0:
            return cls(q_power(k), [1.0])
        return cls([1.0], q_power(-k))

    @property
    def relative_degree(self):
        return self.den.degree - self.num.degree

    @property
    def advance(self):
        """Number of pure advance steps needed to make the filter proper."""
        if self.is_zero:
            return 0
        return max(0, -self.relative_degree)

    @property
    def is_proper(self):
        return self.advance == 0

    @property
    def is_zero(self):
        return self.num.is_zero

    def __call__(self, z):
        return self.num(z) / self.den(z)

    def causal_coeffs(self):
        """Return ``(b, a, k)`` with ``self = q**k * B(q^-1) / A(q^-1)``.

        ``b`` and ``a`` are in the ``scipy.signal.lfilter`` convention.
        """
        n, d = self.num.coeffs, self.den.coeffs
        rel = self.relative_degree
        if self.is_zero:
            return np.zeros(1), np.ones(1), 0
        if rel >= 0:
            return np.r_[np.zeros(rel), n], d.copy(), 0
        return n.copy(), np.r_[d, np.zeros(-rel)], -rel

    def __mul__(self, other):
        other = _tf(other)
        return RationalTF(self.num * other.num, self.den * other.den)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _tf(other)
        if other.is_zero:
            raise ZeroDivisionError("division by the zero transfer function")
        return RationalTF(self.num * other.den, self.den * other.num)

    def __rtruediv__(self, other):
        return _tf(other) / self

    def __add__(self, other):
        other = _tf(other)
        return RationalTF(self.num * other.den + other.num * self.den, self.den * other.den)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-_tf(other))

    def __rsub__(self, other):
        return _tf(other) - self

    def __neg__(self):
        return RationalTF(-self.num, self.den)

    def __eq__(self, other):
        if not isinstance(other, RationalTF):
            return NotImplemented
        return self.num == other.num and self.den == other.den

    def __hash__(self):
        return hash((self.num, self.den))

    def __repr__(self):
        return f"RationalTF(num={self.num.coeffs.tolist()}, den={self.den.coeffs.tolist()})"


def _tf(x):
    if isinstance(x, RationalTF):
        return x
    if isinstance(x, Poly):
        return RationalTF(x, [1.0])
    return RationalTF.constant(float(x))


CLUSTER_RADIUS = 1e-4


def _root_clusters(roots, radius=CLUSTER_RADIUS):
    """Group roots closer than ``radius`` (single linkage) into (center, multiplicity).

    Repeated roots come back from the eigenvalue solver split by roughly
    ``eps**(1/k)``; their mean is accurate.
    """
    n = len(roots)
    label = list(range(n))

    def find(i):
        while label[i] != i:
            label[i] = label[label[i]]
            i = label[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(roots[i] - roots[j]) < radius:
                label[find(i)] = find(j)
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(roots[i])
    out = []
    for members in groups.values():
        c = complex(np.mean(members))
        if abs(c.imag) < radius:
            c = complex(c.real, 0.0)
        out.append((c, len(members)))
    return out


def _common_factor(num, den, tol):
    """Monic polynomial holding the roots shared by ``num`` and ``den``."""
    cn = _root_clusters(np.roots(num))
    cd = _root_clusters(np.roots(den))
    used = [0] * len(cd)
    factor = np.ones(1)
    for zc, kn in cn:
        if zc.imag < 0:
            continue
        for j, (wc, kd) in enumerate(cd):
            k = min(kn, kd - used[j])
            if k > 0 and abs(zc - wc) < tol:
                c = 0.5 * (zc + wc)
                if c.imag == 0.0:
                    f1 = np.array([1.0, -c.real])
                else:
                    f1 = np.array([1.0, -2.0 * c.real, abs(c) ** 2])
                for _ in range(k):
                    factor = np.convolve(factor, f1)
                used[j] += k
                kn -= k
                if kn == 0:
                    break
    return factor


def _strip_trailing_zeros(num, den):
    j = 0
    while j < min(len(num), len(den)) - 1 and num[-1 - j] == 0 and den[-1 - j] == 0:
        j += 1
    return (num[:len(num) - j], den[:len(den) - j]) if j else (num, den)


def tf_simplify(f, tol=CANCEL_TOL):
    """Cancel roots common to numerator and denominator.

    Roots closer than ``tol`` are cancelled pairwise (clusters of numerically
    split repeated roots count with their multiplicity).  Common factors are
    removed by polynomial deflation.  A coprime ``f`` is returned unchanged.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    f = _tf(f)
    if f.is_zero:
        return f
    num, den = _strip_trailing_zeros(f.num.coeffs, f.den.coeffs)
    changed = len(num) != len(f.num.coeffs)
    if len(num) > 1 and len(den) > 1:
        factor = _common_factor(num, den, tol)
        if len(factor) > 1:
            num, _ = np.polydiv(num, factor)
            den, _ = np.polydiv(den, factor)
            changed = True
    return RationalTF(num, den) if changed else f


def characteristic_polynomial(G, C):
    """``den(G) den(C) + num(G) num(C)``, without any cancellation."""
    return G.den * C.den + G.num * C.num


def closed_loop_poles(G, C):
    """Roots of the characteristic polynomial of the unity-feedback loop (G, C)."""
    return characteristic_polynomial(G, C).roots()


def tf_feedback(G, C, tol=CANCEL_TOL):
    """Complementary sensitivity and sensitivity of the loop ``(G, C)``.

    Returns
    -------
    T, S : RationalTF
        ``G C / (1 + G C)`` and ``1 / (1 + G C)``, simplified.
    """
    G, C = _tf(G), _tf(C)
    char = characteristic_polynomial(G, C)
    if char.is_zero:
        raise AlgebraicLoopError("1 + G C is identically zero")
    T = tf_simplify(RationalTF(G.num * C.num, char), tol)
    S = tf_simplify(RationalTF(G.den * C.den, char), tol)
    return T, S


def filter_seq(f, x, policy=ZERO_PAD):
    """Apply ``f(q)`` to the finite sequence ``x`` with zero initial conditions.

    An improper ``f`` is factored as ``q**k * f_proper``; the advance reads
    ``k`` samples past the end of the record.  With ``policy="zeropad"`` those
    samples are taken as zero, with ``policy="truncate"`` the last ``k``
    outputs are set to NaN.
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("cannot filter an empty sequence")
    if policy not in (ZERO_PAD, TRUNCATE):
        raise ValueError(f"unknown boundary policy {policy!r}")
    f = _tf(f)
    if f.is_zero:
        return np.zeros_like(x)
    b, a, k = f.causal_coeffs()
    if k == 0:
        return signal.lfilter(b, a, x)
    out = signal.lfilter(b, a, np.r_[x, np.zeros(k)])[k:]
    if policy == TRUNCATE:
        out[max(0, x.size - k):] = np.nan
    return out


def impulse_response(f, n, with_offset=False):
    """First ``n`` Markov parameters of ``f``.

    For an improper ``f`` with advance ``k`` the returned array starts at lag
    ``-k``; pass ``with_offset=True`` to also receive ``k``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    f = _tf(f)
    b, a, k = f.causal_coeffs()
    imp = np.zeros(n)
    imp[0] = 1.0
    h = signal.lfilter(b, a, imp)
    return (h, k) if with_offset else h


def poles(f, tol=CANCEL_TOL):
    """Poles of ``f`` after cancellation, via companion-matrix eigenvalues."""
    return tf_simplify(_tf(f), tol).den.roots()


def zeros(f, tol=CANCEL_TOL):
    return tf_simplify(_tf(f), tol).num.roots()


def is_stable(f, margin=STABILITY_MARGIN):
    """True iff every pole of ``f`` lies strictly inside ``|q| < 1 - margin``."""
    if not 0 <= margin < 0.1:
        raise ValueError("margin must lie in [0, 0.1)")
    p = poles(f)
    return bool(np.all(np.abs(p) < 1.0 - margin))


def roots_stable(roots, margin=STABILITY_MARGIN):
    return bool(np.all(np.abs(np.asarray(roots)) < 1.0 - margin))
