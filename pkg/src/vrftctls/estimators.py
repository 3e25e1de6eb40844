"""OLS, repeated-experiment IV and constrained total least squares (CTLS).

The CTLS estimate minimizes, over rho,

    [rho; -1]' [Phi u]' (Gamma K^-1 Gamma')^-1 [Phi u] [rho; -1]

with ``Gamma = sum_i rho_i P_i - P_{m+1}`` and ``K = sum_i P_i' P_i``, where
the ``P_i`` are Toeplitz realizations of the filters through which a single
noise source enters each column of ``[Phi u]``.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .optim import OptimOptions, nelder_mead
from .sig_sim import LoopMode
from .tf_algebra import RationalTF, impulse_response, tf_simplify

OLS, IV, CTLS = "ols", "iv", "ctls"
METHODS = (OLS, IV, CTLS)

DEFAULT_JITTER = 1e-10
JITTER_RETRIES = 3
JITTER_GROWTH = 100.0


class RankDeficientError(np.linalg.LinAlgError):
    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(f"regressor matrix is rank deficient; dependent columns: {self.columns}")


class SingularInstrumentError(np.linalg.LinAlgError):
    pass


class CtlsConditioningError(np.linalg.LinAlgError):
    def __init__(self, what, diagnostics):
        self.diagnostics = diagnostics
        super().__init__(f"Cholesky of {what} failed after jitter escalation: {diagnostics}")


class EstimationError(RuntimeError):
    def __init__(self, message, best_x=None):
        super().__init__(message)
        self.best_x = best_x


@dataclass(frozen=True)
class EstimateResult:
    rho_hat: np.ndarray
    method: str
    cost: float
    iterations: int = 0
    converged: bool = True


def ols_estimate(reg, rcond=1e-10):
    """Least squares via pivoted QR; ``cost`` is the mean squared residual."""
    Phi, u = reg.Phi, reg.u_vec
    Q, R, piv = sla.qr(Phi, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    rank = int(np.sum(d > rcond * d[0])) if d.size and d[0] > 0 else 0
    if rank < Phi.shape[1]:
        raise RankDeficientError(sorted(int(j) for j in piv[rank:]))
    z = sla.solve_triangular(R, Q.T @ u)
    rho = np.empty_like(z)
    rho[piv] = z
    res = Phi @ rho - u
    return EstimateResult(rho, OLS, float(res @ res / len(u)))


def iv_estimate(reg1, reg2, rcond=1e-12):
    """``rho = (Phi1' Phi2)^-1 Phi1' u2`` from two experiments with the same excitation."""
    A = reg1.Phi.T @ reg2.Phi
    s = np.linalg.svd(A, compute_uv=False)
    if s[-1] <= rcond * s[0]:
        raise SingularInstrumentError(f"Phi1' Phi2 is singular (cond = {s[0] / max(s[-1], 1e-300):.3g})")
    rho = np.linalg.solve(A, reg1.Phi.T @ reg2.u_vec)
    res = reg2.Phi @ rho - reg2.u_vec
    return EstimateResult(rho, IV, float(res @ res / len(res)))


def build_ctls_filters(mode, L_F, C0, structure):
    """Noise filters F_1..F_{m+1} for the CTLS constraint.

    Closed loop: ``-L_F q^-(i-1)`` (i <= n_b), ``-C0 q^-(i-n_b)`` (i <= m),
    ``C0`` (i = m+1).  Open loop: ``-L_F q^-(i-1)`` (i <= n_b), zero otherwise.
    """
    mode = LoopMode(mode)
    if mode == LoopMode.CLOSED and C0 is None:
        raise ValueError("closed-loop filter bank requires the controller C0")
    nb, m = structure.n_b, structure.m
    filters = [tf_simplify(-L_F * RationalTF.shift(-i)) for i in range(nb)]
    if mode == LoopMode.CLOSED:
        filters += [tf_simplify(-C0 * RationalTF.shift(-j)) for j in range(1, structure.n_a + 1)]
        filters.append(C0)
    else:
        filters += [RationalTF([0.0])] * (m + 1 - nb)
    return filters


def _fir_taps(F):
    """Tap vector and advance of ``F`` when it is FIR, else ``None``."""
    b, a, k = F.causal_coeffs()
    if np.any(a[1:] != 0):
        return None
    return b / a[0], k


def toeplitz_from_filter(F, N, sparse=False):
    """N x N Toeplitz matrix P with ``P @ v == filter_seq(F, v)`` (zero padding).

    Advance taps of an improper ``F`` land on the superdiagonals.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if F.is_zero:
        return sp.csr_matrix((N, N)) if sparse else np.zeros((N, N))
    fir = _fir_taps(F)
    if sparse and fir is not None:
        taps, k = fir
        offs, vals = [], []
        for j, c in enumerate(taps):
            if c != 0 and abs(k - j) < N:
                offs.append(k - j)
                vals.append(c)
        return sp.diags(vals, offs, shape=(N, N), format="csr")
    k = F.advance
    h = impulse_response(F, N + k)
    col = h[k:k + N]
    row = np.zeros(N)
    lead = h[k::-1][:N]
    row[:lead.size] = lead
    P = sla.toeplitz(col, row)
    return sp.csr_matrix(P) if sparse else P


def _lower_toeplitz_sparse(taps, N):
    offs = [-j for j in range(len(taps)) if taps[j] != 0 and j < N]
    return sp.diags([taps[-o] for o in offs], offs, shape=(N, N), format="csr")


@dataclass(eq=False)
class FilterBank:
    """Filters F_i and their Toeplitz matrices, rows limited to the regression window."""

    mode: LoopMode
    filters: list
    n: int
    n_drop: int = 0

    @property
    def rows(self):
        return self.n - self.n_drop

    @cached_property
    def P(self):
        return [toeplitz_from_filter(F, self.n)[: self.rows] for F in self.filters]

    @cached_property
    def structured(self):
        """Sparse ``P_i T(d)`` for a common causal denominator ``d``, or None.

        With ``v = T(d) z`` every IIR filter becomes FIR, so the CTLS problem
        can be posed over ``z`` with banded matrices and the same optimum.
        """
        n = self.n
        dens = []
        parts = []
        for F in self.filters:
            if F.is_zero:
                parts.append(None)
                continue
            b, a, k = F.causal_coeffs()
            a = np.trim_zeros(a, "b")
            if len(a) > 1 and k > 0:
                return None
            idx = None
            if len(a) > 1:
                for i, d in enumerate(dens):
                    if d.shape == a.shape and np.allclose(d, a, rtol=0, atol=1e-14):
                        idx = i
                        break
                else:
                    dens.append(a)
                    idx = len(dens) - 1
            parts.append((F, b, idx))
        d_all = np.ones(1)
        for d in dens:
            d_all = np.convolve(d_all, d)
        Td = _lower_toeplitz_sparse(d_all, n)
        out = []
        for part in parts:
            if part is None:
                out.append(sp.csr_matrix((self.rows, n)))
                continue
            F, b, idx = part
            if idx is None:
                Pt = toeplitz_from_filter(F, n, sparse=True) @ Td
            else:
                quot = np.ones(1)
                for i, d in enumerate(dens):
                    if i != idx:
                        quot = np.convolve(quot, d)
                Pt = _lower_toeplitz_sparse(np.convolve(b, quot), n)
            out.append(sp.csr_matrix(Pt)[: self.rows])
        return out


def build_filter_bank(mode, L_F, C0, structure, n, n_drop=0):
    return FilterBank(LoopMode(mode), build_ctls_filters(mode, L_F, C0, structure), n, n_drop)


def _cholesky_jittered(A, jitter, what):
    n = A.shape[0]
    scale = np.trace(A) / n
    if not np.isfinite(scale) or scale <= 0:
        raise CtlsConditioningError(what, {"mean_diag": scale})
    eps = jitter
    for _ in range(JITTER_RETRIES + 1):
        try:
            return sla.cholesky(A + eps * scale * np.eye(n), lower=True)
        except np.linalg.LinAlgError:
            eps = max(eps, 1e-16) * JITTER_GROWTH
    raise CtlsConditioningError(what, {"mean_diag": scale, "last_jitter": eps / JITTER_GROWTH,
                                       "min_diag": float(np.min(np.diag(A)))})


@dataclass(eq=False)
class CtlsProblem:
    Phi: np.ndarray
    u_vec: np.ndarray
    bank: FilterBank
    jitter: float = DEFAULT_JITTER
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.jitter < 0:
            raise ValueError("jitter must be >= 0")
        rows, m = self.Phi.shape
        if len(self.u_vec) != rows or rows != self.bank.rows:
            raise ValueError("Phi, u_vec and filter bank windows disagree")
        if len(self.bank.filters) != m + 1:
            raise ValueError(f"filter bank needs {m + 1} filters, has {len(self.bank.filters)}")

    @classmethod
    def from_regressors(cls, reg, bank, jitter=DEFAULT_JITTER):
        return cls(reg.Phi, reg.u_vec, bank, jitter)

    @property
    def m(self):
        return self.Phi.shape[1]

    def residual(self, rho):
        return self.Phi @ rho - self.u_vec

    def gamma(self, rho):
        """Dense ``Gamma = sum_i rho_i P_i - P_{m+1}``."""
        P = self.bank.P
        G = -P[-1].copy()
        for ri, Pi in zip(rho, P[:-1]):
            G += ri * Pi
        return G

    @property
    def K(self):
        if "K" not in self._cache:
            self._cache["K"] = sum(Pi.T @ Pi for Pi in self.bank.P)
        return self._cache["K"]

    @property
    def K_factor(self):
        if "K_chol" not in self._cache:
            self._cache["K_chol"] = _cholesky_jittered(self.K, self.jitter, "K")
        return self._cache["K_chol"]

    @property
    def structured(self):
        if "kkt" not in self._cache:
            Pt = self.bank.structured
            if Pt is None:
                self._cache["kkt"] = None
            else:
                Kt = sum((Pi.T @ Pi for Pi in Pt), sp.csr_matrix((self.bank.n, self.bank.n)))
                self._cache["kkt"] = (Pt, sp.csc_matrix(Kt))
        return self._cache["kkt"]


def ctls_cost(rho, prob):
    """CTLS objective by two Cholesky factorizations (no explicit inverses).

    ``Gamma K^-1 Gamma' = W' W`` with ``W = L_K^-1 Gamma'``; the outer matrix
    is factored after a trace-scaled jitter.
    """
    rho = np.asarray(rho, dtype=float)
    W = sla.solve_triangular(prob.K_factor, prob.gamma(rho).T, lower=True)
    L = _cholesky_jittered(W.T @ W, prob.jitter, "Gamma K^-1 Gamma'")
    z = sla.solve_triangular(L, prob.residual(rho), lower=True)
    return float(z @ z)


def ctls_cost_kkt(rho, prob):
    """CTLS objective from the sparse saddle-point system.

    Solves ``[K G'; G 0][z; lam] = [0; r]`` so that the cost is ``-r' lam``.
    Returns ``inf`` if the system is singular.
    """
    st = prob.structured
    if st is None:
        raise ValueError("filter bank has no banded realization; use ctls_cost")
    Pt, Kt = st
    rho = np.asarray(rho, dtype=float)
    G = -Pt[-1]
    for ri, Pi in zip(rho, Pt[:-1]):
        G = G + ri * Pi
    A = sp.bmat([[Kt, G.T], [G, None]], format="csc")
    r = prob.residual(rho)
    n = Kt.shape[0]
    try:
        sol = spla.splu(A).solve(np.r_[np.zeros(n), r])
    except RuntimeError:
        return np.inf
    val = -float(r @ sol[n:])
    return val if np.isfinite(val) else np.inf


def ctls_estimate(prob, rho0, opts=None, solver="auto"):
    """Minimize the CTLS objective with Nelder-Mead from ``rho0``.

    ``solver`` picks the cost evaluation: ``"dense"``, ``"kkt"`` or
    ``"auto"`` (banded saddle-point when the bank allows it).
    """
    rho0 = np.asarray(rho0, dtype=float).ravel()
    if not np.all(np.isfinite(rho0)):
        raise ValueError("rho0 must be finite")
    if solver == "auto":
        solver = "kkt" if prob.structured is not None else "dense"
    cost = {"dense": ctls_cost, "kkt": ctls_cost_kkt}[solver]

    def objective(rho):
        try:
            return cost(rho, prob)
        except np.linalg.LinAlgError:
            return np.inf

    try:
        res = nelder_mead(objective, rho0, opts or OptimOptions())
    except ValueError as exc:
        raise EstimationError(f"CTLS optimization failed: {exc}", best_x=rho0) from exc
    return EstimateResult(res.x, CTLS, res.fun, res.nit, res.converged)
