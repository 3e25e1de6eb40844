"""Virtual signals, ARX regressors and controller assembly."""

from dataclasses import dataclass

import numpy as np

from .tf_algebra import ZERO_PAD, Poly, RationalTF, filter_seq, tf_simplify


class DegenerateReferenceModel(ValueError):
    """The reference model makes the virtual error vanish or is not invertible."""


@dataclass(frozen=True)
class ControllerStructure:
    """``C(q, rho) = B(q, rho) / A(q, rho) * C_F(q)``.

    ``B = b1 + b2 q^-1 + ... + b_nb q^(-nb+1)`` and
    ``A = 1 + a1 q^-1 + ... + a_na q^-na``; rho = [b..., a...].
    """

    C_F: RationalTF
    n_b: int
    n_a: int

    def __post_init__(self):
        if self.n_b < 1:
            raise ValueError("n_b must be >= 1")
        if self.n_a < 0:
            raise ValueError("n_a must be >= 0")

    @property
    def m(self):
        return self.n_b + self.n_a


@dataclass(frozen=True)
class RegressorSet:
    Phi: np.ndarray
    u_vec: np.ndarray
    ef: np.ndarray
    structure: ControllerStructure
    n_dropped: int = 0

    @property
    def n_rows(self):
        return self.Phi.shape[0]


def build_lf(M, C_F):
    """``L_F = C_F (M^-1 - 1)`` as one simplified, possibly improper, filter."""
    if M.is_zero:
        raise DegenerateReferenceModel("reference model is identically zero")
    if C_F.is_zero:
        return RationalTF([0.0])
    diff = M.den - M.num
    if diff.is_zero:
        raise DegenerateReferenceModel("M == 1 makes the virtual error identically zero")
    return tf_simplify(RationalTF(C_F.num * diff, C_F.den * M.num))


def virtual_error_input(y, L_F, policy=ZERO_PAD):
    """Input of the identified controller part, ``e_F = L_F(q) y``."""
    return filter_seq(L_F, y, policy)


def _delayed(x, j):
    if j == 0:
        return x.copy()
    return np.r_[np.zeros(j), x[:-j]]


def build_regressors(ef, u, structure, drop_last=0):
    """Assemble ``Phi = [Phi_e Phi_u]`` with zero-prefixed delayed columns.

    ``drop_last`` removes the final rows, e.g. those touched by the zero-padded
    advance of an improper ``L_F``.
    """
    ef = np.asarray(ef, dtype=float).ravel()
    u = np.asarray(u, dtype=float).ravel()
    if ef.shape != u.shape:
        raise ValueError("ef and u must have the same length")
    n = ef.size
    rows = n - drop_last
    if rows < structure.m:
        raise ValueError(f"{rows} regression rows cannot determine {structure.m} parameters")
    cols = [_delayed(ef, j) for j in range(structure.n_b)]
    cols += [-_delayed(u, j) for j in range(1, structure.n_a + 1)]
    Phi = np.column_stack(cols)[:rows]
    return RegressorSet(Phi=Phi, u_vec=u[:rows].copy(), ef=ef, structure=structure,
                        n_dropped=drop_last)


def vrft_regressors(y, u, M, structure, drop_boundary=False):
    """Convenience pipeline: L_F, virtual error input, regressors."""
    L_F = build_lf(M, structure.C_F)
    ef = virtual_error_input(y, L_F)
    return build_regressors(ef, u, structure, L_F.advance if drop_boundary else 0)


def controller_part(rho, structure):
    """The identified part ``B/A`` in powers of q."""
    rho = np.asarray(rho, dtype=float).ravel()
    if rho.size != structure.m:
        raise ValueError(f"expected {structure.m} parameters, got {rho.size}")
    b = rho[: structure.n_b]
    a = np.r_[1.0, rho[structure.n_b:]]
    num = Poly(np.r_[b, np.zeros(structure.n_a)])
    den = Poly(np.r_[a, np.zeros(structure.n_b - 1)])
    return RationalTF(num, den)


def assemble_controller(rho, structure):
    """``C = (B/A) C_F`` in powers-of-q form, simplified."""
    return tf_simplify(controller_part(rho, structure) * structure.C_F)


def ideal_controller(G, M):
    """``C_d = M / (G (1 - M))``; requires the plant."""
    return tf_simplify(RationalTF(M.num * G.den, G.num * (M.den - M.num)))


def parameters_from_controller(C, structure, tol=1e-10):
    """Inverse of :func:`assemble_controller` for a controller in the class."""
    C_I = tf_simplify(C / structure.C_F)
    if C_I.relative_degree < 0:
        raise ValueError("identified part is improper; not in the controller class")
    nd = C_I.den.degree
    b = np.r_[np.zeros(nd - C_I.num.degree), C_I.num.coeffs]
    a = C_I.den.coeffs[1:]
    b = np.trim_zeros(b, "b") if np.any(b) else b[:1]
    a = np.trim_zeros(a, "b")
    if len(b) > structure.n_b or len(a) > structure.n_a:
        raise ValueError("controller is not in the class defined by (n_b, n_a)")
    rho = np.zeros(structure.m)
    rho[: len(b)] = b
    rho[structure.n_b: structure.n_b + len(a)] = a
    return rho


def ideal_parameters(G, M, structure):
    """Ideal parameter vector rho_d computed from the true plant."""
    return parameters_from_controller(ideal_controller(G, M), structure)
