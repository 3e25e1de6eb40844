import numpy as np
import pytest
import scipy.signal as sig
from hypothesis import given, settings
from hypothesis import strategies as st

from vrftctls.tf_algebra import (
    TRUNCATE,
    AlgebraicLoopError,
    Poly,
    RationalTF,
    characteristic_polynomial,
    filter_seq,
    impulse_response,
    is_stable,
    poles,
    tf_feedback,
    tf_simplify,
    zeros,
)

coef = st.floats(-2, 2, allow_nan=False).filter(lambda c: abs(c) > 1e-3)
root = st.floats(-0.95, 0.95, allow_nan=False)


def random_tf(rng, nz, np_, gain=1.0):
    return RationalTF.from_roots(rng.uniform(-0.9, 0.9, nz), rng.uniform(-0.9, 0.9, np_), gain)


def test_poly_trims_and_evaluates():
    p = Poly([0.0, 0.0, 2.0, -1.0])
    assert p.degree == 1 and p(3.0) == 5.0
    assert Poly([0.0]).is_zero and Poly([]).is_zero


def test_den_is_monic_and_zero_den_rejected():
    f = RationalTF([2.0, 1.0], [4.0, -2.0])
    assert f.den.lead == 1.0
    assert f(2.0) == pytest.approx(5.0 / 6.0)
    with pytest.raises(ZeroDivisionError):
        RationalTF([1.0], [0.0])


def test_relative_degree_and_advance():
    L = RationalTF([6.25, -2.25], [1.0])
    assert L.relative_degree == -1 and L.advance == 1 and not L.is_proper
    G = RationalTF.from_roots([0.8], [0.7, 0.9], 0.5)
    assert G.relative_degree == 1 and G.is_proper and G.advance == 0


@settings(max_examples=60, deadline=None)
@given(st.lists(coef, min_size=1, max_size=4), st.lists(coef, min_size=1, max_size=4),
       st.lists(coef, min_size=1, max_size=4), st.lists(coef, min_size=1, max_size=4),
       st.complex_numbers(min_magnitude=0.5, max_magnitude=2.0, allow_nan=False, allow_infinity=False))
def test_arithmetic_matches_pointwise_evaluation(n1, d1, n2, d2, z):
    f, g = RationalTF(n1, d1), RationalTF(n2, d2)
    vals = [f(z), g(z)]
    if any(abs(v) > 1e6 for v in vals):
        return
    for h, expect in ((f * g, vals[0] * vals[1]), (f + g, vals[0] + vals[1]), (f - g, vals[0] - vals[1])):
        assert h(z) == pytest.approx(expect, rel=1e-8, abs=1e-8)
    if not g.is_zero and abs(vals[1]) > 1e-6:
        assert (f / g)(z) == pytest.approx(vals[0] / vals[1], rel=1e-8, abs=1e-8)


def test_simplify_cancels_common_roots_and_keeps_others():
    f = RationalTF.from_roots([0.5, 0.2], [0.5, 0.9, -0.3], 2.0)
    s = tf_simplify(f)
    assert s.num.degree == 1 and s.den.degree == 2
    for z in (1.3, -0.7 + 0.4j):
        assert s(z) == pytest.approx(f(z))
    g = RationalTF.from_roots([0.5], [0.6])
    assert tf_simplify(g) == g


def test_simplify_handles_repeated_roots_and_exact_zeros():
    f = RationalTF.from_roots([0.6, 0.6, 0.0], [0.6, 0.6, 0.0, 0.3])
    s = tf_simplify(f)
    assert s.num.degree == 0 and s.den.degree == 1
    assert np.allclose(s.den.coeffs, [1.0, -0.3])


@settings(max_examples=40, deadline=None)
@given(st.lists(root, min_size=0, max_size=3), st.lists(root, min_size=1, max_size=3),
       st.lists(root, min_size=1, max_size=2))
def test_simplify_preserves_values(zs, ps, common):
    f = RationalTF.from_roots(zs + common, ps + common, 1.5)
    s = tf_simplify(f)
    for z in (1.7, -1.9, 0.3 + 1.4j):
        assert s(z) == pytest.approx(f(z), rel=1e-6)


def test_filter_seq_matches_lfilter():
    rng = np.random.default_rng(0)
    f = random_tf(rng, 2, 3, 0.7)
    x = rng.standard_normal(300)
    b = np.r_[np.zeros(f.den.degree - f.num.degree), f.num.coeffs]
    ref = sig.lfilter(b, f.den.coeffs, x)
    assert np.allclose(filter_seq(f, x), ref, atol=1e-12)


def test_improper_filter_zero_pad_and_truncate():
    L = RationalTF([6.25, -2.25], [1.0])
    x = np.arange(1.0, 6.0)
    y = filter_seq(L, x)
    expect = 6.25 * np.r_[x[1:], 0.0] - 2.25 * x
    assert np.allclose(y, expect)
    t = filter_seq(L, x, TRUNCATE)
    assert np.isnan(t[-1]) and np.allclose(t[:-1], expect[:-1])


def test_filter_seq_rejects_empty():
    with pytest.raises(ValueError):
        filter_seq(RationalTF([1.0], [1.0]), np.array([]))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_filter_seq_is_linear(seed):
    rng = np.random.default_rng(seed)
    f = random_tf(rng, 1, 2)
    x1, x2 = rng.standard_normal((2, 50))
    a, b = rng.standard_normal(2)
    assert np.allclose(filter_seq(f, a * x1 + b * x2), a * filter_seq(f, x1) + b * filter_seq(f, x2),
                       atol=1e-10)


def test_impulse_response_matches_scipy_dimpulse():
    G = RationalTF.from_roots([0.8], [0.7, 0.9], 0.5)
    h = impulse_response(G, 40)
    _, (ref,) = sig.dimpulse((G.num.coeffs, G.den.coeffs, 1), n=40)
    assert np.allclose(h, ref.ravel(), atol=1e-14)


def test_impulse_response_of_improper_filter_starts_at_negative_lag():
    L = RationalTF([6.25, -2.25], [1.0])
    h, k = impulse_response(L, 4, with_offset=True)
    assert k == 1 and np.allclose(h, [6.25, -2.25, 0.0, 0.0])


def test_poles_zeros_and_stability():
    G = RationalTF.from_roots([0.8], [0.7, 0.9], 0.5)
    assert np.allclose(np.sort(poles(G).real), [0.7, 0.9])
    assert np.allclose(zeros(G).real, [0.8])
    assert is_stable(G)
    assert not is_stable(RationalTF([1.0], [1.0, -1.0]))
    assert not is_stable(RationalTF([1.0], [1.0, -1.2]))
    with pytest.raises(ValueError):
        is_stable(G, margin=0.5)


def test_feedback_identities(plant, c0):
    T, S = tf_feedback(plant, c0)
    for z in (1.1, 0.2 + 1.3j, -2.0):
        L = plant(z) * c0(z)
        assert T(z) == pytest.approx(L / (1 + L))
        assert S(z) == pytest.approx(1 / (1 + L))
        assert T(z) + S(z) == pytest.approx(1.0)
    assert is_stable(T) and is_stable(S)


def test_feedback_characteristic_polynomial_has_no_cancellation(plant, c0):
    # plant poles cancel against controller zeros; they must stay in the loop polynomial
    chi = characteristic_polynomial(plant, c0)
    r = np.roots(chi.coeffs)
    assert chi.degree == 4
    assert np.min(np.abs(r - 0.7)) < 1e-6 and np.min(np.abs(r - 0.9)) < 1e-6


def test_feedback_algebraic_loop():
    with pytest.raises(AlgebraicLoopError):
        tf_feedback(RationalTF.constant(1.0), RationalTF.constant(-1.0))
