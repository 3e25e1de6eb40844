import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tests.oracles import RHO_D, brute_force_cost, random_ctls_problem
from vrftctls.estimators import (
    CtlsConditioningError,
    CtlsProblem,
    EstimationError,
    FilterBank,
    RankDeficientError,
    SingularInstrumentError,
    build_ctls_filters,
    build_filter_bank,
    ctls_cost,
    ctls_cost_kkt,
    ctls_estimate,
    iv_estimate,
    ols_estimate,
    toeplitz_from_filter,
)
from vrftctls.sig_sim import LoopMode, NoiseSpec, prbs, simulate_closed_loop, simulate_open_loop, white_noise
from vrftctls.tf_algebra import RationalTF, filter_seq, tf_feedback
from vrftctls.vrft_core import ControllerStructure, RegressorSet, build_lf, vrft_regressors


def _reg(Phi, u, structure):
    return RegressorSet(Phi, u, np.zeros(len(u)), structure)


def _bf(rho, prob):
    return brute_force_cost(rho, prob.Phi, prob.u_vec, prob.bank.P, prob.jitter)


def test_ols_matches_lstsq(structure):
    rng = np.random.default_rng(0)
    Phi, u = rng.standard_normal((100, 5)), rng.standard_normal(100)
    est = ols_estimate(_reg(Phi, u, structure))
    ref, *_ = np.linalg.lstsq(Phi, u, rcond=None)
    assert np.allclose(est.rho_hat, ref, atol=1e-12)
    assert est.cost == pytest.approx(np.mean((Phi @ ref - u) ** 2))


def test_ols_rank_deficiency_names_columns(structure):
    rng = np.random.default_rng(0)
    Phi = rng.standard_normal((50, 5))
    Phi[:, 3] = 2 * Phi[:, 1]
    with pytest.raises(RankDeficientError) as exc:
        ols_estimate(_reg(Phi, rng.standard_normal(50), structure))
    assert len(exc.value.columns) == 1 and exc.value.columns[0] in (1, 3)


def test_iv_matches_normal_equations(structure):
    rng = np.random.default_rng(1)
    P1, P2 = rng.standard_normal((2, 80, 5))
    u2 = rng.standard_normal(80)
    est = iv_estimate(_reg(P1, rng.standard_normal(80), structure), _reg(P2, u2, structure))
    assert np.allclose(est.rho_hat, np.linalg.inv(P1.T @ P2) @ P1.T @ u2)
    P2[:, 0] = 0
    with pytest.raises(SingularInstrumentError):
        iv_estimate(_reg(P1, u2, structure), _reg(P2, u2, structure))


@pytest.mark.parametrize("mode", [LoopMode.OPEN, LoopMode.CLOSED])
def test_toeplitz_matches_filtering(mode, ref_model, structure, c0):
    L_F = build_lf(ref_model, structure.C_F)
    rng = np.random.default_rng(2)
    for F in build_ctls_filters(mode, L_F, c0, structure):
        P = toeplitz_from_filter(F, 120)
        Ps = toeplitz_from_filter(F, 120, sparse=True).toarray()
        for _ in range(3):
            v = rng.standard_normal(120)
            assert np.max(np.abs(P @ v - filter_seq(F, v))) <= 1e-10
            assert np.max(np.abs(Ps @ v - filter_seq(F, v))) <= 1e-10


def test_filter_bank_shapes(ref_model, structure, c0):
    L_F = build_lf(ref_model, structure.C_F)
    ol = build_ctls_filters(LoopMode.OPEN, L_F, None, structure)
    assert len(ol) == 6 and all(F.is_zero for F in ol[3:])
    bank = build_filter_bank(LoopMode.CLOSED, L_F, c0, structure, 40, n_drop=1)
    assert all(P.shape == (39, 40) for P in bank.P)
    with pytest.raises(ValueError):
        build_ctls_filters(LoopMode.CLOSED, L_F, None, structure)


def _noise_filters_problem(mode, plant, ref_model, noise_tf, structure, c0, n=300):
    """Noisy data with the realized output noise w, for the exact residual identity."""
    L_F = build_lf(ref_model, structure.C_F)
    sig = NoiseSpec(noise_tf, 0.01)
    x = prbs(n, 5)
    if mode == LoopMode.OPEN:
        data = simulate_open_loop(plant, sig, x, 9)
        w = filter_seq(noise_tf, white_noise(n, 0.01, 9))
    else:
        data = simulate_closed_loop(plant, c0, sig, x, 9)
        w = data.y - filter_seq(tf_feedback(plant, c0)[0], x)
    reg = vrft_regressors(data.y, data.u, ref_model, structure, drop_boundary=True)
    bank = build_filter_bank(mode, L_F, c0, structure, n, reg.n_dropped)
    return CtlsProblem.from_regressors(reg, bank), w


@pytest.mark.parametrize("mode", [LoopMode.OPEN, LoopMode.CLOSED])
def test_residual_at_ideal_parameters_is_filtered_noise(mode, plant, ref_model, noise_tf, structure, c0):
    # r(rho_d) = -Gamma(rho_d) w: the filters describe how the output noise enters the regression
    prob, w = _noise_filters_problem(mode, plant, ref_model, noise_tf, structure, c0)
    r = prob.residual(RHO_D)
    pred = -prob.gamma(RHO_D) @ w
    skip = structure.n_b  # zero-prefixed delayed columns differ from Toeplitz rows at the start
    assert np.max(np.abs(r[skip:] - pred[skip:])) < 1e-9 * max(1.0, np.max(np.abs(r)))


def test_dense_and_kkt_costs_agree(plant, ref_model, noise_tf, structure, c0):
    for mode in (LoopMode.OPEN, LoopMode.CLOSED):
        prob, _ = _noise_filters_problem(mode, plant, ref_model, noise_tf, structure, c0, n=150)
        for rho in (RHO_D, 0.8 * RHO_D, RHO_D + 0.05):
            bf = _bf(rho, prob)
            assert ctls_cost(rho, prob) == pytest.approx(bf, rel=1e-6)
            assert ctls_cost_kkt(rho, prob) == pytest.approx(bf, rel=1e-6)


def test_cost_vanishes_on_noise_free_data(plant, ref_model, noise_tf, structure):
    u = prbs(200, 1)
    data = simulate_open_loop(plant, NoiseSpec(noise_tf, 0.0), u, 0)
    reg = vrft_regressors(data.y, data.u, ref_model, structure, drop_boundary=True)
    L_F = build_lf(ref_model, structure.C_F)
    prob = CtlsProblem.from_regressors(reg, build_filter_bank(LoopMode.OPEN, L_F, None, structure, 200, 1))
    assert ctls_cost(RHO_D, prob) < 1e-18
    assert ctls_cost(0.8 * RHO_D, prob) > 1e-3
    est = ctls_estimate(prob, 0.8 * RHO_D)
    assert est.converged and np.max(np.abs(est.rho_hat - RHO_D)) < 1e-4


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 10.0), st.sampled_from([1.0, -1.0]))
def test_cost_invariant_to_common_filter_scaling(seed, c, sign):
    bank, Phi, u, rho = random_ctls_problem(np.random.default_rng(seed), 30, 3)
    scaled = FilterBank(bank.mode, [F * RationalTF.constant(sign * c) for F in bank.filters], bank.n)
    a = ctls_cost(rho, CtlsProblem(Phi, u, bank, jitter=0.0))
    b = ctls_cost(rho, CtlsProblem(Phi, u, scaled, jitter=0.0))
    assert b == pytest.approx(a, rel=1e-8)


@pytest.mark.parametrize("jitter", [0.0, 1e-10])
def test_random_banks_dense_vs_kkt_vs_brute_force(jitter):
    rng = np.random.default_rng(7)
    for _ in range(10):
        bank, Phi, u, rho = random_ctls_problem(rng, 40, 4)
        prob = CtlsProblem(Phi, u, bank, jitter=jitter)
        assert ctls_cost(rho, prob) == pytest.approx(_bf(rho, prob), rel=1e-8)
        # the saddle-point form carries no regularization
        exact = brute_force_cost(rho, Phi, u, bank.P)
        assert ctls_cost_kkt(rho, prob) == pytest.approx(exact, rel=1e-8)


def test_singular_inner_matrix_raises_with_diagnostics():
    bank, Phi, u, _ = random_ctls_problem(np.random.default_rng(3), 20, 2)
    # every filter equal and rho summing to one: Gamma = 0
    same = FilterBank(bank.mode, [bank.filters[0]] * 3, 20)
    prob = CtlsProblem(Phi[:, :2], u, same)
    with pytest.raises(CtlsConditioningError) as exc:
        ctls_cost(np.array([0.5, 0.5]), prob)
    assert exc.value.diagnostics


def test_problem_validation(structure):
    bank = FilterBank(LoopMode.CLOSED, [RationalTF.constant(1.0)] * 6, 10)
    with pytest.raises(ValueError):
        CtlsProblem(np.zeros((9, 5)), np.zeros(9), bank)
    with pytest.raises(ValueError):
        CtlsProblem(np.zeros((10, 4)), np.zeros(10), bank)


def test_non_finite_start_is_estimation_error(structure):
    rng = np.random.default_rng(0)
    bank = FilterBank(LoopMode.CLOSED, [RationalTF.constant(1.0)] * 6, 10)
    prob = CtlsProblem(rng.standard_normal((10, 5)), rng.standard_normal(10), bank)
    with pytest.raises(ValueError):
        ctls_estimate(prob, [np.nan] * 5)
    # Gamma vanishes at rho = (1, 0, 0, 0, 0) = rho where sum rho_i - 1 = 0
    with pytest.raises(EstimationError):
        ctls_estimate(prob, [1.0, 0, 0, 0, 0], solver="dense")
