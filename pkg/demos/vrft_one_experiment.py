"""Tune a controller from a single open-loop experiment, with and without noise modelling."""

import numpy as np

from vrftctls import load_config
from vrftctls.estimators import CtlsProblem, build_filter_bank, ctls_estimate, ols_estimate
from vrftctls.metrics import closed_loop_cost, is_closed_loop_stable
from vrftctls.sig_sim import prbs, simulate_open_loop
from vrftctls.vrft_core import assemble_controller, build_lf, ideal_parameters, vrft_regressors

np.set_printoptions(precision=4, suppress=True)

cfg = load_config("open_loop")
G, M, s = cfg.plant, cfg.reference_model, cfg.structure

# the controller that would make the loop behave exactly like M
rho_d = ideal_parameters(G, M, s)
print("ideal parameters      ", rho_d)

u = prbs(cfg.n_samples, seed=cfg.master_seed)
data = simulate_open_loop(G, cfg.noise, u, seed=1)

reg = vrft_regressors(data.y, data.u, M, s, drop_boundary=True)
ols = ols_estimate(reg)
print("least squares         ", ols.rho_hat)

# the noisy output enters the regressors through known filters; CTLS accounts for that
L_F = build_lf(M, s.C_F)
bank = build_filter_bank(cfg.loop_mode, L_F, None, s, cfg.n_samples, reg.n_dropped)
ctls = ctls_estimate(CtlsProblem.from_regressors(reg, bank), 0.8 * rho_d)
print("CTLS                  ", ctls.rho_hat, f"({ctls.iterations} simplex iterations)")

step = np.ones(100)
for name, rho in (("ideal", rho_d), ("OLS", ols.rho_hat), ("CTLS", ctls.rho_hat)):
    C = assemble_controller(rho, s)
    if is_closed_loop_stable(C, G):
        print(f"{name:5s} step-response cost {closed_loop_cost(C, G, M, step):.3e}")
    else:
        print(f"{name:5s} unstable loop")
