"""Slice of the CTLS cost and of the least-squares residual along a line in parameter space.

The least-squares residual is minimized away from the ideal parameters;
the CTLS cost is not.
"""

import numpy as np

from vrftctls import load_config
from vrftctls.estimators import CtlsProblem, build_filter_bank, ctls_cost_kkt, ols_estimate
from vrftctls.sig_sim import prbs, simulate_closed_loop
from vrftctls.vrft_core import build_lf, ideal_parameters, vrft_regressors

cfg = load_config("closed_loop")
s = cfg.structure
rho_d = ideal_parameters(cfg.plant, cfg.reference_model, s)

r = prbs(cfg.n_samples, cfg.master_seed)
data = simulate_closed_loop(cfg.plant, cfg.c0, cfg.noise, r, seed=3)
reg = vrft_regressors(data.y, data.u, cfg.reference_model, s, drop_boundary=True)
bank = build_filter_bank(cfg.loop_mode, build_lf(cfg.reference_model, s.C_F), cfg.c0, s,
                         cfg.n_samples, reg.n_dropped)
prob = CtlsProblem.from_regressors(reg, bank)
rho_ls = ols_estimate(reg).rho_hat

# t = 0 is the ideal vector, t = 1 the least-squares estimate
print("   t    LS residual    CTLS cost")
for t in np.linspace(-0.25, 1.25, 13):
    rho = rho_d + t * (rho_ls - rho_d)
    res = reg.Phi @ rho - reg.u_vec
    print(f"{t:5.2f}  {res @ res:12.4f}  {ctls_cost_kkt(rho, prob):11.4f}")
